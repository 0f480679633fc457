#include "paml/svgp.hpp"

#include <cmath>

namespace paml::gp {

namespace {
constexpr double kVarianceFloor = 1e-8;
constexpr double kJitterStart = 1e-6;
constexpr double kJitterMax = 1e-2;
}  // namespace

Eigen::LLT<Matrix> chol_with_jitter(const Matrix& A, double* jitter_out) {
    double jitter = kJitterStart;
    Eigen::LLT<Matrix> llt;
    while (true) {
        Matrix J = 0.5 * (A + A.transpose());
        J.diagonal().array() += jitter;
        llt.compute(J);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            if (jitter_out) *jitter_out = jitter;
            return llt;
        }
        jitter *= 2.0;
        if (jitter > kJitterMax)
            throw numerical_error("cholesky failed after jitter ladder (max 1e-2)");
    }
}

Matrix SpdFactor::factor() const {
    Matrix C = strict_lower.triangularView<Eigen::StrictlyLower>();
    C.diagonal() = log_diag.array().exp();
    return C;
}

Matrix SpdFactor::full() const {
    const Matrix C = factor();
    return C * C.transpose();
}

SpdFactor SpdFactor::identity(Index n, double scale) {
    SpdFactor f;
    f.strict_lower = Matrix::Zero(n, n);
    f.log_diag = Matrix::Constant(n, 1, std::log(scale));
    return f;
}

SpdFactor SpdFactor::from_spd(const Matrix& S) {
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
        throw numerical_error("SpdFactor::from_spd: matrix is not positive-definite");
    const Matrix C = llt.matrixL();
    SpdFactor f;
    f.strict_lower = C;
    f.log_diag = C.diagonal().array().log();
    return f;
}

GpLikelihood GpLikelihood::create(Index output_dim, double noise_variance) {
    GpLikelihood lik;
    lik.log_noise_variances = Matrix::Constant(1, output_dim, std::log(noise_variance));
    return lik;
}

SvgpModel SvgpModel::create(Index input_dim, Index latent_dim, Index output_dim,
                            Index inducing_count, Rng& rng) {
    SvgpModel m;
    m.input_dim = input_dim;
    m.latent_dim = latent_dim;
    m.output_dim = output_dim;
    m.kernel = RbfKernel::create(input_dim + latent_dim);
    m.inducing.inputs = rng.normal_matrix(inducing_count, input_dim + latent_dim);
    m.inducing.means = Matrix::Zero(inducing_count, output_dim);
    for (Index d = 0; d < output_dim; ++d)
        m.inducing.covs.push_back(SpdFactor::identity(inducing_count));
    m.likelihood = GpLikelihood::create(output_dim);
    return m;
}

std::vector<Matrix*> SvgpModel::parameters() {
    std::vector<Matrix*> ps{&kernel.log_signal_variance, &kernel.log_sq_lengthscales,
                            &inducing.inputs, &inducing.means,
                            &likelihood.log_noise_variances};
    for (auto& c : inducing.covs) {
        ps.push_back(&c.strict_lower);
        ps.push_back(&c.log_diag);
    }
    return ps;
}

std::vector<const Matrix*> SvgpModel::parameters() const {
    auto ps = const_cast<SvgpModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
}

Matrix subsample_inducing(const Matrix& candidates, Index count, Rng& rng) {
    const Index n = candidates.rows();
    Matrix Z(count, candidates.cols());
    if (n == 0) throw std::invalid_argument("subsample_inducing: empty candidate set");
    if (n <= count) {
        for (Index i = 0; i < count; ++i) {
            Z.row(i) = candidates.row(i % n);
            if (i >= n)  // break exact duplicates
                Z.row(i) += 0.01 * rng.normal_vector(candidates.cols()).transpose();
        }
        return Z;
    }
    // k-means++ style seeding: first point uniform, then distance-proportional.
    std::vector<Index> chosen;
    chosen.push_back(rng.uniform_int(static_cast<int>(n)));
    Vector d2 = (candidates.rowwise() - candidates.row(chosen[0])).rowwise().squaredNorm();
    while (static_cast<Index>(chosen.size()) < count) {
        const double total = d2.sum();
        Index pick = 0;
        if (total <= 0.0) {
            pick = rng.uniform_int(static_cast<int>(n));
        } else {
            double r = rng.uniform() * total;
            for (Index i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
        d2 = d2.cwiseMin(
            (candidates.rowwise() - candidates.row(pick)).rowwise().squaredNorm());
    }
    for (Index i = 0; i < count; ++i) Z.row(i) = candidates.row(chosen[static_cast<std::size_t>(i)]);
    return Z;
}

PredictiveCache make_predictive_cache(const SvgpModel& model) {
    PredictiveCache cache;
    const Matrix kzz = model.kernel.gram(model.inducing.inputs, model.inducing.inputs);
    cache.llt = chol_with_jitter(kzz, &cache.jitter);
    Matrix kj = kzz;
    kj.diagonal().array() += cache.jitter;
    cache.alpha = cache.llt.solve(model.inducing.means);
    for (Index d = 0; d < model.output_dim; ++d) {
        const Matrix S = model.inducing.covs[static_cast<std::size_t>(d)].full();
        const Matrix inner = cache.llt.solve(kj - S);  // K^{-1}(K-S)
        cache.quad.push_back(cache.llt.solve(inner.transpose()).transpose());  // K^{-1}(K-S)K^{-1}
    }
    return cache;
}

MarginalResult svgp_marginal(const SvgpModel& model, const PredictiveCache& cache,
                             const Matrix& x_aug) {
    if (x_aug.cols() != model.augmented_dim())
        throw std::invalid_argument("svgp_marginal: augmented input dimension mismatch");
    const Matrix kxz = model.kernel.gram(x_aug, model.inducing.inputs);  // n x L
    MarginalResult out;
    out.mean = kxz * cache.alpha;
    out.var.resize(x_aug.rows(), model.output_dim);
    const double kxx = model.kernel.signal_variance();
    for (Index d = 0; d < model.output_dim; ++d) {
        const Matrix t = kxz * cache.quad[static_cast<std::size_t>(d)];
        out.var.col(d) =
            (kxx - (t.cwiseProduct(kxz)).rowwise().sum().array()).cwiseMax(kVarianceFloor);
    }
    return out;
}

MarginalResult svgp_marginal(const SvgpModel& model, const Matrix& x_aug) {
    return svgp_marginal(model, make_predictive_cache(model), x_aug);
}

double kl_inducing(const SvgpModel& model) {
    const Index L = model.inducing.count();
    const Matrix kzz = model.kernel.gram(model.inducing.inputs, model.inducing.inputs);
    double jitter = 0.0;
    const auto llt = chol_with_jitter(kzz, &jitter);
    const double logdet_k = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    double kl = 0.0;
    for (Index d = 0; d < model.output_dim; ++d) {
        const auto& f = model.inducing.covs[static_cast<std::size_t>(d)];
        const Matrix C = f.factor();
        const double trace = (llt.solve(C).cwiseProduct(C)).sum();
        const Vector m = model.inducing.means.col(d);
        const double quad = m.dot(llt.solve(m));
        kl += 0.5 * (trace + quad - static_cast<double>(L) + logdet_k - f.log_det());
    }
    return kl;
}

SvgpGraph build_svgp_graph(diff::Tape& tape, const SvgpModel& model, const SvgpBindMode& mode) {
    SvgpGraph g;
    g.output_dim = model.output_dim;
    g.inducing_count = model.inducing.count();
    auto leaf = [&](const Matrix& m, bool trainable) {
        return trainable ? tape.parameter(m) : tape.constant(m);
    };
    g.vars.kernel = bind_kernel(tape, model.kernel, mode.kernel);
    g.vars.inducing_inputs = leaf(model.inducing.inputs, mode.inducing_inputs);
    g.vars.inducing_means = leaf(model.inducing.means, mode.variational);
    g.vars.log_noise = leaf(model.likelihood.log_noise_variances, mode.likelihood);
    g.kzz = gram_graph(tape, g.vars.kernel, g.vars.inducing_inputs, g.vars.inducing_inputs);
    const Index L = g.inducing_count;
    const Matrix strict_mask = Matrix::Ones(L, L).triangularView<Eigen::StrictlyLower>();
    diff::Var mask = tape.constant(strict_mask);
    for (Index d = 0; d < model.output_dim; ++d) {
        const auto& f = model.inducing.covs[static_cast<std::size_t>(d)];
        diff::Var w = leaf(f.strict_lower, mode.variational);
        diff::Var ld = leaf(f.log_diag, mode.variational);
        g.vars.cov_strict_lower.push_back(w);
        g.vars.cov_log_diag.push_back(ld);
        g.cov_factor.push_back(tape.add(tape.mul(w, mask), tape.diag_embed(tape.exp(ld))));
    }
    return g;
}

MarginalVars svgp_marginal_graph(diff::Tape& tape, SvgpGraph& g, diff::Var x_aug) {
    diff::Var kxz = gram_graph(tape, g.vars.kernel, x_aug, g.vars.inducing_inputs);
    diff::Var kzx = tape.transpose(kxz);
    diff::Var A = tape.chol_solve(g.kzz, kzx);  // L x n
    MarginalVars mv;
    mv.mean = tape.matmul(kxz, tape.chol_solve(g.kzz, g.vars.inducing_means));
    // var_d = kxx - colsum(Kzx . A) + colsum((C^T A) . (C^T A)), per dim;
    // for RBF the prior diagonal kxx is just sf2.
    diff::Var q1 = tape.col_sum(tape.mul(kzx, A));  // 1 x n
    std::vector<diff::Var> var_cols;
    for (Index d = 0; d < g.output_dim; ++d) {
        diff::Var cta = tape.matmul(tape.transpose(g.cov_factor[static_cast<std::size_t>(d)]), A);
        diff::Var q2 = tape.col_sum(tape.mul(cta, cta));  // 1 x n
        diff::Var v = tape.sub(q2, q1);                   // 1 x n, still missing +kxx
        var_cols.push_back(tape.transpose(v));            // n x 1
    }
    diff::Var vstack = var_cols[0];
    for (std::size_t d = 1; d < var_cols.size(); ++d) vstack = tape.hcat(vstack, var_cols[d]);
    mv.var = tape.clamp_min(tape.add(vstack, tape.exp(g.vars.kernel.log_sf2)), kVarianceFloor);
    return mv;
}

diff::Var kl_inducing_graph(diff::Tape& tape, SvgpGraph& g) {
    const Index L = g.inducing_count;
    const Index D = g.output_dim;
    diff::Var logdet_k = tape.logdet_spd(g.kzz);
    diff::Var kinv_m = tape.chol_solve(g.kzz, g.vars.inducing_means);
    diff::Var quad = tape.sum(tape.mul(g.vars.inducing_means, kinv_m));
    diff::Var acc = tape.sub(quad, tape.scalar(static_cast<double>(L * D)));
    acc = tape.add(acc, tape.mul(logdet_k, tape.scalar(static_cast<double>(D))));
    for (Index d = 0; d < D; ++d) {
        diff::Var C = g.cov_factor[static_cast<std::size_t>(d)];
        diff::Var trace = tape.sum(tape.mul(tape.chol_solve(g.kzz, C), C));
        diff::Var logdet_s =
            tape.mul(tape.sum(g.vars.cov_log_diag[static_cast<std::size_t>(d)]), tape.scalar(2.0));
        acc = tape.add(acc, tape.sub(trace, logdet_s));
    }
    return tape.mul(acc, tape.scalar(0.5));
}

}  // namespace paml::gp
