#pragma once

#include "paml/kernel.hpp"
#include "paml/rng.hpp"

namespace paml::gp {

/// Factor parameterization of an SPD matrix: C = strict_lower(W) +
/// diag(exp(log_diag)), S = C C^T. Keeps S positive-definite under
/// unconstrained optimization of W and log_diag.
struct SpdFactor {
    Matrix strict_lower;  // n x n, entries on/above the diagonal ignored
    Matrix log_diag;      // n x 1

    Matrix factor() const;  // C
    Matrix full() const;    // C C^T
    double log_det() const { return 2.0 * log_diag.sum(); }

    static SpdFactor identity(Index n, double scale = 1.0);
    static SpdFactor from_spd(const Matrix& S);
};

struct InducingSet {
    Matrix inputs;                // L x (input_dim + latent_dim)
    Matrix means;                 // L x output_dim
    std::vector<SpdFactor> covs;  // one per output dim

    Index count() const { return inputs.rows(); }
};

struct GpLikelihood {
    Matrix log_noise_variances;  // 1 x output_dim
    Vector noise_variances() const { return log_noise_variances.transpose().array().exp(); }

    static GpLikelihood create(Index output_dim, double noise_variance = 1e-2);
};

/// Sparse variational GP shared across tasks: one RBF kernel over the
/// augmented input (observed input plus latent task code), one shared set of
/// inducing inputs, and an independent variational Gaussian per output dim.
struct SvgpModel {
    RbfKernel kernel;
    InducingSet inducing;
    GpLikelihood likelihood;
    Index input_dim = 0;   // observed input dimension
    Index latent_dim = 0;  // Q, may be zero
    Index output_dim = 0;

    Index augmented_dim() const { return input_dim + latent_dim; }

    static SvgpModel create(Index input_dim, Index latent_dim, Index output_dim,
                            Index inducing_count, Rng& rng);

    /// All trainable matrices, in a stable order.
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
};

/// Distance-proportional (k-means++ style) subsample of candidate rows,
/// used to anchor inducing inputs to standardized training data.
Matrix subsample_inducing(const Matrix& candidates, Index count, Rng& rng);

struct MarginalResult {
    Matrix mean;  // n x output_dim
    Matrix var;   // n x output_dim, floored at 1e-8
};

/// Reusable per-model factorizations for fast repeated prediction.
struct PredictiveCache {
    Eigen::LLT<Matrix> llt;  // of Kzz + jitter I
    double jitter = 0.0;
    Matrix alpha;            // Kzz^{-1} means, L x D
    std::vector<Matrix> quad;  // Kzz^{-1} (Kzz - S_d) Kzz^{-1}, per dim
};

PredictiveCache make_predictive_cache(const SvgpModel& model);
MarginalResult svgp_marginal(const SvgpModel& model, const PredictiveCache& cache,
                             const Matrix& x_aug);
MarginalResult svgp_marginal(const SvgpModel& model, const Matrix& x_aug);

/// Sum over output dims of KL[q(u^d) || N(0, Kzz)], closed form.
double kl_inducing(const SvgpModel& model);

/// Cholesky with the shared jitter ladder (1e-6 doubling to 1e-2).
Eigen::LLT<Matrix> chol_with_jitter(const Matrix& A, double* jitter_out = nullptr);

// ---- tape graph builders ----

/// Which parameter groups become trainable leaves; the rest are constants.
struct SvgpBindMode {
    bool kernel = true;
    bool inducing_inputs = true;
    bool variational = true;  // means and covariance factors
    bool likelihood = true;

    static SvgpBindMode all() { return {}; }
    static SvgpBindMode none() { return {false, false, false, false}; }
    static SvgpBindMode variational_only() { return {false, false, true, false}; }
};

struct SvgpVars {
    KernelVars kernel;
    diff::Var inducing_inputs;
    diff::Var inducing_means;                 // L x D
    std::vector<diff::Var> cov_strict_lower;  // per dim
    std::vector<diff::Var> cov_log_diag;      // per dim
    diff::Var log_noise;                      // 1 x D
};

/// Binds the model onto a tape and pre-builds the shared pieces (Kzz and the
/// covariance factors) every downstream term reuses.
struct SvgpGraph {
    SvgpVars vars;
    diff::Var kzz;
    std::vector<diff::Var> cov_factor;  // C_d nodes
    Index output_dim = 0;
    Index inducing_count = 0;
};

SvgpGraph build_svgp_graph(diff::Tape& tape, const SvgpModel& model, const SvgpBindMode& mode);
inline SvgpGraph build_svgp_graph(diff::Tape& tape, const SvgpModel& model, bool trainable) {
    return build_svgp_graph(tape, model, trainable ? SvgpBindMode::all() : SvgpBindMode::none());
}

struct MarginalVars {
    diff::Var mean;  // n x D
    diff::Var var;   // n x D
};

MarginalVars svgp_marginal_graph(diff::Tape& tape, SvgpGraph& g, diff::Var x_aug);
diff::Var kl_inducing_graph(diff::Tape& tape, SvgpGraph& g);

}  // namespace paml::gp
