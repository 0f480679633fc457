#include "paml/objective.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace paml::obj {

namespace {

void standardize_columns(const Matrix& raw, const Vector& mean, const Vector& std, Matrix& out) {
    out = (raw.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

std::pair<Vector, Vector> column_stats(const Matrix& stacked) {
    const Index n = stacked.rows();
    Vector mean = stacked.colwise().mean();
    Vector std(stacked.cols());
    for (Index j = 0; j < stacked.cols(); ++j) {
        const double var = (stacked.col(j).array() - mean[j]).square().sum() /
                           std::max<double>(1.0, static_cast<double>(n - 1));
        std[j] = std::sqrt(var);
        if (!(std[j] > 1e-12)) std[j] = 1.0;
    }
    return {std::move(mean), std::move(std)};
}

}  // namespace

Standardizer Standardizer::fit(const std::vector<TaskDataset>& tasks) {
    if (tasks.empty()) throw std::invalid_argument("standardizer: no training tasks");
    Index total = 0;
    for (const auto& t : tasks) total += t.size();
    const Index d_in = tasks[0].inputs.cols();
    const Index d_out = tasks[0].targets.cols();
    Matrix xs(total, d_in), ys(total, d_out);
    Index r = 0;
    for (const auto& t : tasks) {
        xs.middleRows(r, t.size()) = t.inputs;
        ys.middleRows(r, t.size()) = t.targets;
        r += t.size();
    }
    Standardizer s;
    std::tie(s.x_mean, s.x_std) = column_stats(xs);
    std::tie(s.y_mean, s.y_std) = column_stats(ys);
    if (tasks[0].descriptor.size() > 0) {
        Matrix ps(static_cast<Index>(tasks.size()), tasks[0].descriptor.size());
        for (std::size_t i = 0; i < tasks.size(); ++i)
            ps.row(static_cast<Index>(i)) = tasks[i].descriptor;
        std::tie(s.psi_mean, s.psi_std) = column_stats(ps);
    }
    return s;
}

Matrix Standardizer::standardize_inputs(const Matrix& x) const {
    Matrix out;
    standardize_columns(x, x_mean, x_std, out);
    return out;
}

Matrix Standardizer::standardize_targets(const Matrix& y) const {
    Matrix out;
    standardize_columns(y, y_mean, y_std, out);
    return out;
}

Matrix Standardizer::unstandardize_targets(const Matrix& y) const {
    return (y.array().rowwise() * y_std.transpose().array()).rowwise() +
           y_mean.transpose().array();
}

Vector Standardizer::standardize_descriptor(const Vector& psi) const {
    return (psi - psi_mean).array() / psi_std.array();
}

Vector Standardizer::unstandardize_descriptor(const Vector& psi) const {
    return psi.array() * psi_std.array() + psi_mean.array();
}

TrainState TrainState::create(std::vector<TaskDataset> tasks, DescriptorMode mode,
                              const TrainConfig& cfg, std::uint64_t seed) {
    if (tasks.empty()) throw std::invalid_argument("train state: need at least one task");
    if (mode != DescriptorMode::None && cfg.latent_dim == 0)
        throw std::invalid_argument("train state: descriptor heads need a latent space");
    TrainState st;
    st.config = cfg;
    st.mode = mode;
    st.rng = Rng(seed);
    st.tasks = std::move(tasks);
    st.standardizer = Standardizer::fit(st.tasks);

    const Index d_in = st.tasks[0].inputs.cols();
    const Index d_out = st.tasks[0].targets.cols();
    st.model = gp::SvgpModel::create(d_in, cfg.latent_dim, d_out, cfg.inducing_count, st.rng);
    // Standardized targets have unit variance; start the noise at a sizable
    // share of it so the first steps are not dominated by huge quad terms.
    st.model.likelihood = gp::GpLikelihood::create(d_out, 0.5);

    // Anchor inducing inputs to standardized training inputs; latent
    // coordinates start near the prior mean with a little spread.
    Index total = 0;
    for (const auto& t : st.tasks) total += t.size();
    Matrix pool(total, d_in + cfg.latent_dim);
    Index r = 0;
    for (const auto& t : st.tasks) {
        pool.middleRows(r, t.size()).leftCols(d_in) = st.standardizer.standardize_inputs(t.inputs);
        if (cfg.latent_dim > 0)
            pool.middleRows(r, t.size()).rightCols(cfg.latent_dim) =
                st.rng.normal_matrix(t.size(), cfg.latent_dim);
        r += t.size();
    }
    st.model.inducing.inputs = gp::subsample_inducing(pool, cfg.inducing_count, st.rng);
    // Latent kernel dimensions start shorter than the observed ones so the
    // dynamics likelihood can resolve task differences before the embeddings
    // have spread out.
    if (cfg.latent_dim > 0)
        st.model.kernel.log_sq_lengthscales.bottomRows(cfg.latent_dim)
            .setConstant(2.0 * std::log(0.5));

    // Variational posterior starts at the prior (m = 0, S = Kzz): KL(U) = 0
    // and the predictive variance is calibrated from step one.
    Matrix kzz = st.model.kernel.gram(st.model.inducing.inputs, st.model.inducing.inputs);
    kzz.diagonal().array() += 1e-6;
    for (auto& c : st.model.inducing.covs) c = gp::SpdFactor::from_spd(kzz);

    for (std::size_t i = 0; i < st.tasks.size(); ++i)
        st.embeddings.push_back(task::TaskEmbedding::prior_init(cfg.latent_dim));

    if (mode == DescriptorMode::Gaussian) {
        const Index psi_dim = st.tasks[0].descriptor.size();
        if (psi_dim == 0)
            throw std::invalid_argument("train state: Gaussian descriptor mode needs descriptors");
        st.decoder =
            desc::DescriptorDecoder::create(cfg.latent_dim, psi_dim, cfg.decoder_hidden, st.rng);
    } else if (mode == DescriptorMode::Pixel) {
        const Index image_dim = st.tasks[0].image.size();
        if (image_dim == 0) throw std::invalid_argument("train state: pixel mode needs images");
        st.vae = desc::PixelVae::create(image_dim, cfg.latent_dim, cfg.vae_hidden, st.rng);
    }
    return st;
}

void TrainState::add_task(TaskDataset ds) {
    tasks.push_back(std::move(ds));
    embeddings.push_back(task::TaskEmbedding::prior_init(config.latent_dim));
    standardizer = Standardizer::fit(tasks);
}

void TrainState::reinitialize_vae() {
    if (mode != DescriptorMode::Pixel) return;
    vae = desc::PixelVae::create(vae.image_dim(), config.latent_dim, config.vae_hidden, rng);
}

std::vector<Matrix*> TrainState::trainable_parameters() {
    std::vector<Matrix*> ps = model.parameters();
    if (mode != DescriptorMode::Pixel) {
        for (auto& e : embeddings) {
            ps.push_back(&e.mean);
            ps.push_back(&e.log_var);
        }
    }
    if (mode == DescriptorMode::Gaussian)
        for (Matrix* p : decoder.parameters()) ps.push_back(p);
    if (mode == DescriptorMode::Pixel)
        for (Matrix* p : vae.parameters()) ps.push_back(p);
    return ps;
}

task::StandardizedData TrainState::standardized(const TaskDataset& ds) const {
    return {standardizer.standardize_inputs(ds.inputs),
            standardizer.standardize_targets(ds.targets)};
}

ElboGraph build_paml_elbo(diff::Tape& tape, TrainState& state, const std::vector<int>& task_idx,
                          const std::vector<std::vector<int>>& point_idx,
                          const Matrix& latent_noise, const std::vector<int>& candidate_idx) {
    if (task_idx.empty()) throw std::invalid_argument("paml_elbo: empty task minibatch");
    if (point_idx.size() != task_idx.size())
        throw std::invalid_argument("paml_elbo: point index list per batch task required");
    const Index q = state.config.latent_dim;
    const Index batch = static_cast<Index>(task_idx.size());
    if (q > 0 && (latent_noise.rows() != q || latent_noise.cols() != batch))
        throw std::invalid_argument("paml_elbo: latent noise must be Q x batch");

    const double task_scale =
        static_cast<double>(state.tasks.size()) / static_cast<double>(batch);

    ElboGraph g;
    gp::SvgpGraph svgp = gp::build_svgp_graph(tape, state.model, gp::SvgpBindMode::all());
    g.bound = {{&state.model.kernel.log_signal_variance, svgp.vars.kernel.log_sf2},
               {&state.model.kernel.log_sq_lengthscales, svgp.vars.kernel.log_sq_ls},
               {&state.model.inducing.inputs, svgp.vars.inducing_inputs},
               {&state.model.inducing.means, svgp.vars.inducing_means},
               {&state.model.likelihood.log_noise_variances, svgp.vars.log_noise}};
    for (Index d = 0; d < state.model.output_dim; ++d) {
        g.bound.emplace_back(&state.model.inducing.covs[static_cast<std::size_t>(d)].strict_lower,
                             svgp.vars.cov_strict_lower[static_cast<std::size_t>(d)]);
        g.bound.emplace_back(&state.model.inducing.covs[static_cast<std::size_t>(d)].log_diag,
                             svgp.vars.cov_log_diag[static_cast<std::size_t>(d)]);
    }

    desc::VaeVars vv;
    std::optional<desc::DecoderVars> decoder_vars;
    if (state.mode == DescriptorMode::Pixel) {
        vv = desc::bind_vae(tape, state.vae, true);
        const auto vp = state.vae.parameters();
        const std::vector<diff::Var> vvars{vv.enc_w1, vv.enc_b1, vv.enc_w2, vv.enc_b2,
                                           vv.enc_wm, vv.enc_bm, vv.enc_wv, vv.enc_bv,
                                           vv.dec_w1, vv.dec_b1, vv.dec_w2, vv.dec_b2,
                                           vv.dec_wo, vv.dec_bo, vv.log_pixel_noise};
        for (std::size_t i = 0; i < vp.size(); ++i) g.bound.emplace_back(vp[i], vvars[i]);
    } else if (state.mode == DescriptorMode::Gaussian) {
        decoder_vars = desc::bind_decoder(tape, state.decoder, true);
        const auto dp = state.decoder.parameters();
        const std::vector<diff::Var> dvars{decoder_vars->w1,     decoder_vars->b1,
                                           decoder_vars->w2,     decoder_vars->b2,
                                           decoder_vars->w_skip, decoder_vars->log_noise};
        for (std::size_t i = 0; i < dp.size(); ++i) g.bound.emplace_back(dp[i], dvars[i]);
    }

    diff::Var kl_h_sum = tape.scalar(0.0);    // raw sum over batch tasks
    diff::Var desc_sum = tape.scalar(0.0);    // raw batch descriptor log-lik
    diff::Var cand_term = tape.scalar(0.0);   // pixel candidate reconstruction
    std::vector<diff::Var> latent_rows(task_idx.size());  // 1 x Q sampled latents

    if (state.mode == DescriptorMode::Pixel) {
        Matrix imgs(batch, state.vae.image_dim());
        for (Index b = 0; b < batch; ++b)
            imgs.row(b) = state.tasks[static_cast<std::size_t>(task_idx[static_cast<std::size_t>(b)])].image;
        diff::Var img_const = tape.constant(imgs);
        auto [enc_mean, enc_log_var] = desc::encode_graph(tape, vv, img_const);
        diff::Var var = tape.exp(enc_log_var);
        diff::Var inner = tape.sub(
            tape.sub(tape.add(var, tape.mul(enc_mean, enc_mean)), enc_log_var), tape.scalar(1.0));
        kl_h_sum = tape.mul(tape.sum(inner), tape.scalar(0.5));
        diff::Var h_rows = tape.add(
            enc_mean,
            tape.mul(tape.exp(tape.mul(enc_log_var, tape.scalar(0.5))),
                     tape.constant(latent_noise.transpose())));
        desc_sum = desc::pixel_loglik_graph(tape, vv, h_rows, img_const);
        for (Index b = 0; b < batch; ++b) {
            Matrix sel = Matrix::Zero(1, batch);
            sel(0, b) = 1.0;
            latent_rows[static_cast<std::size_t>(b)] = tape.matmul(tape.constant(sel), h_rows);
        }
        if (state.candidate_images.rows() > 0) {
            Matrix cands;
            double cand_scale = 1.0;
            if (candidate_idx.empty()) {
                cands = state.candidate_images;
            } else {
                cands.resize(static_cast<Index>(candidate_idx.size()),
                             state.candidate_images.cols());
                for (std::size_t i = 0; i < candidate_idx.size(); ++i)
                    cands.row(static_cast<Index>(i)) =
                        state.candidate_images.row(candidate_idx[i]);
                cand_scale = static_cast<double>(state.candidate_images.rows()) /
                             static_cast<double>(candidate_idx.size());
            }
            diff::Var cand_const = tape.constant(cands);
            auto enc = desc::encode_graph(tape, vv, cand_const);
            cand_term = tape.mul(desc::pixel_loglik_graph(tape, vv, enc.first, cand_const),
                                 tape.scalar(cand_scale));
        }
    }

    // Per-task blocks: standardized inputs augmented with the sampled latent.
    std::vector<diff::Var> x_blocks, y_blocks;
    std::vector<double> point_scales;
    for (std::size_t b = 0; b < task_idx.size(); ++b) {
        const auto& ds = state.tasks[static_cast<std::size_t>(task_idx[b])];
        const auto& pts = point_idx[b];
        if (pts.empty()) throw std::invalid_argument("paml_elbo: empty point minibatch");
        Matrix x(static_cast<Index>(pts.size()), ds.inputs.cols());
        Matrix y(static_cast<Index>(pts.size()), ds.targets.cols());
        for (std::size_t j = 0; j < pts.size(); ++j) {
            x.row(static_cast<Index>(j)) = ds.inputs.row(pts[j]);
            y.row(static_cast<Index>(j)) = ds.targets.row(pts[j]);
        }
        x = state.standardizer.standardize_inputs(x);
        y = state.standardizer.standardize_targets(y);
        point_scales.push_back(static_cast<double>(ds.size()) / static_cast<double>(pts.size()));

        diff::Var x_aug;
        if (q > 0) {
            if (state.mode != DescriptorMode::Pixel) {
                auto& emb = state.embeddings[static_cast<std::size_t>(task_idx[b])];
                auto ev = task::bind_embedding(tape, emb, true);
                g.bound.emplace_back(&emb.mean, ev.mean);
                g.bound.emplace_back(&emb.log_var, ev.log_var);
                diff::Var h =
                    task::sample_latent_graph(tape, ev, latent_noise.col(static_cast<Index>(b)));
                latent_rows[b] = tape.transpose(h);
                kl_h_sum = tape.add(kl_h_sum, task::kl_latent_graph(tape, ev));
            }
            diff::Var tile =
                tape.matmul(tape.constant(Matrix::Ones(x.rows(), 1)), latent_rows[b]);
            x_aug = tape.hcat(tape.constant(x), tile);
        } else {
            x_aug = tape.constant(x);
        }
        x_blocks.push_back(x_aug);
        y_blocks.push_back(tape.constant(y));
    }

    if (state.mode == DescriptorMode::Gaussian) {
        diff::Var h_all = latent_rows.size() == 1 ? latent_rows[0] : tape.vcat(latent_rows);
        Matrix psis(batch, state.decoder.out_dim());
        for (Index b = 0; b < batch; ++b)
            psis.row(b) = state.standardizer.standardize_descriptor(
                state.tasks[static_cast<std::size_t>(task_idx[static_cast<std::size_t>(b)])]
                    .descriptor);
        desc_sum = desc::descriptor_loglik_graph(tape, *decoder_vars, h_all, tape.constant(psis));
    }

    // Expected dynamics likelihood over the stacked batch, one scale per row.
    diff::Var x_all = x_blocks.size() == 1 ? x_blocks[0] : tape.vcat(x_blocks);
    diff::Var y_all = y_blocks.size() == 1 ? y_blocks[0] : tape.vcat(y_blocks);
    gp::MarginalVars mv = gp::svgp_marginal_graph(tape, svgp, x_all);
    Index total_rows = 0;
    for (const auto& pts : point_idx) total_rows += static_cast<Index>(pts.size());
    Matrix row_scale(total_rows, 1);
    Index r = 0;
    for (std::size_t b = 0; b < task_idx.size(); ++b) {
        const Index nb = static_cast<Index>(point_idx[b].size());
        row_scale.middleRows(r, nb).setConstant(task_scale * point_scales[b]);
        r += nb;
    }
    diff::Var noise = tape.exp(svgp.vars.log_noise);
    diff::Var resid = tape.sub(y_all, mv.mean);
    diff::Var quad = tape.div(tape.add(tape.mul(resid, resid), mv.var), noise);
    diff::Var log_term =
        tape.add(svgp.vars.log_noise, tape.scalar(std::log(2.0 * std::numbers::pi)));
    diff::Var per_point = tape.mul(tape.add(quad, log_term), tape.constant(row_scale));
    g.lik_dyn = tape.mul(tape.sum(per_point), tape.scalar(-0.5));

    g.kl_u = gp::kl_inducing_graph(tape, svgp);
    g.kl_h = tape.mul(kl_h_sum, tape.scalar(task_scale));
    g.lik_desc = tape.add(tape.mul(desc_sum, tape.scalar(task_scale)), cand_term);

    diff::Var elbo = tape.sub(tape.sub(g.lik_dyn, g.kl_h), g.kl_u);
    if (state.mode != DescriptorMode::None)
        elbo = tape.add(elbo, tape.mul(g.lik_desc, tape.scalar(state.config.descriptor_weight)));
    g.elbo = elbo;
    return g;
}

ElboTerms paml_elbo_value(TrainState& state, const std::vector<int>& task_idx,
                          const std::vector<std::vector<int>>& point_idx,
                          const Matrix& latent_noise) {
    diff::Tape tape;
    ElboGraph g = build_paml_elbo(tape, state, task_idx, point_idx, latent_noise);
    ElboTerms t;
    t.elbo = tape.evaluate(g.elbo);
    t.lik_dyn = tape.value(g.lik_dyn)(0, 0);
    t.lik_desc = tape.value(g.lik_desc)(0, 0);
    t.kl_h = tape.value(g.kl_h)(0, 0);
    t.kl_u = tape.value(g.kl_u)(0, 0);
    return t;
}

namespace {

struct Checkpoint {
    std::vector<Matrix> values;
    diff::Adam adam;
    long step = 0;
};

}  // namespace

std::vector<TraceRow> train(TrainState& state, int steps) {
    std::vector<TraceRow> trace;
    if (steps <= 0) return trace;
    const int n_tasks = static_cast<int>(state.tasks.size());
    if (n_tasks == 0) throw std::invalid_argument("train: no tasks");

    diff::Adam adam(state.config.adam);
    const std::vector<Matrix*> params = state.trainable_parameters();
    std::unordered_map<const Matrix*, std::size_t> slot;
    for (std::size_t i = 0; i < params.size(); ++i) slot[params[i]] = i;

    auto snapshot = [&] {
        Checkpoint cp;
        for (Matrix* p : params) cp.values.push_back(*p);
        cp.adam = adam;
        cp.step = state.step;
        return cp;
    };
    Checkpoint checkpoint = snapshot();
    bool halved = false;

    int s = 0;
    while (s < steps) {
        try {
            const int bt = std::min(state.config.batch_tasks, n_tasks);
            std::vector<int> task_idx = state.rng.sample_indices(n_tasks, bt);
            std::vector<std::vector<int>> point_idx;
            for (int ti : task_idx) {
                const int m = static_cast<int>(state.tasks[static_cast<std::size_t>(ti)].size());
                const int bp = std::min(state.config.batch_points, m);
                point_idx.push_back(state.rng.sample_indices(m, bp));
            }
            Matrix noise = state.config.latent_dim > 0
                               ? state.rng.normal_matrix(state.config.latent_dim, bt)
                               : Matrix(0, bt);
            std::vector<int> cand_idx;
            if (state.mode == DescriptorMode::Pixel && state.config.vae_candidate_batch > 0 &&
                state.candidate_images.rows() > state.config.vae_candidate_batch) {
                cand_idx = state.rng.sample_indices(
                    static_cast<int>(state.candidate_images.rows()),
                    state.config.vae_candidate_batch);
            }

            diff::Tape tape;
            ElboGraph g = build_paml_elbo(tape, state, task_idx, point_idx, noise, cand_idx);
            diff::Var loss = tape.neg(g.elbo);
            tape.evaluate(loss);
            tape.backward(loss);

            TraceRow row;
            row.step = state.step;
            row.elbo = -tape.value(loss)(0, 0);
            row.lik_dyn = tape.value(g.lik_dyn)(0, 0);
            row.lik_desc = tape.value(g.lik_desc)(0, 0);
            row.kl_h = tape.value(g.kl_h)(0, 0);
            row.kl_u = tape.value(g.kl_u)(0, 0);
            trace.push_back(row);

            // Gradients in the stable parameter order; parameters outside the
            // batch contribute zero.
            std::vector<Matrix> grads(params.size());
            for (std::size_t i = 0; i < params.size(); ++i)
                grads[i] = Matrix::Zero(params[i]->rows(), params[i]->cols());
            for (auto& [p, v] : g.bound) grads[slot.at(p)] = tape.gradient(v);
            adam.step(params, grads);
            ++state.step;
            ++s;
            if (s % state.config.checkpoint_stride == 0) checkpoint = snapshot();
        } catch (const numerical_error& err) {
            if (halved) {
                std::ostringstream msg;
                msg << "training diverged twice (" << err.what() << ") at step " << state.step
                    << "; last elbo " << (trace.empty() ? 0.0 : trace.back().elbo);
                throw numerical_error(msg.str());
            }
            halved = true;
            for (std::size_t i = 0; i < params.size(); ++i) *params[i] = checkpoint.values[i];
            adam = checkpoint.adam;
            adam.set_learning_rate(adam.learning_rate() * 0.5);
            state.step = checkpoint.step;
        }
    }

    // Pixel mode keeps the cached embeddings in sync with the encoder.
    if (state.mode == DescriptorMode::Pixel) {
        for (std::size_t i = 0; i < state.tasks.size(); ++i)
            state.embeddings[i] = state.vae.encode_image(state.tasks[i].image);
    }
    return trace;
}

Metrics predictive_nll_rmse(TrainState& state, const std::vector<TaskDataset>& test_tasks,
                            int shots, int inference_steps, const Standardizer* eval_space) {
    if (test_tasks.empty()) throw std::invalid_argument("predictive_nll_rmse: empty test set");

    std::vector<task::StandardizedData> infer_data;
    std::vector<task::StandardizedData> eval_data;
    for (const auto& ds : test_tasks) {
        task::StandardizedData sd = state.standardized(ds);
        task::StandardizedData used = sd;
        if (shots > 0 && shots < sd.inputs.rows()) {
            used.inputs = sd.inputs.topRows(shots);
            used.targets = sd.targets.topRows(shots);
        }
        infer_data.push_back(std::move(used));
        eval_data.push_back(std::move(sd));
    }

    diff::AdamConfig cfg;
    cfg.alpha = state.config.inference_alpha;
    Rng rng = state.rng.fork();
    const std::vector<task::TaskEmbedding> embeddings =
        state.config.latent_dim > 0
            ? task::infer_embeddings(state.model, infer_data, inference_steps, cfg, rng)
            : std::vector<task::TaskEmbedding>(test_tasks.size(),
                                               task::TaskEmbedding::prior_init(0));

    const gp::PredictiveCache cache = gp::make_predictive_cache(state.model);
    const Vector noise_var = state.model.likelihood.noise_variances();

    // Conversion from the model's standardized target space into the metric
    // space: identity when scoring in the model's own space.
    const Index d_out = test_tasks[0].targets.cols();
    Vector scale = Vector::Ones(d_out);
    Vector shift = Vector::Zero(d_out);
    if (eval_space) {
        scale = state.standardizer.y_std.array() / eval_space->y_std.array();
        shift = (state.standardizer.y_mean - eval_space->y_mean).array() /
                eval_space->y_std.array();
    }

    double nll_sum = 0.0, sq_sum = 0.0;
    Index points = 0;
    const double c = std::log(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < eval_data.size(); ++i) {
        const auto& sd = eval_data[i];
        const auto pred = task::predictive_mixture(state.model, cache, sd.inputs,
                                                   embeddings[i].mean.col(0),
                                                   embeddings[i].variances(),
                                                   state.config.eval_latent_samples, rng);
        for (Index r = 0; r < sd.inputs.rows(); ++r) {
            for (Index d = 0; d < d_out; ++d) {
                const double v = (pred.var(r, d) + noise_var[d]) * scale[d] * scale[d];
                const double mean_e = pred.mean(r, d) * scale[d] + shift[d];
                const double target_e = sd.targets(r, d) * scale[d] + shift[d];
                const double resid = target_e - mean_e;
                nll_sum += 0.5 * (c + std::log(v) + resid * resid / v);
                sq_sum += resid * resid;
            }
            ++points;
        }
    }
    Metrics m;
    m.nll = nll_sum / static_cast<double>(points);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(points * d_out));
    return m;
}

}  // namespace paml::obj
