#include "paml/harness.hpp"

#include <chrono>
#include <cmath>

namespace paml::harness {

namespace {

constexpr std::uint64_t kTestGridSalt = 0x7e57617b1dull;
constexpr std::uint64_t kInitSalt = 0x1717a55ceedull;

std::uint64_t strategy_salt(const std::string& strategy) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : strategy) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

bool is_cartpole_mode(const std::string& mode) {
    return mode == "partial" || mode == "noisy" || mode == "pixel";
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string& env, const std::string& mode) {
    ExperimentConfig cfg;
    cfg.env = env;
    cfg.mode = mode;
    if (env != "cartpole" && env != "pendubot" && env != "cartdoublepole")
        throw std::invalid_argument("unknown environment: " + env);
    if (mode != "full" && mode != "partial" && mode != "noisy" && mode != "pixel")
        throw std::invalid_argument("unknown descriptor mode: " + mode);
    if (is_cartpole_mode(mode) && env != "cartpole")
        throw std::invalid_argument("mode '" + mode + "' is defined for the cart-pole only");

    if (env == "cartpole") {
        cfg.dt = 0.125;
        cfg.control_alternations = 10;
        cfg.n_init = 3;
        cfg.training_steps = 5000;
    } else if (env == "pendubot") {
        cfg.dt = 0.05;
        cfg.control_alternations = 5;
        cfg.n_init = 4;
        cfg.training_steps = 5000;
    } else {
        cfg.dt = 0.05;
        cfg.control_alternations = 10;
        cfg.n_init = 3;
        cfg.training_steps = 7000;
    }
    if (mode == "noisy") cfg.n_init = 4;
    if (mode == "pixel") {
        cfg.n_init = 1;
        cfg.training_steps = 10000;
        cfg.test_tasks = 25;
    }
    return cfg;
}

void ExperimentConfig::apply_desk_scale() {
    desk_scale = true;
    training_steps = 1000;
    oracle_training_steps = 5000;
    traj_steps = 50;
    test_tasks = 25;
    inducing = 64;
    inference_steps = 50;
    batch_points = 50;
    vae_hidden = 64;
    vae_candidate_batch = 32;
    image_size = 16;
}

obj::TrainConfig ExperimentConfig::train_config() const {
    obj::TrainConfig tc;
    tc.latent_dim = latent_dim;
    tc.inducing_count = inducing;
    tc.decoder_hidden = decoder_hidden;
    tc.descriptor_weight = descriptor_weight;
    tc.adam.alpha = adam_alpha;
    tc.batch_tasks = batch_tasks;
    tc.batch_points = batch_points;
    tc.eval_latent_samples = eval_latent_samples;
    tc.inference_steps = inference_steps;
    tc.inference_alpha = inference_alpha;
    tc.vae_hidden = vae_hidden;
    tc.vae_candidate_batch = vae_candidate_batch;
    return tc;
}

sel::DescriptorBounds ExperimentConfig::descriptor_bounds() const {
    sel::DescriptorBounds b;
    if (env == "cartpole") {
        if (mode == "full") {
            b.lower = Vector(2);
            b.upper = Vector(2);
            b.lower << 0.5, 0.5;
            b.upper << 5.0, 2.0;
        } else if (mode == "partial") {
            b.lower = Vector::Constant(1, 0.4);
            b.upper = Vector::Constant(1, 3.0);
        } else if (mode == "noisy") {
            b.lower = Vector(3);
            b.upper = Vector(3);
            b.lower << 0.5, 0.5, 0.5;
            b.upper << 5.0, 2.0, 5.0;
        } else {  // pixel: the scalar behind the image is the pole length
            b.lower = Vector::Constant(1, 0.5);
            b.upper = Vector::Constant(1, 4.5);
        }
    } else if (env == "pendubot") {
        b.lower = Vector::Constant(2, 0.6);
        b.upper = Vector::Constant(2, 3.0);
    } else {
        b.lower = Vector::Constant(2, 0.5);
        b.upper = Vector::Constant(2, 3.0);
    }
    return b;
}

Index ExperimentConfig::descriptor_dim() const { return descriptor_bounds().lower.size(); }

namespace {

envs::EnvParams env_from_descriptor(const ExperimentConfig& cfg, const Vector& d, Rng& rng) {
    if (cfg.env == "cartpole") {
        envs::CartPoleParams p;
        if (cfg.mode == "full" || cfg.mode == "noisy") {
            p.pendulum_mass = d[0];
            p.pendulum_length = d[1];
        } else if (cfg.mode == "partial") {
            p.pendulum_mass = rng.uniform(0.4, 3.0);  // hidden, resampled per selection
            p.pendulum_length = d[0];
        } else {  // pixel
            p.pendulum_mass = 0.5;
            p.pendulum_length = d[0];
        }
        return envs::EnvParams{p};
    }
    if (cfg.env == "pendubot") {
        envs::PendubotParams p;
        p.length1 = d[0];
        p.length2 = d[1];
        return envs::EnvParams{p};
    }
    envs::CartDoublePoleParams p;
    p.length1 = d[0];
    p.length2 = d[1];
    return envs::EnvParams{p};
}

TaskDataset dataset_from_env(const ExperimentConfig& cfg, const envs::EnvParams& params,
                             const Vector& descriptor) {
    const Vector controls =
        envs::control_signal(envs::control_bound(params), cfg.traj_steps,
                             cfg.control_alternations);
    const envs::Trajectory traj =
        envs::rollout(params, Vector::Zero(envs::state_dim(params)), controls, cfg.dt);
    const envs::FdTargets fd = envs::fd_targets(traj);
    TaskDataset ds;
    ds.inputs = fd.inputs;
    ds.targets = fd.targets;
    ds.descriptor = descriptor;
    if (cfg.mode == "pixel") {
        const auto& cp = std::get<envs::CartPoleParams>(params);
        Vector upright(4);
        upright << 0.0, M_PI, 0.0, 0.0;
        const Matrix img = envs::render_cartpole(cp, upright, cfg.image_size);
        // flatten row-major
        ds.image.resize(img.size());
        Index k = 0;
        for (Index r = 0; r < img.rows(); ++r)
            for (Index c = 0; c < img.cols(); ++c) ds.image[k++] = img(r, c);
    }
    return ds;
}

}  // namespace

TaskDataset simulate_task(const ExperimentConfig& cfg, const Vector& descriptor, Rng& rng) {
    if (descriptor.size() != cfg.descriptor_dim())
        throw std::invalid_argument("simulate_task: descriptor dimension mismatch");
    const envs::EnvParams params = env_from_descriptor(cfg, descriptor, rng);
    return dataset_from_env(cfg, params, descriptor);
}

std::vector<TaskDataset> build_test_grid(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    Rng grid_rng(trial_seed ^ kTestGridSalt);
    std::vector<TaskDataset> tasks;

    if (cfg.mode == "pixel") {
        // 1-D grid of pole lengths.
        const int n = cfg.test_tasks;
        for (int i = 0; i < n; ++i) {
            const double len =
                0.5 + (4.5 - 0.5) * (n == 1 ? 0.5 : static_cast<double>(i) / (n - 1));
            tasks.push_back(simulate_task(cfg, Vector::Constant(1, len), grid_rng));
        }
        return tasks;
    }

    const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(cfg.test_tasks))));
    auto linspace = [&](double lo, double hi, int i) {
        return side == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / (side - 1);
    };

    if (cfg.mode == "partial") {
        // The grid spans both the observed length and the hidden mass.
        for (int i = 0; i < side; ++i) {
            for (int j = 0; j < side; ++j) {
                envs::CartPoleParams p;
                p.pendulum_mass = linspace(0.4, 3.0, i);
                p.pendulum_length = linspace(0.4, 3.0, j);
                tasks.push_back(dataset_from_env(cfg, envs::EnvParams{p},
                                                 Vector::Constant(1, p.pendulum_length)));
            }
        }
        return tasks;
    }

    const sel::DescriptorBounds b = cfg.descriptor_bounds();
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            Vector d(cfg.descriptor_dim());
            d[0] = linspace(b.lower[0], b.upper[0], i);
            d[1] = linspace(b.lower[1], b.upper[1], j);
            if (cfg.mode == "noisy") d[2] = grid_rng.uniform(0.5, 5.0);
            tasks.push_back(simulate_task(cfg, d, grid_rng));
        }
    }
    return tasks;
}

std::vector<Vector> initial_descriptors(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    Rng rng(trial_seed ^ kInitSalt);
    const auto pts = sel::lhs_sample(rng, cfg.descriptor_bounds(), cfg.n_init);
    return pts;
}

namespace {

struct PixelPool {
    Matrix images;           // remaining candidate images, row per candidate
    std::vector<double> lengths;  // aligned true pole lengths
};

PixelPool build_pixel_corpus(const ExperimentConfig& cfg) {
    PixelPool pool;
    const int n = cfg.pixel_corpus;
    pool.images.resize(n, static_cast<Index>(cfg.image_size) * cfg.image_size);
    pool.lengths.resize(static_cast<std::size_t>(n));
    Vector upright(4);
    upright << 0.0, M_PI, 0.0, 0.0;
    for (int i = 0; i < n; ++i) {
        const double len = 0.5 + (4.5 - 0.5) * static_cast<double>(i) / (n - 1);
        envs::CartPoleParams p;
        p.pendulum_mass = 0.5;
        p.pendulum_length = len;
        const Matrix img = envs::render_cartpole(p, upright, cfg.image_size);
        Index k = 0;
        for (Index r = 0; r < img.rows(); ++r)
            for (Index c = 0; c < img.cols(); ++c) pool.images(i, k++) = img(r, c);
        pool.lengths[static_cast<std::size_t>(i)] = len;
    }
    return pool;
}

void remove_pool_row(PixelPool& pool, int idx) {
    const Index n = pool.images.rows();
    Matrix rest(n - 1, pool.images.cols());
    if (idx > 0) rest.topRows(idx) = pool.images.topRows(idx);
    if (idx < n - 1) rest.bottomRows(n - 1 - idx) = pool.images.bottomRows(n - 1 - idx);
    pool.images = std::move(rest);
    pool.lengths.erase(pool.lengths.begin() + idx);
}

}  // namespace

TrialResult run_active_loop(const ExperimentConfig& cfg, const std::string& strategy,
                            std::uint64_t trial_seed, int trial_index) {
    if (strategy != "paml" && strategy != "uni" && strategy != "lhs")
        throw std::invalid_argument("unknown strategy: " + strategy);
    if (cfg.mode == "pixel" && strategy == "lhs")
        throw std::invalid_argument("the pixel regime compares paml and uni only");

    const std::vector<TaskDataset> test_tasks = build_test_grid(cfg, trial_seed);
    // Fixed metric space shared by every strategy and the oracle: without it
    // each refit of a model's standardizer would silently rescale the curves.
    const obj::Standardizer eval_space = obj::Standardizer::fit(test_tasks);
    Rng strat_rng(trial_seed ^ strategy_salt(strategy));

    // Initial tasks, shared across strategies within the seed.
    std::vector<TaskDataset> init_tasks;
    PixelPool pool;
    Rng init_rng(trial_seed ^ kInitSalt ^ 0xabcdull);
    if (cfg.mode == "pixel") {
        pool = build_pixel_corpus(cfg);
        for (int i = 0; i < cfg.n_init; ++i) {
            const int pick = init_rng.uniform_int(static_cast<int>(pool.images.rows()));
            init_tasks.push_back(simulate_task(
                cfg, Vector::Constant(1, pool.lengths[static_cast<std::size_t>(pick)]), init_rng));
            remove_pool_row(pool, pick);
        }
    } else {
        for (const Vector& d : initial_descriptors(cfg, trial_seed))
            init_tasks.push_back(simulate_task(cfg, d, init_rng));
    }

    const obj::DescriptorMode dmode = cfg.mode == "pixel" ? obj::DescriptorMode::Pixel
                                                          : obj::DescriptorMode::Gaussian;
    obj::TrainState state = obj::TrainState::create(init_tasks, dmode, cfg.train_config(),
                                                    trial_seed ^ strategy_salt(strategy) ^ 1);
    if (cfg.mode == "pixel") state.candidate_images = pool.images;

    // LHS pre-draws its whole acquisition sequence up front.
    std::vector<Vector> lhs_points;
    if (strategy == "lhs" && cfg.budget > 0)
        lhs_points = sel::lhs_sample(strat_rng, cfg.descriptor_bounds(), cfg.budget);

    TrialResult result;
    for (int round = 0; round <= cfg.budget; ++round) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.cold_start && round > 0) {
            obj::TrainState fresh = obj::TrainState::create(
                state.tasks, dmode, cfg.train_config(),
                trial_seed ^ strategy_salt(strategy) ^
                    (static_cast<std::uint64_t>(round) * 0x9e3779b97f4a7c15ull));
            fresh.candidate_images = state.candidate_images;
            state = std::move(fresh);
        }
        if (cfg.mode == "pixel") state.reinitialize_vae();
        auto trace = obj::train(state, cfg.training_steps);
        for (auto& row : trace) result.elbo_trace.push_back(row);
        const obj::Metrics metrics =
            obj::predictive_nll_rmse(state, test_tasks, 0, cfg.inference_steps, &eval_space);
        const auto t1 = std::chrono::steady_clock::now();

        RoundRecord rec;
        rec.round = round;
        rec.nll = metrics.nll;
        rec.rmse = metrics.rmse;
        rec.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
        rec.seed = trial_seed;
        rec.strategy = strategy;
        rec.trial = trial_index;

        if (round < cfg.budget) {
            Vector next_descriptor;
            if (strategy == "paml") {
                if (cfg.mode == "pixel") {
                    const auto cands =
                        sel::pixel_candidates(state.vae, state.candidate_images, state.embeddings);
                    const sel::Candidate& chosen = sel::select_next(cands);
                    rec.utility = chosen.utility;
                    rec.selected_latent = chosen.latent;
                    next_descriptor = Vector::Constant(
                        1, pool.lengths[static_cast<std::size_t>(chosen.pool_index)]);
                    remove_pool_row(pool, chosen.pool_index);
                    state.candidate_images = pool.images;
                } else {
                    std::vector<sel::Candidate> cands;
                    if (cfg.candidate_source == "grid") {
                        const sel::LatentGrid grid =
                            sel::make_latent_grid(state.embeddings, cfg.grid_points_per_dim);
                        cands = sel::generate_grid_candidates(state.embeddings, grid);
                    } else {
                        cands = sel::generate_prior_candidates(state.embeddings,
                                                               cfg.grid_points_per_dim);
                    }
                    const auto filtered = sel::filter_candidates(
                        std::move(cands), state.decoder, state.standardizer,
                        cfg.descriptor_bounds());
                    const sel::Candidate& chosen = sel::select_next(filtered.candidates);
                    rec.utility = chosen.utility;
                    rec.selected_latent = chosen.latent;
                    next_descriptor = chosen.descriptor;
                }
            } else if (strategy == "uni") {
                if (cfg.mode == "pixel") {
                    const int pick = strat_rng.uniform_int(static_cast<int>(pool.images.rows()));
                    next_descriptor =
                        Vector::Constant(1, pool.lengths[static_cast<std::size_t>(pick)]);
                    remove_pool_row(pool, pick);
                    state.candidate_images = pool.images;
                } else {
                    next_descriptor = sel::uniform_sample(strat_rng, cfg.descriptor_bounds());
                }
            } else {  // lhs
                next_descriptor = lhs_points[static_cast<std::size_t>(round)];
            }
            rec.selected_descriptor = next_descriptor;
            state.add_task(simulate_task(cfg, next_descriptor, strat_rng));
        }
        result.records.push_back(std::move(rec));
    }

    result.final_embeddings = state.embeddings;
    result.selection_rounds.assign(state.embeddings.size(), -1);
    for (std::size_t i = static_cast<std::size_t>(cfg.n_init); i < state.embeddings.size(); ++i)
        result.selection_rounds[i] = static_cast<int>(i) - cfg.n_init + 1;
    return result;
}

OracleResult run_oracle(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    const std::vector<TaskDataset> test_tasks = build_test_grid(cfg, trial_seed);
    const obj::DescriptorMode dmode = cfg.mode == "pixel" ? obj::DescriptorMode::Pixel
                                                          : obj::DescriptorMode::Gaussian;
    obj::TrainState state = obj::TrainState::create(test_tasks, dmode, cfg.train_config(),
                                                    trial_seed ^ strategy_salt("oracle"));
    if (cfg.mode == "pixel") state.candidate_images = build_pixel_corpus(cfg).images;
    // The active strategies accumulate warm-started optimization across
    // rounds; the oracle trains once, long enough to converge, independent
    // of the acquisition budget.
    obj::train(state, cfg.oracle_training_steps > 0 ? cfg.oracle_training_steps
                                                    : cfg.training_steps);
    const obj::Standardizer eval_space = obj::Standardizer::fit(test_tasks);
    const obj::Metrics metrics =
        obj::predictive_nll_rmse(state, test_tasks, 0, cfg.inference_steps, &eval_space);
    OracleResult r;
    r.nll = metrics.nll;
    r.rmse = metrics.rmse;
    r.seed = trial_seed;
    return r;
}

std::vector<CurvePoint> aggregate(const std::vector<RoundRecord>& records) {
    std::map<std::pair<std::string, int>, std::vector<const RoundRecord*>> groups;
    for (const auto& r : records) groups[{r.strategy, r.round}].push_back(&r);
    std::vector<CurvePoint> out;
    for (auto& [key, rs] : groups) {
        CurvePoint p;
        p.strategy = key.first;
        p.round = key.second;
        p.trials = static_cast<int>(rs.size());
        const double n = static_cast<double>(rs.size());
        for (const auto* r : rs) {
            p.mean_nll += r->nll;
            p.mean_rmse += r->rmse;
        }
        p.mean_nll /= n;
        p.mean_rmse /= n;
        if (rs.size() > 1) {
            double sn = 0.0, sr = 0.0;
            for (const auto* r : rs) {
                sn += (r->nll - p.mean_nll) * (r->nll - p.mean_nll);
                sr += (r->rmse - p.mean_rmse) * (r->rmse - p.mean_rmse);
            }
            p.se_nll = std::sqrt(sn / (n - 1.0)) / std::sqrt(n);
            p.se_rmse = std::sqrt(sr / (n - 1.0)) / std::sqrt(n);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace paml::harness
