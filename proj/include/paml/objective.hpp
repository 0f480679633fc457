#pragma once

#include "paml/data.hpp"
#include "paml/descriptor.hpp"

namespace paml::obj {

/// Per-dimension affine scaling fitted on training tasks only. Dimensions
/// with vanishing spread fall back to unit scale.
struct Standardizer {
    Vector x_mean, x_std;
    Vector y_mean, y_std;
    Vector psi_mean, psi_std;

    static Standardizer fit(const std::vector<TaskDataset>& tasks);

    Matrix standardize_inputs(const Matrix& x) const;
    Matrix standardize_targets(const Matrix& y) const;
    Matrix unstandardize_targets(const Matrix& y) const;
    Vector standardize_descriptor(const Vector& psi) const;
    Vector unstandardize_descriptor(const Vector& psi) const;
};

enum class DescriptorMode { None, Gaussian, Pixel };

struct TrainConfig {
    Index latent_dim = 2;
    Index inducing_count = 300;
    Index decoder_hidden = 64;
    double descriptor_weight = 1.0;
    diff::AdamConfig adam{};  // Table-1 Adam defaults
    int batch_tasks = 4;
    int batch_points = 100;
    int eval_latent_samples = 8;
    int inference_steps = 100;
    double inference_alpha = 0.05;
    Index vae_hidden = 200;
    int vae_candidate_batch = 0;  // 0 = every candidate each step
    int checkpoint_stride = 50;
};

/// Everything the joint objective trains: the shared SVGP, per-task latent
/// embeddings, the descriptor head, and (pixel regime) the VAE.
struct TrainState {
    TrainConfig config;
    DescriptorMode mode = DescriptorMode::None;
    gp::SvgpModel model;
    std::vector<task::TaskEmbedding> embeddings;
    desc::DescriptorDecoder decoder;  // Gaussian mode
    desc::PixelVae vae;               // Pixel mode
    Standardizer standardizer;
    std::vector<TaskDataset> tasks;
    Matrix candidate_images;  // pixel mode: rows are candidate descriptors
    long step = 0;
    Rng rng{0};

    static TrainState create(std::vector<TaskDataset> tasks, DescriptorMode mode,
                             const TrainConfig& cfg, std::uint64_t seed);

    /// Appends a task with a prior-initialized embedding and refits the
    /// standardizer (the global model is left warm).
    void add_task(TaskDataset ds);

    /// Draws fresh VAE parameters (pixel regime, once per acquisition round).
    void reinitialize_vae();

    std::vector<Matrix*> trainable_parameters();
    task::StandardizedData standardized(const TaskDataset& ds) const;
};

struct ElboGraph {
    diff::Var elbo, lik_dyn, lik_desc, kl_h, kl_u;
    std::vector<std::pair<Matrix*, diff::Var>> bound;  // trainable bindings
};

/// Assembles the four-term objective for a minibatch of tasks and points:
/// descriptor log-likelihood, expected dynamics log-likelihood, latent KL and
/// inducing KL. Likelihood terms are rescaled by (N / batch tasks) and
/// (M_i / batch points); the latent KL over the batch by (N / batch tasks);
/// the inducing KL enters unscaled. One latent sample per task (noise is
/// Q x B, one column per batch task).
ElboGraph build_paml_elbo(diff::Tape& tape, TrainState& state, const std::vector<int>& task_idx,
                          const std::vector<std::vector<int>>& point_idx,
                          const Matrix& latent_noise, const std::vector<int>& candidate_idx = {});

struct ElboTerms {
    double elbo = 0, lik_dyn = 0, lik_desc = 0, kl_h = 0, kl_u = 0;
};

/// Value-only evaluation with frozen noise (tests and traces).
ElboTerms paml_elbo_value(TrainState& state, const std::vector<int>& task_idx,
                          const std::vector<std::vector<int>>& point_idx,
                          const Matrix& latent_noise);

struct TraceRow {
    long step = 0;
    double elbo = 0, kl_h = 0, kl_u = 0, lik_dyn = 0, lik_desc = 0;
};

/// Jointly updates all trainable parameters by Adam on the negative ELBO.
/// On a non-finite objective the learning rate is halved once and training
/// resumes from the last checkpoint; a second failure aborts with the trace
/// attached to the exception message.
std::vector<TraceRow> train(TrainState& state, int steps);

struct Metrics {
    double nll = 0.0;
    double rmse = 0.0;
};

/// Mean per-point Gaussian NLL and RMSE over all test points, in
/// standardized target space. Embeddings for each test task are inferred
/// from its own trajectory (first `shots` points; <= 0 means all) with the
/// global model frozen. By default the metric space is the state's own
/// standardizer; pass `eval_space` to score in a fixed normalization (the
/// harness uses the test grid's statistics so every strategy and the oracle
/// are measured on the same scale).
Metrics predictive_nll_rmse(TrainState& state, const std::vector<TaskDataset>& test_tasks,
                            int shots, int inference_steps,
                            const Standardizer* eval_space = nullptr);

}  // namespace paml::obj
