#pragma once

#include "paml/adam.hpp"
#include "paml/svgp.hpp"

namespace paml::task {

/// Diagonal Gaussian variational posterior q(h_i) = N(mean, diag(exp(log_var)))
/// over one task's latent code. The prior is always N(0, I).
struct TaskEmbedding {
    Matrix mean;     // Q x 1
    Matrix log_var;  // Q x 1

    Index dim() const { return mean.rows(); }
    Vector variances() const { return log_var.array().exp(); }

    static TaskEmbedding prior_init(Index q);
};

/// Reparameterized draw: mean + sqrt(var) .* noise.
Vector sample_latent(const TaskEmbedding& e, const Vector& noise);

/// KL[q(h) || N(0,I)] = 0.5 sum(var + mean^2 - 1 - log var).
double kl_latent(const TaskEmbedding& e);

/// Log density of q at a point (used by the selection utility).
double log_density(const TaskEmbedding& e, const Vector& h);

// ---- tape graph builders ----

struct EmbeddingVars {
    diff::Var mean;
    diff::Var log_var;
};

EmbeddingVars bind_embedding(diff::Tape& tape, const TaskEmbedding& e, bool trainable);
diff::Var sample_latent_graph(diff::Tape& tape, const EmbeddingVars& ev, const Vector& noise);
diff::Var kl_latent_graph(diff::Tape& tape, const EmbeddingVars& ev);

/// Expected Gaussian log-likelihood of targets under the SVGP marginal:
/// sum_{n,d} log N(y | mean, noise_d) - var/(2 noise_d).
diff::Var expected_loglik_graph(diff::Tape& tape, const gp::MarginalVars& mv, diff::Var targets,
                                diff::Var log_noise_row);

/// One task's standardized observations.
struct StandardizedData {
    Matrix inputs;   // M x D_in
    Matrix targets;  // M x D_out
};

/// Optimizes fresh embeddings for the given tasks against the restricted
/// objective (expected dynamics log-likelihood plus latent KL), with every
/// global model parameter held fixed. Separable across tasks, so they are
/// optimized jointly in one loop.
std::vector<TaskEmbedding> infer_embeddings(const gp::SvgpModel& model,
                                            const std::vector<StandardizedData>& data, int steps,
                                            const diff::AdamConfig& adam_cfg, Rng& rng);

/// Single-task convenience wrapper. Throws std::invalid_argument on an empty
/// dataset (the zero-shot path must be used instead).
TaskEmbedding infer_embedding(const gp::SvgpModel& model, const StandardizedData& data, int steps,
                              const diff::AdamConfig& adam_cfg, Rng& rng);

/// Moment-matched Gaussian of the mixture over S latent samples from the
/// given (mean, var) latent Gaussian.
gp::MarginalResult predictive_mixture(const gp::SvgpModel& model, const gp::PredictiveCache& cache,
                                      const Matrix& inputs, const Vector& latent_mean,
                                      const Vector& latent_var, int samples, Rng& rng);

/// Predictive with q(h) replaced by the prior N(0, I).
gp::MarginalResult zero_shot_predictive(const gp::SvgpModel& model, const Matrix& inputs,
                                        int samples, Rng& rng);

}  // namespace paml::task
