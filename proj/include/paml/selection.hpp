#pragma once

#include "paml/objective.hpp"

namespace paml::sel {

/// A scored point in latent space: either a node of the discretized grid or
/// a member of a discrete descriptor set. Discrete-set candidates carry
/// their original descriptor verbatim; grid candidates get theirs decoded.
struct Candidate {
    enum class Provenance { Grid, DiscreteSet };

    Vector latent;
    Vector descriptor;  // raw units
    double utility = 0.0;
    Provenance provenance = Provenance::Grid;
    int pool_index = -1;  // discrete-set: position in the candidate pool
};

/// Self-information of h under the equal-weight mixture of training-task
/// posteriors: u(h) = -log sum_i q_i(h) + log N, evaluated via log-sum-exp.
double utility(const Vector& h, const std::vector<task::TaskEmbedding>& embeddings);

struct LatentGrid {
    Vector lower, upper;     // slack-extended per-dimension endpoints
    int points_per_dim = 100;
};

/// Endpoints are min/max of the embedding means plus the slack values
/// (-10, +10), discretized at `points_per_dim` per dimension.
LatentGrid make_latent_grid(const std::vector<task::TaskEmbedding>& embeddings,
                            int points_per_dim = 100, double slack_min = -10.0,
                            double slack_max = 10.0);

/// Cartesian-product grid, scored against the embedding mixture. Rejects
/// more than three latent dimensions (grid explosion).
std::vector<Candidate> generate_grid_candidates(
    const std::vector<task::TaskEmbedding>& embeddings, const LatentGrid& grid);

/// Candidate generation from prior samples is a recognized configuration
/// that is deliberately not implemented.
std::vector<Candidate> generate_prior_candidates(const std::vector<task::TaskEmbedding>&, int);

struct DescriptorBounds {
    Vector lower, upper;
};

struct FilterResult {
    std::vector<Candidate> candidates;
    bool fallback_used = false;  // empty survivor set, nearest-to-bounds kept
};

/// Decodes every candidate latent, keeps those whose descriptor lies inside
/// the bounds and attaches the decoded descriptor. An empty survivor set
/// falls back to the candidate nearest the bounds box.
FilterResult filter_candidates(std::vector<Candidate> candidates,
                               const desc::DescriptorDecoder& decoder,
                               const obj::Standardizer& standardizer,
                               const DescriptorBounds& bounds);

/// Argmax utility; ties break toward the lowest index.
const Candidate& select_next(const std::vector<Candidate>& candidates);

/// Independent uniform draw per dimension.
Vector uniform_sample(Rng& rng, const DescriptorBounds& bounds);

/// Latin hypercube: one point per stratum per dimension.
std::vector<Vector> lhs_sample(Rng& rng, const DescriptorBounds& bounds, int n);

/// Discrete-set candidates for the pixel regime: encoder means of held-out
/// images, scored against the training-task mixture.
std::vector<Candidate> pixel_candidates(const desc::PixelVae& vae, const Matrix& images,
                                        const std::vector<task::TaskEmbedding>& embeddings);

}  // namespace paml::sel
