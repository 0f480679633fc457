#include "paml/selection.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace paml::sel {

double utility(const Vector& h, const std::vector<task::TaskEmbedding>& embeddings) {
    if (embeddings.empty()) throw std::invalid_argument("utility: no embeddings");
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logs;
    logs.reserve(embeddings.size());
    for (const auto& e : embeddings) {
        logs.push_back(task::log_density(e, h));
        max_log = std::max(max_log, logs.back());
    }
    double acc = 0.0;
    for (double lq : logs) acc += std::exp(lq - max_log);
    const double lse = max_log + std::log(acc);
    return -lse + std::log(static_cast<double>(embeddings.size()));
}

LatentGrid make_latent_grid(const std::vector<task::TaskEmbedding>& embeddings,
                            int points_per_dim, double slack_min, double slack_max) {
    if (embeddings.empty()) throw std::invalid_argument("latent grid: no embeddings");
    const Index q = embeddings[0].dim();
    LatentGrid grid;
    grid.points_per_dim = points_per_dim;
    grid.lower = Vector::Constant(q, std::numeric_limits<double>::infinity());
    grid.upper = Vector::Constant(q, -std::numeric_limits<double>::infinity());
    for (const auto& e : embeddings) {
        grid.lower = grid.lower.cwiseMin(e.mean.col(0));
        grid.upper = grid.upper.cwiseMax(e.mean.col(0));
    }
    grid.lower.array() += slack_min;
    grid.upper.array() += slack_max;
    return grid;
}

std::vector<Candidate> generate_grid_candidates(
    const std::vector<task::TaskEmbedding>& embeddings, const LatentGrid& grid) {
    const Index q = grid.lower.size();
    if (q > 3) throw std::invalid_argument("grid candidates: more than 3 latent dimensions");
    if (grid.points_per_dim < 1) throw std::invalid_argument("grid candidates: empty grid");

    std::vector<Vector> axes;
    for (Index d = 0; d < q; ++d) {
        Vector axis(grid.points_per_dim);
        if (grid.points_per_dim == 1) {
            axis[0] = 0.5 * (grid.lower[d] + grid.upper[d]);
        } else {
            for (int i = 0; i < grid.points_per_dim; ++i)
                axis[i] = grid.lower[d] + (grid.upper[d] - grid.lower[d]) * i /
                                              (grid.points_per_dim - 1);
        }
        axes.push_back(std::move(axis));
    }

    Index total = 1;
    for (Index d = 0; d < q; ++d) total *= grid.points_per_dim;
    std::vector<Candidate> out;
    out.reserve(static_cast<std::size_t>(total));
    Vector h(q);
    for (Index flat = 0; flat < total; ++flat) {
        Index rem = flat;
        for (Index d = q - 1; d >= 0; --d) {
            h[d] = axes[static_cast<std::size_t>(d)][rem % grid.points_per_dim];
            rem /= grid.points_per_dim;
        }
        Candidate c;
        c.latent = h;
        c.utility = utility(h, embeddings);
        c.provenance = Candidate::Provenance::Grid;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Candidate> generate_prior_candidates(const std::vector<task::TaskEmbedding>&, int) {
    throw std::runtime_error("unimplemented: prior-sampling candidate generation");
}

FilterResult filter_candidates(std::vector<Candidate> candidates,
                               const desc::DescriptorDecoder& decoder,
                               const obj::Standardizer& standardizer,
                               const DescriptorBounds& bounds) {
    if (candidates.empty()) throw std::invalid_argument("filter_candidates: empty input");
    const Index p = bounds.lower.size();
    const Vector range =
        (bounds.upper - bounds.lower).cwiseMax(1e-12);  // for normalized distances

    // Decode all latents in one pass.
    Matrix latents(static_cast<Index>(candidates.size()), candidates[0].latent.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        latents.row(static_cast<Index>(i)) = candidates[i].latent;
    const Matrix decoded_std = decoder.decode(latents);

    FilterResult result;
    double best_dist = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        Vector psi =
            standardizer.unstandardize_descriptor(decoded_std.row(static_cast<Index>(i)));
        bool inside = true;
        double dist = 0.0;
        for (Index d = 0; d < p; ++d) {
            if (psi[d] < bounds.lower[d] || psi[d] > bounds.upper[d]) inside = false;
            const double excess =
                std::max({bounds.lower[d] - psi[d], psi[d] - bounds.upper[d], 0.0});
            dist += (excess / range[d]) * (excess / range[d]);
        }
        if (dist < best_dist) {
            best_dist = dist;
            best_idx = i;
        }
        if (inside) {
            Candidate c = candidates[i];
            c.descriptor = std::move(psi);
            result.candidates.push_back(std::move(c));
        }
    }
    if (result.candidates.empty()) {
        Candidate c = candidates[best_idx];
        c.descriptor = standardizer.unstandardize_descriptor(
            decoded_std.row(static_cast<Index>(best_idx)));
        // clamp the fallback onto the box so downstream simulation stays valid
        c.descriptor = c.descriptor.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
        result.candidates.push_back(std::move(c));
        result.fallback_used = true;
    }
    return result;
}

const Candidate& select_next(const std::vector<Candidate>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_next: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i].utility > candidates[best].utility) best = i;
    return candidates[best];
}

Vector uniform_sample(Rng& rng, const DescriptorBounds& bounds) {
    const Index p = bounds.lower.size();
    Vector out(p);
    for (Index d = 0; d < p; ++d) {
        if (!std::isfinite(bounds.lower[d]) || !std::isfinite(bounds.upper[d]))
            throw std::invalid_argument("uniform_sample: bounds must be finite");
        out[d] = rng.uniform(bounds.lower[d], bounds.upper[d]);
    }
    return out;
}

std::vector<Vector> lhs_sample(Rng& rng, const DescriptorBounds& bounds, int n) {
    if (n < 1) throw std::invalid_argument("lhs_sample: need at least one point");
    const Index p = bounds.lower.size();
    // one permutation of strata per dimension
    std::vector<std::vector<int>> strata(static_cast<std::size_t>(p));
    for (Index d = 0; d < p; ++d) strata[static_cast<std::size_t>(d)] = rng.sample_indices(n, n);
    std::vector<Vector> out(static_cast<std::size_t>(n), Vector(p));
    for (int i = 0; i < n; ++i) {
        for (Index d = 0; d < p; ++d) {
            const double cell = (strata[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] +
                                 rng.uniform()) /
                                static_cast<double>(n);
            out[static_cast<std::size_t>(i)][d] =
                bounds.lower[d] + cell * (bounds.upper[d] - bounds.lower[d]);
        }
    }
    return out;
}

std::vector<Candidate> pixel_candidates(const desc::PixelVae& vae, const Matrix& images,
                                        const std::vector<task::TaskEmbedding>& embeddings) {
    auto [means, vars] = vae.encode(images);
    (void)vars;  // ranking uses the latent mean only
    std::vector<Candidate> out;
    out.reserve(static_cast<std::size_t>(images.rows()));
    for (Index i = 0; i < images.rows(); ++i) {
        Candidate c;
        c.latent = means.row(i);
        c.descriptor = images.row(i);
        c.utility = utility(c.latent, embeddings);
        c.provenance = Candidate::Provenance::DiscreteSet;
        c.pool_index = static_cast<int>(i);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace paml::sel
