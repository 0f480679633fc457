#pragma once

#include "paml/common.hpp"

#include <cstdint>
#include <random>

namespace paml {

/// Deterministic random source. All distributions are implemented on top of
/// the raw 64-bit stream so that sequences are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal();

    /// Integer in [0, n).
    int uniform_int(int n);

    Vector normal_vector(Index n);
    Matrix normal_matrix(Index rows, Index cols);

    /// k distinct indices from [0, n), order randomized.
    std::vector<int> sample_indices(int n, int k);

    /// Independent substream derived from this generator's state.
    Rng fork() { return Rng(gen_() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace paml
