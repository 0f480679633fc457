#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace paml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Numerical failure that survived all recovery attempts (e.g. Cholesky
/// after the jitter ladder, or a diverged training run).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// FNV-1a over the raw bytes of a set of matrices. Used by tests that must
/// prove a parameter group was left bit-identical.
std::uint64_t checksum(const std::vector<const Matrix*>& mats);
std::uint64_t checksum(const std::vector<Matrix*>& mats);
std::uint64_t checksum(const Matrix& m);

}  // namespace paml
