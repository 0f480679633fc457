#pragma once

#include "paml/common.hpp"
#include "paml/tape.hpp"

namespace paml::gp {

/// Squared-exponential (RBF) kernel with a per-dimension diagonal of squared
/// lengthscales: k(a,b) = sf2 * exp(-0.5 (a-b)^T L^{-1} (a-b)).
/// Hyper-parameters are stored as logs so they stay positive under
/// unconstrained optimization.
struct RbfKernel {
    Matrix log_signal_variance;  // 1 x 1
    Matrix log_sq_lengthscales;  // d x 1, log of diag(L)

    static RbfKernel create(Index input_dim, double signal_variance = 1.0,
                            double lengthscale = 1.0);

    Index input_dim() const { return log_sq_lengthscales.rows(); }
    double signal_variance() const { return std::exp(log_signal_variance(0, 0)); }
    Vector sq_lengthscales() const { return log_sq_lengthscales.array().exp(); }
    Vector lengthscales() const { return log_sq_lengthscales.array().exp().sqrt(); }

    double eval(const Vector& a, const Vector& b) const;

    /// G[i,j] = k(A.row(i), B.row(j)).
    Matrix gram(const Matrix& A, const Matrix& B) const;
};

/// Tape handles for the kernel hyper-parameters.
struct KernelVars {
    diff::Var log_sf2;
    diff::Var log_sq_ls;
};

KernelVars bind_kernel(diff::Tape& tape, const RbfKernel& k, bool trainable);

/// Gram matrix node between two row-point matrices already on the tape.
diff::Var gram_graph(diff::Tape& tape, const KernelVars& kv, diff::Var A, diff::Var B);

}  // namespace paml::gp
