#pragma once

// Exact GP oracle: direct dense solves against (K + noise I). Test-only,
// deliberately independent of the SVGP implementation path.

#include "paml/kernel.hpp"

namespace paml::testing {

struct ExactGpPosterior {
    Vector mean;
    Vector var;
};

inline ExactGpPosterior exact_gp_posterior(const gp::RbfKernel& kernel, const Matrix& X,
                                           const Vector& y, double noise_var,
                                           const Matrix& Xstar) {
    Matrix K = kernel.gram(X, X);
    K.diagonal().array() += noise_var;
    const Eigen::LLT<Matrix> llt(K);
    const Matrix Ks = kernel.gram(Xstar, X);
    ExactGpPosterior out;
    out.mean = Ks * llt.solve(y);
    const Matrix v = llt.solve(Ks.transpose());
    out.var = (kernel.signal_variance() - (Ks.cwiseProduct(v.transpose())).rowwise().sum().array())
                  .cwiseMax(0.0);
    return out;
}

inline double exact_gp_log_marginal(const gp::RbfKernel& kernel, const Matrix& X, const Vector& y,
                                    double noise_var) {
    Matrix K = kernel.gram(X, X);
    K.diagonal().array() += noise_var;
    const Eigen::LLT<Matrix> llt(K);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = y.dot(llt.solve(y));
    return -0.5 * (quad + logdet + static_cast<double>(X.rows()) * std::log(2.0 * M_PI));
}

}  // namespace paml::testing
