#include "paml/kernel.hpp"

#include <cmath>

namespace paml::gp {

RbfKernel RbfKernel::create(Index input_dim, double signal_variance, double lengthscale) {
    if (signal_variance <= 0.0 || lengthscale <= 0.0)
        throw std::invalid_argument("rbf kernel: signal variance and lengthscales must be > 0");
    RbfKernel k;
    k.log_signal_variance = Matrix::Constant(1, 1, std::log(signal_variance));
    k.log_sq_lengthscales = Matrix::Constant(input_dim, 1, 2.0 * std::log(lengthscale));
    return k;
}

double RbfKernel::eval(const Vector& a, const Vector& b) const {
    if (a.size() != input_dim() || b.size() != input_dim())
        throw std::invalid_argument("rbf kernel: input dimension mismatch");
    const Vector d = a - b;
    const double q = (d.array().square() / sq_lengthscales().array()).sum();
    return signal_variance() * std::exp(-0.5 * q);
}

Matrix RbfKernel::gram(const Matrix& A, const Matrix& B) const {
    if (A.cols() != input_dim() || B.cols() != input_dim())
        throw std::invalid_argument("rbf kernel: input dimension mismatch");
    const Vector inv_scale = (-0.5 * log_sq_lengthscales.array()).exp();  // 1/lengthscale
    const Matrix As = A.array().rowwise() * inv_scale.transpose().array();
    const Matrix Bs = B.array().rowwise() * inv_scale.transpose().array();
    const Vector ra = As.rowwise().squaredNorm();
    const Vector rb = Bs.rowwise().squaredNorm();
    Matrix D2 = -2.0 * As * Bs.transpose();
    D2.colwise() += ra;
    D2.rowwise() += rb.transpose();
    return signal_variance() * (-0.5 * D2.array().cwiseMax(0.0)).exp();
}

KernelVars bind_kernel(diff::Tape& tape, const RbfKernel& k, bool trainable) {
    KernelVars kv;
    if (trainable) {
        kv.log_sf2 = tape.parameter(k.log_signal_variance);
        kv.log_sq_ls = tape.parameter(k.log_sq_lengthscales);
    } else {
        kv.log_sf2 = tape.constant(k.log_signal_variance);
        kv.log_sq_ls = tape.constant(k.log_sq_lengthscales);
    }
    return kv;
}

diff::Var gram_graph(diff::Tape& tape, const KernelVars& kv, diff::Var A, diff::Var B) {
    // Scale columns by 1/lengthscale, then assemble squared distances from
    // row norms and a single cross product.
    diff::Var inv_scale_row =
        tape.transpose(tape.exp(tape.mul(kv.log_sq_ls, tape.scalar(-0.5))));
    diff::Var As = tape.mul(A, inv_scale_row);
    diff::Var Bs = tape.mul(B, inv_scale_row);
    diff::Var ra = tape.row_sum(tape.mul(As, As));
    diff::Var rb = tape.row_sum(tape.mul(Bs, Bs));
    diff::Var cross = tape.mul(tape.matmul(As, tape.transpose(Bs)), tape.scalar(-2.0));
    diff::Var d2 = tape.add(tape.add(cross, ra), tape.transpose(rb));
    return tape.mul(tape.exp(tape.mul(d2, tape.scalar(-0.5))), tape.exp(kv.log_sf2));
}

}  // namespace paml::gp
