#pragma once

#include "paml/common.hpp"

#include <memory>
#include <vector>

namespace paml::diff {

using paml::Matrix;

/// Handle to a node on a tape. Only valid for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode automatic differentiation over a tape of matrix-valued
/// primitives. Nodes are appended in topological order; `evaluate` runs the
/// forward pass and caches every intermediate, `backward` accumulates exact
/// adjoints for all leaves.
///
/// Broadcasting: for the elementwise binary ops the left operand carries the
/// result shape; the right operand may be 1x1, a column matching the left's
/// rows, or a row matching the left's columns.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) noexcept;
    Tape& operator=(Tape&&) noexcept;
    ~Tape();

    // Leaves.
    Var parameter(const Matrix& value);
    Var parameter(Index rows, Index cols);  // unbound until set_value
    Var constant(const Matrix& value);
    Var scalar(double value);  // 1x1 constant
    void set_value(Var leaf, const Matrix& value);

    // Elementwise with broadcasting (see class comment).
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);

    // Unary maps.
    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var leaky_relu(Var a, double slope);
    Var clamp_min(Var a, double floor);

    // Structure.
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var reshape(Var a, Index rows, Index cols);  // row-major reinterpretation
    Var hcat(Var a, Var b);
    Var vcat(const std::vector<Var>& parts);
    Var diag_embed(Var a);  // n x 1 -> n x n

    // Reductions.
    Var sum(Var a);      // 1x1
    Var row_sum(Var a);  // n x m -> n x 1
    Var col_sum(Var a);  // n x m -> 1 x m

    // SPD linear algebra. Both add jitter to the diagonal, starting at
    // 1e-6 and doubling on factorization failure up to 1e-2.
    Var chol_solve(Var spd, Var rhs);  // (A + jitter I)^{-1} rhs
    Var logdet_spd(Var spd);

    /// Forward pass. `out` must be 1x1; its value is returned. Throws
    /// std::logic_error on unbound parameters and numerical_error when an
    /// intermediate goes non-finite.
    double evaluate(Var out);

    /// Reverse pass from `out`, which must be 1x1 and evaluated. Adjoints of
    /// nodes not contributing to `out` are exactly zero.
    void backward(Var out);

    const Matrix& value(Var v) const;
    const Matrix& gradient(Var leaf) const;

    std::size_t size() const;

private:
    struct Node;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace paml::diff
