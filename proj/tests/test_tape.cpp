#include "paml/tape.hpp"
#include "paml/adam.hpp"
#include "paml/rng.hpp"

#include "fd_check.hpp"

#include <doctest.h>

using namespace paml;
using diff::Tape;
using diff::Var;
using testing::fd_check_leaf;

TEST_CASE("forward: square") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, 3.0));
    Var y = t.mul(x, x);
    CHECK(t.evaluate(y) == doctest::Approx(9.0));
}

TEST_CASE("forward: log of exp") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, 1.7));
    Var y = t.log(t.exp(x));
    CHECK(t.evaluate(y) == doctest::Approx(1.7));
}

TEST_CASE("forward: trace of A A^T is sum of squared entries") {
    Matrix A(2, 2);
    A << 1, 2, 3, 4;
    Tape t;
    Var a = t.parameter(A);
    Var y = t.sum(t.mul(a, a));  // tr(A A^T) = sum_ij A_ij^2
    CHECK(t.evaluate(y) == doctest::Approx(30.0));
}

TEST_CASE("gradient: d(x^2)/dx = 2x") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, 3.0));
    Var y = t.mul(x, x);
    t.evaluate(y);
    t.backward(y);
    CHECK(t.gradient(x)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("gradient: product rule at (2,5)") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, 2.0));
    Var y = t.parameter(Matrix::Constant(1, 1, 5.0));
    Var f = t.mul(x, y);
    t.evaluate(f);
    t.backward(f);
    CHECK(t.gradient(x)(0, 0) == doctest::Approx(5.0));
    CHECK(t.gradient(y)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("errors: unbound parameter, backward before forward") {
    Tape t;
    Var x = t.parameter(2, 2);
    Var y = t.sum(x);
    CHECK_THROWS_AS(t.evaluate(y), std::logic_error);

    Tape t2;
    Var a = t2.parameter(Matrix::Constant(1, 1, 1.0));
    Var b = t2.mul(a, a);
    CHECK_THROWS_AS(t2.backward(b), std::logic_error);
}

TEST_CASE("errors: non-finite intermediate is reported") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, -1.0));
    Var y = t.log(x);
    CHECK_THROWS_AS(t.evaluate(y), numerical_error);
}

TEST_CASE("errors: dimension mismatch at graph build") {
    Tape t;
    Var a = t.parameter(Matrix::Zero(2, 3));
    Var b = t.parameter(Matrix::Zero(4, 2));
    CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
}

TEST_CASE("unused nodes keep exactly zero adjoints") {
    Tape t;
    Var x = t.parameter(Matrix::Constant(1, 1, 2.0));
    Var used = t.mul(x, x);
    Var unused = t.exp(x);
    Var out = t.sum(used);
    t.evaluate(out);
    t.backward(out);
    CHECK(t.gradient(unused).isZero(0.0));
    CHECK(t.gradient(x)(0, 0) == doctest::Approx(4.0));
}

// Every primitive gets a finite-difference check at random points away from
// singularities, repeated over several seeds.
namespace {

void check_fd(Tape& t, Var out, Var leaf) {
    auto rep = fd_check_leaf(t, out, leaf);
    CHECK(rep.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("finite differences: every primitive, 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        const Matrix A = rng.normal_matrix(3, 4);
        const Matrix B = rng.normal_matrix(3, 4);
        const Matrix W = rng.normal_matrix(4, 2);

        {  // add / sub with all broadcast shapes
            Tape t;
            Var a = t.parameter(A);
            Var full = t.parameter(B);
            Var col = t.parameter(rng.normal_matrix(3, 1));
            Var row = t.parameter(rng.normal_matrix(1, 4));
            Var s = t.parameter(rng.normal_matrix(1, 1));
            Var out = t.sum(t.mul(t.sub(t.add(t.add(t.add(a, full), col), row), s), a));
            for (Var v : {a, full, col, row, s}) check_fd(t, out, v);
        }
        {  // mul / div (broadcast divisor kept away from zero)
            Tape t;
            Var a = t.parameter(A);
            Var b = t.parameter(Matrix(B.array() + 4.0));
            Var col = t.parameter(Matrix(rng.normal_matrix(3, 1).array() + 4.0));
            Var out = t.sum(t.div(t.mul(a, b), col));
            for (Var v : {a, b, col}) check_fd(t, out, v);
        }
        {  // matmul, transpose, neg
            Tape t;
            Var a = t.parameter(A);
            Var w = t.parameter(W);
            Var out = t.sum(t.neg(t.matmul(t.transpose(t.matmul(a, w)), a)));
            check_fd(t, out, a);
            check_fd(t, out, w);
        }
        {  // exp, log, tanh, sigmoid
            Tape t;
            Var a = t.parameter(A);
            Var out = t.sum(t.add(t.tanh(a), t.sigmoid(t.log(t.exp(a)))));
            check_fd(t, out, a);
        }
        {  // leaky_relu and clamp_min away from their kinks
            Tape t;
            Var a = t.parameter(Matrix(A.array() + ((A.array() > 0).cast<double>() * 2 - 1) * 0.5));
            Var out = t.sum(t.add(t.leaky_relu(a, 0.2), t.clamp_min(a, -10.0)));
            check_fd(t, out, a);
        }
        {  // reductions and reshape
            Tape t;
            Var a = t.parameter(A);
            Var r = t.reshape(a, 4, 3);
            Var out = t.sum(t.matmul(t.row_sum(r), t.col_sum(r)));
            check_fd(t, out, a);
        }
        {  // hcat, vcat, diag_embed
            Tape t;
            Var a = t.parameter(A);
            Var b = t.parameter(B);
            Var d = t.parameter(rng.normal_matrix(6, 1));
            Var cat = t.hcat(t.vcat({a, b}), t.vcat({b, a}));
            Var out = t.sum(t.matmul(t.diag_embed(d), t.matmul(cat, t.transpose(cat))));
            for (Var v : {a, b, d}) check_fd(t, out, v);
        }
        {  // chol_solve and logdet_spd on a well-conditioned SPD input
            Tape t;
            const Matrix R = rng.normal_matrix(4, 4);
            const Matrix spd = R * R.transpose() + 3.0 * Matrix::Identity(4, 4);
            Var K = t.parameter(spd);
            Var rhs = t.parameter(rng.normal_matrix(4, 2));
            Var solved = t.chol_solve(K, rhs);
            Var out = t.add(t.sum(t.mul(solved, rhs)), t.logdet_spd(K));
            check_fd(t, out, K);
            check_fd(t, out, rhs);
        }
    }
}

TEST_CASE("gradient of a sum equals sum of gradients") {
    Rng rng(7);
    const Matrix A = rng.normal_matrix(3, 3);

    Tape t1;
    Var a1 = t1.parameter(A);
    Var f1 = t1.sum(t1.mul(a1, a1));
    t1.evaluate(f1);
    t1.backward(f1);
    Matrix g1 = t1.gradient(a1);

    Tape t2;
    Var a2 = t2.parameter(A);
    Var f2 = t2.sum(t2.exp(a2));
    t2.evaluate(f2);
    t2.backward(f2);
    Matrix g2 = t2.gradient(a2);

    Tape t3;
    Var a3 = t3.parameter(A);
    Var f3 = t3.add(t3.sum(t3.mul(a3, a3)), t3.sum(t3.exp(a3)));
    t3.evaluate(f3);
    t3.backward(f3);
    CHECK((t3.gradient(a3) - (g1 + g2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters and moments untouched") {
    Matrix p = Matrix::Constant(2, 2, 1.5);
    const Matrix before = p;
    diff::Adam adam;
    adam.step({&p}, {Matrix::Zero(2, 2)});
    CHECK(p == before);
    CHECK(adam.first_moments()[0].isZero(0.0));
    CHECK(adam.second_moments()[0].isZero(0.0));
    CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: first step moves by about -alpha * sign(g)") {
    Matrix p = Matrix::Zero(1, 1);
    diff::Adam adam(diff::AdamConfig{.alpha = 0.01});
    adam.step({&p}, {Matrix::Constant(1, 1, 3.7)});
    // Bias correction makes mhat/sqrt(vhat) = sign(g) exactly on step one.
    CHECK(p(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: two unit-gradient steps land in [-0.021, -0.019]") {
    Matrix p = Matrix::Zero(1, 1);
    diff::Adam adam(diff::AdamConfig{.alpha = 0.01});
    adam.step({&p}, {Matrix::Constant(1, 1, 1.0)});
    adam.step({&p}, {Matrix::Constant(1, 1, 1.0)});
    CHECK(p(0, 0) >= -0.021);
    CHECK(p(0, 0) <= -0.019);
}

TEST_CASE("adam: alpha = 0 is the identity") {
    Rng rng(3);
    Matrix p = rng.normal_matrix(3, 2);
    const Matrix before = p;
    diff::Adam adam(diff::AdamConfig{.alpha = 0.0});
    for (int i = 0; i < 5; ++i) adam.step({&p}, {rng.normal_matrix(3, 2)});
    CHECK(p == before);
}

TEST_CASE("adam: non-finite gradient is rejected") {
    Matrix p = Matrix::Zero(1, 1);
    diff::Adam adam;
    Matrix bad = Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(adam.step({&p}, {bad}), numerical_error);
}
