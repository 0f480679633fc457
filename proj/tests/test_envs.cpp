#include "paml/envs.hpp"

#include <doctest.h>

#include <cmath>

using namespace paml;
using namespace paml::envs;

TEST_CASE("cart-pole: resting state with pole down is an exact fixed point") {
    CartPoleParams p{.pendulum_mass = 1.2, .pendulum_length = 0.9};
    const Vector d = dynamics_derivative(EnvParams{p}, Vector::Zero(4), 0.0);
    CHECK(d.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("pendubot and cart-double-pole: all-down rest states are fixed points") {
    PendubotParams pb{.length1 = 1.5, .length2 = 2.0};
    CHECK(dynamics_derivative(EnvParams{pb}, Vector::Zero(4), 0.0).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0));
    CartDoublePoleParams cdp{.length1 = 1.0, .length2 = 2.5};
    CHECK(dynamics_derivative(EnvParams{cdp}, Vector::Zero(6), 0.0).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0));
}

TEST_CASE("cart-pole: upright pole is unstable in the perturbation direction") {
    CartPoleParams p;
    for (double delta : {0.01, -0.01}) {
        Vector s(4);
        s << 0.0, M_PI + delta, 0.0, 0.0;
        const Vector d = dynamics_derivative(EnvParams{p}, s, 0.0);
        // angular acceleration pushes further from upright, same side
        CHECK(d[3] * delta > 0.0);
    }
}

TEST_CASE("dynamics: control bounds are enforced") {
    CartPoleParams p;
    CHECK_THROWS_AS(dynamics_derivative(EnvParams{p}, Vector::Zero(4), 26.0),
                    std::invalid_argument);
    PendubotParams pb;
    CHECK_THROWS_AS(dynamics_derivative(EnvParams{pb}, Vector::Zero(4), -11.0),
                    std::invalid_argument);
    // exactly at the bound is fine
    CHECK_NOTHROW(dynamics_derivative(EnvParams{p}, Vector::Zero(4), 25.0));
}

TEST_CASE("dynamics: non-finite state is reported") {
    CartPoleParams p;
    Vector s = Vector::Zero(4);
    s[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(dynamics_derivative(EnvParams{p}, s, 0.0), numerical_error);
}

TEST_CASE("rk4: linear system dy/dt = y matches the analytic solution") {
    auto f = [](const Vector& y) { return y; };
    Vector y = Vector::Ones(1);
    y = rk4(f, y, 0.1);
    CHECK(std::abs(y[0] - std::exp(0.1)) < 1e-6);
    CHECK(y[0] == doctest::Approx(1.1051708).epsilon(1e-6));
}

TEST_CASE("rk4: zero derivative leaves the state unchanged") {
    CartPoleParams p;
    const Vector s = Vector::Zero(4);
    CHECK(rk4_step(EnvParams{p}, s, 0.0, 0.125) == s);
}

TEST_CASE("rk4: order-4 convergence on the linear system") {
    auto f = [](const Vector& y) { return y; };
    auto integrate = [&](double h) {
        Vector y = Vector::Ones(1);
        const int n = static_cast<int>(std::round(1.0 / h));
        for (int i = 0; i < n; ++i) y = rk4(f, y, h);
        return std::abs(y[0] - std::exp(1.0));
    };
    const double e1 = integrate(0.1);
    const double e2 = integrate(0.05);
    const double e3 = integrate(0.025);
    CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.125));  // 16 +- 2
    CHECK(e2 / e3 == doctest::Approx(16.0).epsilon(0.125));
}

TEST_CASE("energy: unforced drift below 0.1% per 100-step rollout at configured dt") {
    auto drift = [](const EnvParams& p, Vector s0, double dt) {
        const Vector u = Vector::Zero(100);
        const Trajectory traj = rollout(p, s0, u, dt, /*substeps=*/1);
        const double e0 = mechanical_energy(p, traj.states.row(0));
        double worst = 0.0;
        for (Index t = 1; t <= 100; ++t) {
            const double e = mechanical_energy(p, traj.states.row(t));
            worst = std::max(worst, std::abs(e - e0));
        }
        return worst / std::abs(e0);
    };

    // Slow configurations: RK4 energy error scales like (omega dt)^6 per
    // step, so the check uses long pendulums at moderate amplitude.
    CartPoleParams cp{.pendulum_mass = 0.5, .pendulum_length = 4.0};
    Vector s_cp(4);
    s_cp << 0.0, 0.6, 0.0, 0.0;
    CHECK(drift(EnvParams{cp}, s_cp, 0.125) < 1e-3);

    PendubotParams pb{.length1 = 2.0, .length2 = 2.0};
    Vector s_pb(4);
    s_pb << 0.4, -0.3, 0.0, 0.0;
    CHECK(drift(EnvParams{pb}, s_pb, 0.05) < 1e-3);

    CartDoublePoleParams cdp{.length1 = 2.0, .length2 = 2.0};
    Vector s_cdp(6);
    s_cdp << 0.0, 0.4, -0.2, 0.0, 0.0, 0.0;
    CHECK(drift(EnvParams{cdp}, s_cdp, 0.05) < 1e-3);
}

TEST_CASE("control signal: paper ramp example C=25, T=100, A=10") {
    const Vector u = control_signal(25.0, 100, 10);
    CHECK(u[0] == doctest::Approx(12.5));
    CHECK(u[9] == doctest::Approx(25.0));
    CHECK(u[10] == doctest::Approx(-12.5));
    CHECK(u[19] == doctest::Approx(-25.0));
    // linear ramp inside the first alternation
    for (int j = 1; j < 10; ++j)
        CHECK(u[j] - u[j - 1] == doctest::Approx(12.5 / 9.0));
    for (Index t = 0; t < 100; ++t) {
        CHECK(std::abs(u[t]) >= 12.5 - 1e-12);
        CHECK(std::abs(u[t]) <= 25.0 + 1e-12);
    }
}

TEST_CASE("control signal: single alternation ramps C/2 to C across all steps") {
    const Vector u = control_signal(10.0, 50, 1);
    CHECK(u[0] == doctest::Approx(5.0));
    CHECK(u[49] == doctest::Approx(10.0));
    CHECK((u.array() > 0).all());
}

TEST_CASE("control signal: alternations must divide steps") {
    CHECK_THROWS_AS(control_signal(25.0, 100, 7), std::invalid_argument);
}

TEST_CASE("rollout: constant trajectory gives all-zero targets") {
    CartPoleParams p;
    const Vector u = Vector::Zero(20);
    const Trajectory traj = rollout(EnvParams{p}, Vector::Zero(4), u, 0.125);
    const FdTargets fd = fd_targets(traj);
    CHECK(fd.targets.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("rollout: finite differences reconstruct the trajectory exactly") {
    CartPoleParams p{.pendulum_mass = 0.7, .pendulum_length = 1.1};
    const Vector u = control_signal(25.0, 50, 10);
    const Trajectory traj = rollout(EnvParams{p}, Vector::Zero(4), u, 0.125);
    const FdTargets fd = fd_targets(traj);
    Matrix rebuilt(51, 4);
    rebuilt.row(0) = traj.states.row(0);
    for (Index t = 0; t < 50; ++t)
        rebuilt.row(t + 1) = rebuilt.row(t) + fd.targets.row(t);
    CHECK((rebuilt - traj.states).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rollout: substeps resolve stiff whirling that a single step cannot") {
    // Heavy mass on a short pole under full forcing: a raw 0.125 s step
    // explodes, the substepped path stays bounded.
    CartPoleParams p{.pendulum_mass = 5.0, .pendulum_length = 0.5};
    const Vector u = control_signal(25.0, 50, 10);
    CHECK_THROWS_AS(rollout(EnvParams{p}, Vector::Zero(4), u, 0.125, 1), numerical_error);
    const Trajectory traj = rollout(EnvParams{p}, Vector::Zero(4), u, 0.125);
    CHECK(traj.states.allFinite());
    CHECK(traj.states.cwiseAbs().maxCoeff() < 1e3);
}

TEST_CASE("rollout: bit-identical across repeated runs") {
    PendubotParams p{.length1 = 1.3, .length2 = 0.8};
    const Vector u = control_signal(10.0, 100, 5);
    Vector s0(4);
    s0 << 0.1, -0.2, 0.0, 0.0;
    const Trajectory a = rollout(EnvParams{p}, s0, u, 0.05);
    const Trajectory b = rollout(EnvParams{p}, s0, u, 0.05);
    CHECK(a.states == b.states);
}

TEST_CASE("task parameters matter: changing the pendulum mass changes the data") {
    CartPoleParams a{.pendulum_mass = 0.5, .pendulum_length = 1.0};
    CartPoleParams b{.pendulum_mass = 2.5, .pendulum_length = 1.0};
    const Vector u = control_signal(25.0, 50, 10);
    const auto ta = rollout(EnvParams{a}, Vector::Zero(4), u, 0.125);
    const auto tb = rollout(EnvParams{b}, Vector::Zero(4), u, 0.125);
    CHECK((ta.states - tb.states).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("render: identical inputs produce identical images") {
    CartPoleParams p{.pendulum_mass = 1.0, .pendulum_length = 2.0};
    Vector s(4);
    s << 0.0, M_PI, 0.0, 0.0;  // upright
    const Matrix a = render_cartpole(p, s);
    const Matrix b = render_cartpole(p, s);
    CHECK(a == b);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= 1.0);
    CHECK(a.sum() > 0.0);
}

TEST_CASE("render: lit mass grows strictly with pole length over the corpus") {
    Vector s(4);
    s << 0.0, M_PI, 0.0, 0.0;
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
        CartPoleParams p;
        p.pendulum_length = 0.5 + 4.0 * i / 99.0;  // the pixel corpus range
        const double mass = render_cartpole(p, s).sum();
        CHECK(mass > prev);
        prev = mass;
    }
}

TEST_CASE("render: degenerate pole length is rejected") {
    CartPoleParams p;
    p.pendulum_length = 0.0;
    Vector s = Vector::Zero(4);
    CHECK_THROWS_AS(render_cartpole(p, s), std::invalid_argument);
}
