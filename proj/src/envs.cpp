#include "paml/envs.hpp"

#include <cmath>

namespace paml::envs {

namespace {

void check_state(const Vector& state, Index expected) {
    if (state.size() != expected)
        throw std::invalid_argument("envs: state dimension mismatch");
    if (!state.allFinite()) throw numerical_error("envs: non-finite state");
}

void check_control(double u, double bound) {
    if (!std::isfinite(u)) throw numerical_error("envs: non-finite control");
    if (std::abs(u) > bound * (1.0 + 1e-9))
        throw std::invalid_argument("envs: control outside actuator bounds");
}

Vector cartpole_deriv(const CartPoleParams& p, const Vector& s, double u) {
    const double m = p.pendulum_mass, l = p.pendulum_length, M = p.cart_mass, g = p.gravity;
    const double th = s[1], xd = s[2], td = s[3];
    const double c = std::cos(th), sn = std::sin(th);
    Eigen::Matrix2d A;
    A << M + m, m * l * c, m * l * c, m * l * l;
    Eigen::Vector2d rhs(u + m * l * sn * td * td, -m * g * l * sn);
    const Eigen::Vector2d acc = A.ldlt().solve(rhs);
    Vector d(4);
    d << xd, td, acc[0], acc[1];
    return d;
}

double cartpole_energy(const CartPoleParams& p, const Vector& s) {
    const double m = p.pendulum_mass, l = p.pendulum_length, M = p.cart_mass, g = p.gravity;
    const double th = s[1], xd = s[2], td = s[3];
    const double ke = 0.5 * (M + m) * xd * xd + m * l * std::cos(th) * xd * td +
                      0.5 * m * l * l * td * td;
    return ke + m * g * l * (1.0 - std::cos(th));
}

Vector pendubot_deriv(const PendubotParams& p, const Vector& s, double u) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;
    const double q1 = s[0], q2 = s[1], v1 = s[2], v2 = s[3];
    const double delta = q1 - q2;
    const double b = m2 * l1 * l2;
    Eigen::Matrix2d A;
    A << (m1 + m2) * l1 * l1, b * std::cos(delta), b * std::cos(delta), m2 * l2 * l2;
    Eigen::Vector2d rhs(u - b * std::sin(delta) * v2 * v2 - (m1 + m2) * g * l1 * std::sin(q1),
                        b * std::sin(delta) * v1 * v1 - m2 * g * l2 * std::sin(q2));
    const Eigen::Vector2d acc = A.ldlt().solve(rhs);
    Vector d(4);
    d << v1, v2, acc[0], acc[1];
    return d;
}

double pendubot_energy(const PendubotParams& p, const Vector& s) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;
    const double q1 = s[0], q2 = s[1], v1 = s[2], v2 = s[3];
    const double ke = 0.5 * (m1 + m2) * l1 * l1 * v1 * v1 +
                      m2 * l1 * l2 * std::cos(q1 - q2) * v1 * v2 +
                      0.5 * m2 * l2 * l2 * v2 * v2;
    const double pe = (m1 + m2) * g * l1 * (1.0 - std::cos(q1)) +
                      m2 * g * l2 * (1.0 - std::cos(q2));
    return ke + pe;
}

Vector cdp_deriv(const CartDoublePoleParams& p, const Vector& s, double u) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2;
    const double mc = p.cart_mass, g = p.gravity;
    const double q1 = s[1], q2 = s[2], xd = s[3], v1 = s[4], v2 = s[5];
    const double c1 = std::cos(q1), s1 = std::sin(q1);
    const double c2 = std::cos(q2), s2 = std::sin(q2);
    const double delta = q1 - q2;
    const double b = m2 * l1 * l2;
    Eigen::Matrix3d A;
    A << mc + m1 + m2, (m1 + m2) * l1 * c1, m2 * l2 * c2,
        (m1 + m2) * l1 * c1, (m1 + m2) * l1 * l1, b * std::cos(delta),
        m2 * l2 * c2, b * std::cos(delta), m2 * l2 * l2;
    Eigen::Vector3d rhs(u + (m1 + m2) * l1 * s1 * v1 * v1 + m2 * l2 * s2 * v2 * v2,
                        -b * std::sin(delta) * v2 * v2 - (m1 + m2) * g * l1 * s1,
                        b * std::sin(delta) * v1 * v1 - m2 * g * l2 * s2);
    const Eigen::Vector3d acc = A.ldlt().solve(rhs);
    Vector d(6);
    d << xd, v1, v2, acc[0], acc[1], acc[2];
    return d;
}

double cdp_energy(const CartDoublePoleParams& p, const Vector& s) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2;
    const double mc = p.cart_mass, g = p.gravity;
    const double q1 = s[1], q2 = s[2], xd = s[3], v1 = s[4], v2 = s[5];
    const double ke = 0.5 * (mc + m1 + m2) * xd * xd +
                      0.5 * (m1 + m2) * l1 * l1 * v1 * v1 + 0.5 * m2 * l2 * l2 * v2 * v2 +
                      (m1 + m2) * l1 * std::cos(q1) * xd * v1 +
                      m2 * l2 * std::cos(q2) * xd * v2 +
                      m2 * l1 * l2 * std::cos(q1 - q2) * v1 * v2;
    const double pe = (m1 + m2) * g * l1 * (1.0 - std::cos(q1)) +
                      m2 * g * l2 * (1.0 - std::cos(q2));
    return ke + pe;
}

}  // namespace

Index state_dim(const EnvParams& p) {
    return std::visit(
        [](const auto& e) -> Index {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, CartDoublePoleParams>)
                return 6;
            else
                return 4;
        },
        p);
}

double control_bound(const EnvParams& p) {
    return std::holds_alternative<PendubotParams>(p) ? 10.0 : 25.0;
}

void validate(const EnvParams& p) {
    const bool ok = std::visit(
        [](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, CartPoleParams>)
                return e.pendulum_mass > 0 && e.pendulum_length > 0 && e.cart_mass > 0;
            else if constexpr (std::is_same_v<T, PendubotParams>)
                return e.mass1 > 0 && e.mass2 > 0 && e.length1 > 0 && e.length2 > 0;
            else
                return e.mass1 > 0 && e.mass2 > 0 && e.length1 > 0 && e.length2 > 0 &&
                       e.cart_mass > 0;
        },
        p);
    if (!ok) throw std::invalid_argument("envs: masses and lengths must be positive");
}

Vector dynamics_derivative(const EnvParams& p, const Vector& state, double control) {
    validate(p);
    check_state(state, state_dim(p));
    check_control(control, control_bound(p));
    return std::visit(
        [&](const auto& e) -> Vector {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, CartPoleParams>)
                return cartpole_deriv(e, state, control);
            else if constexpr (std::is_same_v<T, PendubotParams>)
                return pendubot_deriv(e, state, control);
            else
                return cdp_deriv(e, state, control);
        },
        p);
}

double mechanical_energy(const EnvParams& p, const Vector& state) {
    check_state(state, state_dim(p));
    return std::visit(
        [&](const auto& e) -> double {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, CartPoleParams>)
                return cartpole_energy(e, state);
            else if constexpr (std::is_same_v<T, PendubotParams>)
                return pendubot_energy(e, state);
            else
                return cdp_energy(e, state);
        },
        p);
}

Vector rk4_step(const EnvParams& p, const Vector& state, double control, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
    Vector next =
        rk4([&](const Vector& s) { return dynamics_derivative(p, s, control); }, state, dt);
    if (!next.allFinite()) throw numerical_error("rk4_step: non-finite result");
    return next;
}

Vector control_signal(double bound, int steps, int alternations) {
    if (steps <= 0 || alternations <= 0 || steps % alternations != 0)
        throw std::invalid_argument("control_signal: alternations must divide steps");
    const int n = steps / alternations;
    Vector u(steps);
    for (int a = 0; a < alternations; ++a) {
        const double sign = (a % 2 == 0) ? 1.0 : -1.0;
        for (int j = 0; j < n; ++j) {
            const double ramp =
                (n == 1) ? 1.0 : static_cast<double>(j) / static_cast<double>(n - 1);
            u[a * n + j] = sign * (0.5 * bound + 0.5 * bound * ramp);
        }
    }
    return u;
}

Trajectory rollout(const EnvParams& p, const Vector& initial_state, const Vector& controls,
                   double dt, int substeps) {
    const Index dim = state_dim(p);
    check_state(initial_state, dim);
    if (substeps == 0) substeps = std::max(1, static_cast<int>(std::ceil(dt / 0.01)));
    if (substeps < 1) throw std::invalid_argument("rollout: substeps must be positive");
    const double h = dt / substeps;
    Trajectory traj;
    traj.dt = dt;
    traj.controls = controls;
    traj.states.resize(controls.size() + 1, dim);
    traj.states.row(0) = initial_state;
    Vector s = initial_state;
    for (Index t = 0; t < controls.size(); ++t) {
        for (int k = 0; k < substeps; ++k) s = rk4_step(p, s, controls[t], h);
        if (s.cwiseAbs().maxCoeff() > 1e6) throw numerical_error("rollout: simulation diverged");
        traj.states.row(t + 1) = s;
    }
    return traj;
}

FdTargets fd_targets(const Trajectory& traj) {
    const Index T = traj.controls.size();
    const Index dim = traj.states.cols();
    FdTargets out;
    out.inputs.resize(T, dim + 1);
    out.targets.resize(T, dim);
    out.inputs.leftCols(dim) = traj.states.topRows(T);
    out.inputs.col(dim) = traj.controls;
    out.targets = traj.states.bottomRows(T) - traj.states.topRows(T);
    return out;
}

}  // namespace paml::envs
