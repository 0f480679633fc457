#pragma once

#include "paml/common.hpp"

#include <variant>

namespace paml::envs {

// State conventions (angles measured from the downward vertical, so the
// all-zeros state is the resting equilibrium):
//   cart-pole:        [x, th, xdot, thdot]
//   pendubot:         [q1, q2, q1dot, q2dot]         (absolute angles)
//   cart-double-pole: [x, q1, q2, xdot, q1dot, q2dot]

struct CartPoleParams {
    double pendulum_mass = 0.5;    // kg
    double pendulum_length = 0.5;  // m
    double cart_mass = 1.0;
    double gravity = 9.81;
};

struct PendubotParams {
    double length1 = 1.0;  // m
    double length2 = 1.0;
    double mass1 = 1.0;  // kg
    double mass2 = 1.0;
    double gravity = 9.81;
};

struct CartDoublePoleParams {
    double length1 = 1.0;
    double length2 = 1.0;
    double mass1 = 1.0;
    double mass2 = 1.0;
    double cart_mass = 1.0;
    double gravity = 9.81;
};

using EnvParams = std::variant<CartPoleParams, PendubotParams, CartDoublePoleParams>;

Index state_dim(const EnvParams& p);
double control_bound(const EnvParams& p);  // 25 N force / 10 Nm torque / 25 N
void validate(const EnvParams& p);         // masses and lengths > 0

/// Time derivative of the state under the analytic equations of motion.
Vector dynamics_derivative(const EnvParams& p, const Vector& state, double control);

/// Total mechanical energy, zero at the resting equilibrium.
double mechanical_energy(const EnvParams& p, const Vector& state);

/// Classical fourth-order Runge-Kutta over a generic derivative.
template <typename Deriv>
Vector rk4(Deriv&& f, const Vector& y, double dt) {
    const Vector k1 = f(y);
    const Vector k2 = f(y + (0.5 * dt) * k1);
    const Vector k3 = f(y + (0.5 * dt) * k2);
    const Vector k4 = f(y + dt * k3);
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// One RK4 step with the control held constant.
Vector rk4_step(const EnvParams& p, const Vector& state, double control, double dt);

/// Alternating ramp control sequence {C/2..C, -C/2..-C, ...} with T/A steps
/// per alternation. Identical for training and test tasks.
Vector control_signal(double bound, int steps, int alternations);

struct Trajectory {
    Matrix states;    // (T+1) x state_dim
    Vector controls;  // T
    double dt = 0.0;
};

/// Integrates the controlled system, recording states every `dt`. The
/// physics advances in RK4 substeps no coarser than 0.01 s (substeps = 0
/// picks that automatically; pass 1 to force a single step per observation),
/// mirroring simulators whose internal step is finer than the control rate.
Trajectory rollout(const EnvParams& p, const Vector& initial_state, const Vector& controls,
                   double dt, int substeps = 0);

/// Regression view of a trajectory: inputs are (x_t, u_t) rows, targets are
/// the finite differences x_{t+1} - x_t.
struct FdTargets {
    Matrix inputs;   // T x (state_dim + 1)
    Matrix targets;  // T x state_dim
};

FdTargets fd_targets(const Trajectory& traj);

/// Deterministic grayscale rasterization of a cart-pole state, values in
/// [0, 1], row-major with row 0 at the top. Pole length maps linearly to
/// pixels over the renderable range.
Matrix render_cartpole(const CartPoleParams& p, const Vector& state, Index size = 32);

void write_pgm(const Matrix& image, const std::string& path);

}  // namespace paml::envs
