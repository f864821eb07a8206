#pragma once

#include <array>
#include <cmath>

#include "nca/rng.hpp"

namespace nca {

enum class Action : int { left = 0, right = 1 };

struct CartState {
  double x = 0.0;      // cart position (m)
  double v = 0.0;      // cart velocity (m/s)
  double theta = 0.0;  // pole angle (rad)
  double omega = 0.0;  // pole angular velocity (rad/s)
};

// Classic-control constants (OpenAI gym CartPole).
struct PhysicsConfig {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  double x_threshold = 2.4;
  double theta_threshold = 12.0 * M_PI / 180.0;
};

inline CartState reset_state(Rng& rng) {
  CartState s;
  s.x = uniform(rng, -0.05, 0.05);
  s.v = uniform(rng, -0.05, 0.05);
  s.theta = uniform(rng, -0.05, 0.05);
  s.omega = uniform(rng, -0.05, 0.05);
  return s;
}

struct StepOutcome {
  CartState state;
  bool done = false;
};

// One Euler step of the cart-pole dynamics. Positions advance on the old
// velocities, then velocities on the new accelerations (gym's "euler" mode).
inline StepOutcome step(const CartState& s, Action a,
                        const PhysicsConfig& cfg = {}) {
  const double force = (a == Action::right) ? cfg.force_mag : -cfg.force_mag;
  const double total_mass = cfg.cart_mass + cfg.pole_mass;
  const double polemass_length = cfg.pole_mass * cfg.pole_half_length;

  const double costh = std::cos(s.theta);
  const double sinth = std::sin(s.theta);

  const double temp =
      (force + polemass_length * s.omega * s.omega * sinth) / total_mass;
  const double theta_acc =
      (cfg.gravity * sinth - costh * temp) /
      (cfg.pole_half_length *
       (4.0 / 3.0 - cfg.pole_mass * costh * costh / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * costh / total_mass;

  StepOutcome out;
  out.state.x = s.x + cfg.dt * s.v;
  out.state.v = s.v + cfg.dt * x_acc;
  out.state.theta = s.theta + cfg.dt * s.omega;
  out.state.omega = s.omega + cfg.dt * theta_acc;
  out.done = std::abs(out.state.x) > cfg.x_threshold ||
             std::abs(out.state.theta) > cfg.theta_threshold;
  return out;
}

// Center-favoring reward: 1 at x = 0 falling to 0 at the track edges, and a
// large penalty on the final step of an episode.
inline double reward(const CartState& s, bool is_final,
                     const PhysicsConfig& cfg = {}) {
  if (is_final) return -100.0;
  const double c = std::cos(s.x * M_PI / (2.0 * cfg.x_threshold));
  return c * c;
}

inline std::array<double, 4> observations(const CartState& s) {
  return {s.x, s.v, s.theta, s.omega};
}

}  // namespace nca
