#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "eqfree/ode.hpp"

namespace eqfree {

/// Ring road with n_cars vehicles following the optimal-velocity law
///   tau * x_n'' + x_n' = V(x_{n+1} - x_n),  V(d) = v0 (tanh(d - h) + tanh(h)),
/// written as the first-order system  x_n' = y_n,  y_n' = inv_tau (V(dx_n) - y_n).
struct ModelParams {
  int n_cars = 30;
  double road_length = 60.0;
  double inv_tau = 1.7;
  double safety_distance = 2.4;
  double v0 = 1.0;
};

inline void validate(const ModelParams& p) {
  if (p.n_cars < 2) throw std::invalid_argument("n_cars must be at least 2");
  if (!(p.road_length > 0)) throw std::invalid_argument("road_length must be positive");
  if (!(p.inv_tau > 0)) throw std::invalid_argument("inv_tau must be positive");
  if (!(p.safety_distance > 0)) throw std::invalid_argument("safety_distance must be positive");
  if (!(p.v0 > 0)) throw std::invalid_argument("v0 must be positive");
}

inline double mean_headway(const ModelParams& p) { return p.road_length / p.n_cars; }

/// Positions x_n in [0, road_length) and velocities y_n, both of length n_cars.
struct MicroState {
  Eigen::VectorXd positions;
  Eigen::VectorXd velocities;
};

/// Cyclic gaps dx_n = x_{n+1} - x_n reduced mod road_length; they sum to road_length.
struct HeadwayProfile {
  Eigen::VectorXd headways;
};

inline double ring_reduce(double x, double length) {
  double r = std::fmod(x, length);
  if (r < 0) r += length;
  if (r >= length) r -= length;  // r + length can round up to length itself
  return r;
}

inline double optimal_velocity(double d, const ModelParams& p) {
  return p.v0 * (std::tanh(d - p.safety_distance) + std::tanh(p.safety_distance));
}

inline void check_state_size(const MicroState& s, const ModelParams& p) {
  if (s.positions.size() != p.n_cars || s.velocities.size() != p.n_cars)
    throw std::invalid_argument("state size does not match n_cars");
}

inline MicroState vector_field(const MicroState& s, const ModelParams& p) {
  check_state_size(s, p);
  const int n = p.n_cars;
  MicroState d;
  d.positions = s.velocities;
  d.velocities.resize(n);
  for (int i = 0; i < n; ++i) {
    const double gap = ring_reduce(s.positions[(i + 1) % n] - s.positions[i], p.road_length);
    d.velocities[i] = p.inv_tau * (optimal_velocity(gap, p) - s.velocities[i]);
  }
  return d;
}

/// Right-hand side on the flat [positions; velocities] vector, allocation-free.
class MicroRhs {
 public:
  explicit MicroRhs(const ModelParams& p) : p_(p), tanh_h_(std::tanh(p.safety_distance)) {}

  void operator()(double /*t*/, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    const int n = p_.n_cars;
    for (int i = 0; i < n; ++i) {
      const double gap = ring_reduce(y[(i + 1) % n] - y[i], p_.road_length);
      const double v_opt = p_.v0 * (std::tanh(gap - p_.safety_distance) + tanh_h_);
      dy[i] = y[n + i];
      dy[n + i] = p_.inv_tau * (v_opt - y[n + i]);
    }
  }

  const ModelParams& params() const { return p_; }

 private:
  ModelParams p_;
  double tanh_h_;
};

inline Eigen::VectorXd pack_state(const MicroState& s) {
  Eigen::VectorXd y(2 * s.positions.size());
  y << s.positions, s.velocities;
  return y;
}

inline MicroState unpack_state(const Eigen::VectorXd& y, const ModelParams& p,
                               bool reduce = true) {
  const int n = p.n_cars;
  MicroState s;
  s.positions = y.head(n);
  s.velocities = y.tail(n);
  if (reduce)
    for (int i = 0; i < n; ++i) s.positions[i] = ring_reduce(s.positions[i], p.road_length);
  return s;
}

/// Time evolution: positions stay unreduced while integrating and are reduced
/// mod road_length only on output.
inline MicroState evolve(const MicroState& s, double t, const ModelParams& p,
                         const OdeOptions& opts = {}) {
  check_state_size(s, p);
  if (t < 0) throw std::invalid_argument("evolve requires t >= 0");
  Eigen::VectorXd yt = pack_state(s);
  if (t > 0) yt = integrate_ode(MicroRhs(p), yt, 0.0, t, opts);
  return unpack_state(yt, p);
}

inline HeadwayProfile headways(const MicroState& s, const ModelParams& p) {
  check_state_size(s, p);
  const int n = p.n_cars;
  HeadwayProfile out;
  out.headways.resize(n);
  for (int i = 0; i < n; ++i)
    out.headways[i] = ring_reduce(s.positions[(i + 1) % n] - s.positions[i], p.road_length);
  return out;
}

/// Sample standard deviation (divisor N-1) about the mean headway.
inline double sigma(const HeadwayProfile& profile) {
  const auto n = profile.headways.size();
  if (n < 2) throw std::invalid_argument("sigma requires at least two headways");
  const double mean = profile.headways.mean();
  return std::sqrt((profile.headways.array() - mean).square().sum() / double(n - 1));
}

/// Cyclic rotation: element i of the output is element i+shift of the input.
inline HeadwayProfile rotate(const HeadwayProfile& profile, int shift) {
  const int n = int(profile.headways.size());
  HeadwayProfile out;
  out.headways.resize(n);
  const int k = ((shift % n) + n) % n;
  for (int i = 0; i < n; ++i) out.headways[i] = profile.headways[(i + k) % n];
  return out;
}

/// Relabeling symmetry of the ring: car i of the output is car i+shift of the input.
inline MicroState relabel(const MicroState& s, int shift, const ModelParams& p) {
  check_state_size(s, p);
  const int n = p.n_cars;
  const int k = ((shift % n) + n) % n;
  MicroState out;
  out.positions.resize(n);
  out.velocities.resize(n);
  for (int i = 0; i < n; ++i) {
    out.positions[i] = s.positions[(i + k) % n];
    out.velocities[i] = s.velocities[(i + k) % n];
  }
  return out;
}

/// Rotates the profile so its largest headway sits at 1-based position
/// anchor_index; ties pick the smallest original index.
inline HeadwayProfile align(const HeadwayProfile& profile, int anchor_index = 10) {
  const int n = int(profile.headways.size());
  if (anchor_index < 1 || anchor_index > n)
    throw std::invalid_argument("anchor_index out of range");
  int arg = 0;
  for (int i = 1; i < n; ++i)
    if (profile.headways[i] > profile.headways[arg]) arg = i;
  return rotate(profile, arg - (anchor_index - 1));
}

/// Equally spaced cars moving at the speed the spacing prescribes; an exact
/// equilibrium of the headway/velocity dynamics.
inline MicroState free_flow_state(const ModelParams& p) {
  validate(p);
  const int n = p.n_cars;
  const double spacing = mean_headway(p);
  MicroState s;
  s.positions.resize(n);
  for (int i = 0; i < n; ++i) s.positions[i] = spacing * i;
  s.velocities = Eigen::VectorXd::Constant(n, optimal_velocity(spacing, p));
  return s;
}

/// Free flow with positions displaced by amplitude * sin(2 pi n / N), n = 1..N.
inline MicroState sinusoidal_perturbation_state(const ModelParams& p, double amplitude) {
  MicroState s = free_flow_state(p);
  const int n = p.n_cars;
  for (int i = 0; i < n; ++i) {
    s.positions[i] += amplitude * std::sin(2.0 * std::numbers::pi * (i + 1) / n);
    s.positions[i] = ring_reduce(s.positions[i], p.road_length);
  }
  return s;
}

}  // namespace eqfree
