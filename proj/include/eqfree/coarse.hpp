#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eqfree/continuation.hpp"
#include "eqfree/io.hpp"
#include "eqfree/model.hpp"
#include "eqfree/operators.hpp"

namespace eqfree {

/// Coarse time-stepper: lift, complete velocities, heal for t_skip, then a
/// finite-difference quotient of the embedding over the horizon delta.
/// integrations counts micro trajectories; each coarse_rhs evaluation costs
/// exactly one.
///
/// The aligned profile of a drifting jam ripples with the car-passing period
/// (about 3e-3 in the embedding), which would bury the healed drift: each
/// endpoint observation is therefore the mean over smooth_samples restricts
/// spanning smooth_window time units of the same trajectory. smooth_samples = 1
/// recovers the bare two-snapshot quotient.
struct CoarseStepperConfig {
  double t_skip = 300.0;
  double delta = 240.0;
  double smooth_window = 9.6;
  int smooth_samples = 24;
  OperatorPair ops;
  ModelParams params;
  OdeOptions ode;
  long integrations = 0;
};

/// Pseudo-arclength settings for the macro branches. fd_step drives the
/// embedding columns (phi, r), fd_step_period the period column and fd_step_v0
/// the parameter column; healing flattens the residual, so the steps are much
/// larger than the Newton tolerance. The default initial direction walks v0
/// downward, toward the fold.
struct ContinuationConfig {
  double step_size = 0.01;
  double newton_tol = 3e-6;
  int newton_max_iter = 12;
  double fd_step = 0.02;
  double fd_step_period = 0.05;
  double fd_step_v0 = 0.04;
  int max_steps = 400;
  double v0_min = -std::numeric_limits<double>::infinity();
  double v0_max = std::numeric_limits<double>::infinity();
  int initial_direction = -1;
  int nu = 7;
  Eigen::Vector2d section_direction{1.0, 0.0};
};

/// One accepted solution: unknowns are (phi) for fixed points and (r, T) for
/// periodic orbits. sigma diagnoses the healed microstate behind the point.
struct BranchPoint {
  Eigen::VectorXd unknowns;
  double v0 = 0;
  double sigma = 0;
  bool stable = false;
  bool fold = false;
  double newton_residual = 0;
};

struct Branch {
  std::vector<BranchPoint> points;
  std::string termination;
};

inline void validate(const ContinuationConfig& cont) {
  if (!(cont.step_size > 0)) throw std::invalid_argument("step_size must be positive");
  if (cont.newton_max_iter < 1) throw std::invalid_argument("newton_max_iter must be positive");
  if (!(cont.fd_step > 0) || !(cont.fd_step_period > 0) || !(cont.fd_step_v0 > 0))
    throw std::invalid_argument("finite-difference steps must be positive");
  if (cont.nu < 1) throw std::invalid_argument("nu must be at least 1");
  if (std::abs(cont.section_direction.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("section_direction must be a unit vector");
}

/// Completes a lifted headway profile to a microstate: car 1 at position 0,
/// positions by accumulation, every velocity at the instantaneous optimal
/// value V(headway). The healing step absorbs the slow-manifold mismatch.
inline MicroState complete_microstate(const HeadwayProfile& profile, const ModelParams& p) {
  if (int(profile.headways.size()) != p.n_cars)
    throw std::invalid_argument("profile length does not match n_cars");
  MicroState s;
  s.positions.resize(p.n_cars);
  s.velocities.resize(p.n_cars);
  double x = 0.0;
  for (int i = 0; i < p.n_cars; ++i) {
    s.positions[i] = ring_reduce(x, p.road_length);
    x += profile.headways[i];
    s.velocities[i] = optimal_velocity(profile.headways[i], p);
  }
  return s;
}

namespace detail {

inline void check_coarse(const CoarseStepperConfig& config) {
  if (!(config.t_skip > 0)) throw std::invalid_argument("t_skip must be positive");
  if (!(config.delta > 0)) throw std::invalid_argument("delta must be positive");
  if (!(config.smooth_window > 0))
    throw std::invalid_argument("smooth_window must be positive");
  if (config.smooth_samples < 1)
    throw std::invalid_argument("smooth_samples must be at least 1");
  if (config.params.n_cars != config.ops.data.params.n_cars)
    throw std::invalid_argument("model n_cars does not match the operator dataset");
}

// restriction of a micro snapshot; maps built on aligned data quotient out
// the wave phase, so their snapshots are aligned before embedding
inline Eigen::VectorXd observe(const CoarseStepperConfig& config, const MicroState& s,
                               const ModelParams& p) {
  HeadwayProfile prof = headways(s, p);
  if (config.ops.data.aligned) prof = align(prof);
  return restrict(config.ops, prof);
}

// one micro trajectory from the lifted profile, observed around two times;
// each observation is the window mean of smooth_samples restricts
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> macro_snapshots(CoarseStepperConfig& config,
                                                                   const Eigen::VectorXd& phi,
                                                                   double v0, double t1,
                                                                   double t2) {
  check_coarse(config);
  if (!(t2 - t1 > config.smooth_window))
    throw std::invalid_argument("observation windows overlap: horizon shorter than smooth_window");
  ModelParams p = config.params;
  p.v0 = v0;
  validate(p);
  const LiftResult lifted = lift(config.ops, phi);
  const MicroState s0 = complete_microstate(lifted.microstate, p);
  const int s = config.smooth_samples;
  std::vector<double> times;
  times.reserve(std::size_t(2 * s));
  for (const double t : {t1, t2})
    for (int j = 0; j < s; ++j) times.push_back(t + config.smooth_window * j / s);
  ++config.integrations;
  const std::vector<Eigen::VectorXd> snaps =
      integrate_ode_at(MicroRhs(p), pack_state(s0), 0.0, times, config.ode);
  const int dim = config.ops.dmap.dimension();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(dim), b = Eigen::VectorXd::Zero(dim);
  for (int j = 0; j < s; ++j) {
    a += observe(config, unpack_state(snaps[std::size_t(j)], p), p);
    b += observe(config, unpack_state(snaps[std::size_t(s + j)], p), p);
  }
  return {a / s, b / s};
}

}  // namespace detail

/// Macro vector field F(phi, v0) = [R(Phi_{t_skip+delta}) - R(Phi_{t_skip})] / delta.
inline Eigen::VectorXd coarse_rhs(CoarseStepperConfig& config, const Eigen::VectorXd& phi,
                                  double v0) {
  const auto [a, b] =
      detail::macro_snapshots(config, phi, v0, config.t_skip, config.t_skip + config.delta);
  return (b - a) / config.delta;
}

/// Poincare residual for periodic orbits: the healed embedding of r*phi_PS
/// must return to itself after nu further periods,
/// F(r, T, v0) = Phi~_{t_skip}(r phi_PS) - Phi~_{t_skip + nu T}(r phi_PS).
inline Eigen::Vector2d poincare_return_residual(CoarseStepperConfig& config, double r, double T,
                                                double v0, const ContinuationConfig& cont) {
  validate(cont);
  if (!(T > 0)) throw std::invalid_argument("period must be positive");
  if (config.ops.dmap.dimension() != 2)
    throw std::invalid_argument("periodic orbits need a two-dimensional embedding");
  const Eigen::VectorXd phi = r * cont.section_direction;
  const auto [a, b] =
      detail::macro_snapshots(config, phi, v0, config.t_skip, config.t_skip + cont.nu * T);
  return a - b;
}

namespace detail {

// sigma of the healed microstate behind a macro point
inline double branch_sigma(CoarseStepperConfig& config, const Eigen::VectorXd& phi, double v0) {
  ModelParams p = config.params;
  p.v0 = v0;
  validate(p);
  const LiftResult lifted = lift(config.ops, phi);
  const MicroState s0 = complete_microstate(lifted.microstate, p);
  ++config.integrations;
  return sigma(headways(evolve(s0, config.t_skip, p, config.ode), p));
}

// fixed points are stable where dF/dphi < 0
inline bool fixed_point_stable(CoarseStepperConfig& config, double phi, double v0, double h) {
  Eigen::VectorXd zp(1), zm(1);
  zp(0) = phi + h;
  zm(0) = phi - h;
  return coarse_rhs(config, zp, v0)(0) - coarse_rhs(config, zm, v0)(0) < 0.0;
}

// Stability from the radial action of the nu-period return map on an
// outward-kicked lift. Ring translation invariance pairs the two leading
// eigenfunctions into a sine/cosine couple, so the embedding limit cycle is
// an origin-centered circle and the norm of a window mean tracks the
// trajectory radius up to a common arc-average factor; phase offsets, which
// healing scrambles by O(1), drop out of norms entirely. The kick's radial
// excess decays over one return on a stable orbit and grows on an unstable
// one; differencing against the base trajectory cancels the converged
// point's leftover closure drift. Only measurable growth marks instability,
// so a kick erased by healing (or a marginal orbit at the fold) reads
// stable, and a kick that leaves the chart has certainly grown.
inline bool orbit_stable(CoarseStepperConfig& config, double r, double T, double v0,
                         const ContinuationConfig& cont) {
  const double H = r < 0.0 ? -0.5 * cont.fd_step : 0.5 * cont.fd_step;
  const double t1 = config.t_skip, t2 = config.t_skip + cont.nu * T;
  std::pair<Eigen::VectorXd, Eigen::VectorXd> base, kick;
  try {
    base = macro_snapshots(config, (r * cont.section_direction).eval(), v0, t1, t2);
    kick = macro_snapshots(config, ((r + H) * cont.section_direction).eval(), v0, t1, t2);
  } catch (const OutOfSupportError&) {
    return false;
  }
  const double growth =
      (kick.second.norm() - kick.first.norm()) - (base.second.norm() - base.first.norm());
  return growth <= 5e-5;
}

inline ContinuationSettings to_settings(const ContinuationConfig& cont, int n_unknowns) {
  validate(cont);
  ContinuationSettings s;
  s.step = cont.step_size;
  s.newton_tol = cont.newton_tol;
  s.newton_max_iter = cont.newton_max_iter;
  s.max_points = cont.max_steps;
  s.param_min = cont.v0_min;
  s.param_max = cont.v0_max;
  s.initial_direction = cont.initial_direction;
  s.fd_steps = Eigen::VectorXd::Constant(n_unknowns + 1, cont.fd_step);
  if (n_unknowns == 2) s.fd_steps(1) = cont.fd_step_period;
  s.fd_steps(n_unknowns) = cont.fd_step_v0;
  // the healed residual is piecewise smooth in the lift coordinates and has a
  // spurious flat basin at the embedding origin; see damped_forward_newton
  s.one_sided = true;
  s.damped = true;
  return s;
}

// the raw return residual scales with nu * T while the fixed-point field is a
// per-unit-time quotient; the solver residual divides by the return horizon so
// one newton_tol serves both (the root set is unchanged)
inline Eigen::Vector2d scaled_poincare(CoarseStepperConfig& config, double r, double T, double v0,
                                       const ContinuationConfig& cont) {
  return poincare_return_residual(config, r, T, v0, cont) / (cont.nu * T);
}

// Damped Newton with one-sided differences for the polishing entry points. The
// healed residual is only piecewise smooth (the lift's neighbor set switches
// along a ray) and the return residual has a flat spurious basin around the
// embedding origin, where lifted states heal to free flow; forward differences
// avoid averaging across the kink and the descent condition refuses steps that
// wander off toward the flat basin.
template <class Residual>
bool damped_forward_newton(Residual&& R, Eigen::VectorXd& z, double p, double tol, int max_iter,
                           const Eigen::VectorXd& fd_steps) {
  const int m = int(z.size());
  Eigen::VectorXd r = R(z, p);
  if (!r.allFinite()) return false;
  for (int it = 0; it < max_iter; ++it) {
    if (r.norm() <= tol) return true;
    Eigen::MatrixXd J(m, m);
    Eigen::VectorXd zp = z;
    for (int j = 0; j < m; ++j) {
      zp[j] = z[j] + fd_steps[j];
      J.col(j) = (R(zp, p) - r) / fd_steps[j];
      zp[j] = z[j];
    }
    const Eigen::VectorXd dz = J.fullPivLu().solve(-r);
    if (!dz.allFinite()) return false;
    double damp = 1.0;
    bool stepped = false;
    for (int half = 0; half < 8; ++half) {
      const Eigen::VectorXd z_try = z + damp * dz;
      const Eigen::VectorXd r_try = R(z_try, p);
      if (r_try.allFinite() && (r_try.norm() < r.norm() || r_try.norm() <= tol)) {
        z = z_try;
        r = r_try;
        stepped = true;
        break;
      }
      damp /= 2;
    }
    if (!stepped) return false;
  }
  return r.norm() <= tol;
}

// runs the arclength driver and decorates every accepted point with the
// module's diagnostics
template <class Residual, class SigmaFn, class StableFn>
Branch continue_macro(Residual R, const Eigen::VectorXd& z0, double p0,
                      const ContinuationSettings& settings, SigmaFn sigma_of,
                      StableFn stable_of) {
  Branch out;
  const ContinuationResult res = continue_branch(
      std::move(R), z0, p0, settings, [&](const ContinuationPoint& cp) {
        BranchPoint bp;
        bp.unknowns = cp.unknowns;
        bp.v0 = cp.param;
        bp.newton_residual = cp.residual_norm;
        bp.fold = cp.fold;
        bp.sigma = sigma_of(cp.unknowns, cp.param);
        bp.stable = stable_of(cp.unknowns, cp.param);
        out.points.push_back(std::move(bp));
      });
  out.termination = res.termination;
  return out;
}

}  // namespace detail

/// Newton-polishes a macrostate into a coarse fixed point at fixed v0.
inline BranchPoint polish_fixed_point(CoarseStepperConfig& config, double phi, double v0,
                                      const ContinuationConfig& cont = {}) {
  detail::check_coarse(config);
  validate(cont);
  if (config.ops.dmap.dimension() != 1)
    throw std::invalid_argument("fixed points need a one-dimensional embedding");
  const auto R = [&config](const Eigen::VectorXd& z, double p) { return coarse_rhs(config, z, p); };
  Eigen::VectorXd z(1);
  z(0) = phi;
  Eigen::VectorXd fd(1);
  fd << cont.fd_step;
  if (!detail::damped_forward_newton(R, z, v0, cont.newton_tol, cont.newton_max_iter, fd))
    throw std::runtime_error("fixed-point polish did not converge");
  BranchPoint bp;
  bp.unknowns = z;
  bp.v0 = v0;
  bp.newton_residual = coarse_rhs(config, z, v0).norm();
  bp.sigma = detail::branch_sigma(config, z, v0);
  bp.stable = detail::fixed_point_stable(config, z(0), v0, cont.fd_step);
  return bp;
}

/// Seeds a fixed point from a settled microsimulation at v0: evolve a
/// sinusoidal perturbation to the attractor, restrict, Newton-polish.
inline BranchPoint seed_fixed_point(CoarseStepperConfig& config, double v0,
                                    double settle_time = 2000.0, double amplitude = 2.0,
                                    const ContinuationConfig& cont = {}) {
  detail::check_coarse(config);
  ModelParams p = config.params;
  p.v0 = v0;
  validate(p);
  ++config.integrations;
  const MicroState settled =
      evolve(sinusoidal_perturbation_state(p, amplitude), settle_time, p, config.ode);
  const Eigen::VectorXd phi = detail::observe(config, settled, p);
  return polish_fixed_point(config, phi(0), v0, cont);
}

/// Newton-polishes (r, T) into a periodic orbit at fixed v0.
inline BranchPoint polish_periodic_orbit(CoarseStepperConfig& config, double r, double T,
                                         double v0, const ContinuationConfig& cont = {}) {
  detail::check_coarse(config);
  validate(cont);
  if (config.ops.dmap.dimension() != 2)
    throw std::invalid_argument("periodic orbits need a two-dimensional embedding");
  const auto R = [&config, &cont](const Eigen::VectorXd& z, double p) -> Eigen::VectorXd {
    return detail::scaled_poincare(config, z(0), z(1), p, cont);
  };
  Eigen::VectorXd z(2);
  z << r, T;
  Eigen::VectorXd fd(2);
  fd << cont.fd_step, cont.fd_step_period;
  if (!detail::damped_forward_newton(R, z, v0, cont.newton_tol, cont.newton_max_iter, fd))
    throw std::runtime_error("periodic-orbit polish did not converge");
  BranchPoint bp;
  bp.unknowns = z;
  bp.v0 = v0;
  bp.newton_residual = detail::scaled_poincare(config, z(0), z(1), v0, cont).norm();
  bp.sigma = detail::branch_sigma(config, z(0) * cont.section_direction, v0);
  bp.stable = detail::orbit_stable(config, z(0), z(1), v0, cont);
  return bp;
}

/// Seeds a periodic orbit from a settled microsimulation at v0. The settled
/// wave's embedding winds around the origin; the winding rate seeds T and the
/// interpolated radius where the orbit crosses the section ray seeds r.
inline BranchPoint seed_periodic_orbit(CoarseStepperConfig& config, double v0,
                                       double settle_time = 2000.0, double amplitude = 2.0,
                                       const ContinuationConfig& cont = {}) {
  detail::check_coarse(config);
  validate(cont);
  if (config.ops.dmap.dimension() != 2)
    throw std::invalid_argument("periodic orbits need a two-dimensional embedding");
  ModelParams p = config.params;
  p.v0 = v0;
  validate(p);
  ++config.integrations;
  const MicroState settled =
      evolve(sinusoidal_perturbation_state(p, amplitude), settle_time, p, config.ode);

  const double dt = 0.25;
  const int n_samples = 480;
  std::vector<double> times(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) times[std::size_t(i)] = dt * (i + 1);
  ++config.integrations;
  const std::vector<Eigen::VectorXd> states =
      integrate_ode_at(MicroRhs(p), pack_state(settled), 0.0, times, config.ode);

  const Eigen::Vector2d e1 = cont.section_direction;
  const Eigen::Vector2d e2(-e1(1), e1(0));
  Eigen::VectorXd angle(n_samples), radius(n_samples);
  double prev = 0.0, accum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd z = detail::observe(config, unpack_state(states[std::size_t(i)], p), p);
    const double a = std::atan2(e2.dot(z), e1.dot(z));
    if (i > 0) {
      double d = a - prev;
      while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
      while (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
      accum += d;
    } else {
      accum = a;
    }
    prev = a;
    angle(i) = accum;
    radius(i) = z.norm();
  }

  // least-squares winding rate over the sampled window
  Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n_samples, times.front(), times.back());
  const double tm = t.mean(), am = angle.mean();
  const double omega = (t.array() - tm).cwiseProduct(angle.array() - am).sum() /
                       (t.array() - tm).square().sum();
  if (!(std::abs(omega) > 1e-6))
    throw DegenerateDataError("settled trajectory does not wind around the section origin");
  const double period = 2.0 * std::numbers::pi / std::abs(omega);

  // interpolate the radius at each crossing of the section ray (angle = 0 mod 2 pi)
  double r_sum = 0.0;
  int r_count = 0;
  for (int i = 1; i < n_samples; ++i) {
    const double k0 = std::floor(angle(i - 1) / (2.0 * std::numbers::pi));
    const double k1 = std::floor(angle(i) / (2.0 * std::numbers::pi));
    if (k0 == k1) continue;
    const double target = 2.0 * std::numbers::pi * std::max(k0, k1);
    const double w = (target - angle(i - 1)) / (angle(i) - angle(i - 1));
    r_sum += radius(i - 1) + w * (radius(i) - radius(i - 1));
    ++r_count;
  }
  if (r_count == 0)
    throw DegenerateDataError("settled trajectory never crosses the section ray");
  return polish_periodic_orbit(config, r_sum / r_count, period, v0, cont);
}

/// Branch of coarse fixed points F(phi, v0) = 0 in (phi, v0), folds flagged
/// from the tangent's v0 component. Lift failures and integrator breakdowns
/// inside the corrector poison the attempt, so the driver halves the step
/// instead of aborting.
inline Branch continue_fixed_points(CoarseStepperConfig& config, const BranchPoint& start,
                                    const ContinuationConfig& cont) {
  detail::check_coarse(config);
  if (config.ops.dmap.dimension() != 1)
    throw std::invalid_argument("fixed-point continuation needs a one-dimensional embedding");
  if (start.unknowns.size() != 1)
    throw std::invalid_argument("fixed-point unknowns must be (phi)");
  const auto R = [&config](const Eigen::VectorXd& z, double p) -> Eigen::VectorXd {
    try {
      return coarse_rhs(config, z, p);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return Eigen::VectorXd::Constant(1, std::numeric_limits<double>::quiet_NaN());
  };
  const auto sigma_of = [&config](const Eigen::VectorXd& z, double p) {
    try {
      return detail::branch_sigma(config, z, p);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const auto stable_of = [&config, &cont](const Eigen::VectorXd& z, double p) {
    try {
      return detail::fixed_point_stable(config, z(0), p, cont.fd_step);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return false;
  };
  return detail::continue_macro(R, start.unknowns, start.v0, detail::to_settings(cont, 1),
                                sigma_of, stable_of);
}

/// Branch of coarse periodic orbits F(r, T, v0) = 0 in (r, T, v0).
inline Branch continue_periodic_orbits(CoarseStepperConfig& config, const BranchPoint& start,
                                       const ContinuationConfig& cont) {
  detail::check_coarse(config);
  if (config.ops.dmap.dimension() != 2)
    throw std::invalid_argument("periodic-orbit continuation needs a two-dimensional embedding");
  if (start.unknowns.size() != 2)
    throw std::invalid_argument("periodic-orbit unknowns must be (r, T)");
  const auto poison = [] {
    return Eigen::VectorXd::Constant(2, std::numeric_limits<double>::quiet_NaN()).eval();
  };
  // free flow sits near the embedding origin and, being a genuine fixed
  // point, satisfies the return residual for any period; radii far below the
  // seed's are that spurious family, not a shrunken orbit
  const double r_floor = 0.2 * std::abs(start.unknowns(0));
  const double r_sign = start.unknowns(0) < 0.0 ? -1.0 : 1.0;
  const auto R = [&config, &cont, &poison, r_floor, r_sign](const Eigen::VectorXd& z,
                                                            double p) -> Eigen::VectorXd {
    if (!(z(0) * r_sign > r_floor)) return poison();
    if (!(z(1) * cont.nu > config.smooth_window)) return poison();
    try {
      return detail::scaled_poincare(config, z(0), z(1), p, cont);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return poison();
  };
  const auto sigma_of = [&config, &cont](const Eigen::VectorXd& z, double p) {
    try {
      return detail::branch_sigma(config, z(0) * cont.section_direction, p);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const auto stable_of = [&config, &cont](const Eigen::VectorXd& z, double p) {
    try {
      return detail::orbit_stable(config, z(0), z(1), p, cont);
    } catch (const OutOfSupportError&) {
    } catch (const IntegrationError&) {
    }
    return false;
  };
  return detail::continue_macro(R, start.unknowns, start.v0, detail::to_settings(cont, 2),
                                sigma_of, stable_of);
}

/// CSV dump of a branch: index, v0, first unknown (phi or r), sigma, the
/// period when the branch is periodic, stability flag, Newton residual.
inline void save(const Branch& branch, const std::string& path) {
  const int n = int(branch.points.size());
  const bool periodic = n > 0 && branch.points.front().unknowns.size() == 2;
  Eigen::MatrixXd table(n, periodic ? 7 : 6);
  for (int i = 0; i < n; ++i) {
    const BranchPoint& bp = branch.points[std::size_t(i)];
    int col = 0;
    table(i, col++) = double(i);
    table(i, col++) = bp.v0;
    table(i, col++) = bp.unknowns(0);
    table(i, col++) = bp.sigma;
    if (periodic) table(i, col++) = bp.unknowns(1);
    table(i, col++) = bp.stable ? 1.0 : 0.0;
    table(i, col++) = bp.newton_residual;
  }
  write_csv_matrix(path, table);
}

}  // namespace eqfree
