#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqfree/continuation.hpp"
#include "eqfree/errors.hpp"
#include "eqfree/fourier.hpp"
#include "eqfree/model.hpp"

namespace eqfree {

/// N-periodic headway wave u(xi) moving at speed c: x_n(t) = x_*(n - c t),
/// u(xi) = x_*(xi + 1) - x_*(xi). d is the mass-correction scalar (zero at
/// roots). Modes live on SpectralGrid(n_grid, n_cars).
struct TravelingWave {
  Eigen::VectorXcd u_modes;
  double c = 0;
  double d = 0;
  double v0 = 1.0;
};

/// Packs a conjugate-symmetric full spectrum into n reals:
/// [a_0, Re a_1, Im a_1, ..., Re a_{n/2-1}, Im a_{n/2-1}, a_{n/2}].
inline Eigen::VectorXd pack_real_spectrum(const Eigen::VectorXcd& modes) {
  const int n = int(modes.size());
  Eigen::VectorXd z(n);
  z[0] = modes[0].real();
  for (int k = 1; k < n / 2; ++k) {
    z[2 * k - 1] = modes[k].real();
    z[2 * k] = modes[k].imag();
  }
  z[n - 1] = modes[n / 2].real();
  return z;
}

inline Eigen::VectorXcd unpack_real_spectrum(const Eigen::VectorXd& z) {
  const int n = int(z.size());
  Eigen::VectorXcd modes(n);
  modes[0] = z[0];
  for (int k = 1; k < n / 2; ++k) {
    modes[k] = std::complex<double>(z[2 * k - 1], z[2 * k]);
    modes[n - k] = std::conj(modes[k]);
  }
  modes[n / 2] = z[n - 1];
  return modes;
}

/// Residual whose regular roots are traveling waves:
///   rows 0..n-1 :  c^2 tau u'' - c u' - V(u(xi+1)) + V(u(xi)) + d   on the grid
///   row  n      :  L - sum of u at the N integer points
///   row  n+1    :  integral of u' (u_anchor - u) over one period
/// Unknowns: packed spectrum of u (n reals), then c, then d. The continuation
/// parameter is v0.
class TwResidual {
 public:
  TwResidual(const ModelParams& params, int n_grid)
      : params_(params), grid_(n_grid, double(params.n_cars)) {
    if (n_grid % params.n_cars != 0)
      throw std::invalid_argument("n_grid must be a multiple of n_cars");
    anchor_values_ = Eigen::VectorXd::Constant(n_grid, mean_headway(params));
  }

  const SpectralGrid& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }

  void set_anchor(const Eigen::VectorXcd& u_modes) { anchor_values_ = grid_.to_values(u_modes); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& z, double v0) const {
    const int n = grid_.size();
    const Eigen::VectorXcd modes = unpack_real_spectrum(z.head(n));
    const double c = z[n];
    const double d = z[n + 1];
    const double tau = 1.0 / params_.inv_tau;

    const Eigen::VectorXd u = grid_.to_values(modes);
    const Eigen::VectorXd u_shift = grid_.to_values(grid_.shift(modes, 1.0));
    const Eigen::VectorXd up = grid_.to_values(grid_.derivative(modes, 1));
    const Eigen::VectorXd upp = grid_.to_values(grid_.derivative(modes, 2));

    ModelParams p = params_;
    p.v0 = v0;
    Eigen::VectorXd r(n + 2);
    for (int j = 0; j < n; ++j)
      r[j] = c * c * tau * upp[j] - c * up[j] - optimal_velocity(u_shift[j], p) +
             optimal_velocity(u[j], p) + d;

    const int stride = n / params_.n_cars;
    double mass = 0;
    for (int i = 0; i < params_.n_cars; ++i) mass += u[i * stride];
    r[n] = params_.road_length - mass;

    r[n + 1] = grid_.spacing() * up.dot(anchor_values_ - u);
    return r;
  }

  /// Fraction of the fluctuation energy of V(u(xi+1)) in the top third of the
  /// spectrum; values above ~1e-10 indicate the grid under-resolves the wave.
  double aliasing_fraction(const Eigen::VectorXcd& u_modes, double v0) const {
    ModelParams p = params_;
    p.v0 = v0;
    const Eigen::VectorXd u_shift = grid_.to_values(grid_.shift(u_modes, 1.0));
    Eigen::VectorXd vu(grid_.size());
    for (int j = 0; j < grid_.size(); ++j) vu[j] = optimal_velocity(u_shift[j], p);
    return grid_.top_third_energy_fraction(grid_.to_modes(vu));
  }

 private:
  ModelParams params_;
  SpectralGrid grid_;
  Eigen::VectorXd anchor_values_;
};

/// Headways of the wave at the N integer collocation points.
inline Eigen::VectorXd wave_integer_headways(const TravelingWave& wave, const ModelParams& p) {
  const int n = int(wave.u_modes.size());
  SpectralGrid grid(n, double(p.n_cars));
  const Eigen::VectorXd u = grid.to_values(wave.u_modes);
  const int stride = n / p.n_cars;
  Eigen::VectorXd out(p.n_cars);
  for (int i = 0; i < p.n_cars; ++i) out[i] = u[i * stride];
  return out;
}

inline double wave_sigma(const TravelingWave& wave, const ModelParams& p) {
  HeadwayProfile prof;
  prof.headways = wave_integer_headways(wave, p);
  return sigma(prof);
}

/// Reconstructs the microstate the wave passes through at t = 0: positions by
/// cumulative summation of the integer-point headways (car 1 at 0), velocities
/// from the co-moving profile, y(xi) = vbar - c chi'(xi). The mean speed vbar
/// is the profile average of V(u); it is not -c L/N, because the headway
/// pattern drifts through the cars at rate c while the cars themselves advance
/// at vbar. Positions therefore gain a uniform ring translation vbar/|c| - L/N
/// per relabeling period; headways and velocities recur exactly.
inline MicroState microstate_from_wave(const TravelingWave& wave, const ModelParams& params) {
  const int n = int(wave.u_modes.size());
  if (n % params.n_cars != 0) throw std::invalid_argument("wave grid incompatible with n_cars");
  ModelParams p = params;
  p.v0 = wave.v0;
  SpectralGrid grid(n, double(p.n_cars));
  const int stride = n / p.n_cars;
  const Eigen::VectorXd u = grid.to_values(wave.u_modes);

  MicroState s;
  s.positions.resize(p.n_cars);
  s.velocities.resize(p.n_cars);
  s.positions[0] = 0;
  for (int i = 1; i < p.n_cars; ++i)
    s.positions[i] = s.positions[i - 1] + u[(i - 1) * stride];

  // x_*(xi) = (L/N) xi + chi(xi) with chi periodic; u = (shift - id) chi + L/N,
  // so chi' follows mode-wise. Frequencies divisible by N are killed by
  // shift - id and must carry no u-energy; they are dropped.
  Eigen::VectorXcd chi_p = Eigen::VectorXcd::Zero(n);
  const double period = double(p.n_cars);
  for (int k = 0; k < n; ++k) {
    const int f = grid.signed_frequency(k);
    if (f == 0 || f % p.n_cars == 0) continue;
    const double phase = 2.0 * std::numbers::pi * f / period;
    const std::complex<double> omega(std::cos(phase), std::sin(phase));
    const std::complex<double> ik(0.0, 2.0 * std::numbers::pi * f / period);
    chi_p[k] = wave.u_modes[k] * ik / (omega - 1.0);
  }
  const Eigen::VectorXd chi_p_vals = grid.to_values(chi_p);
  double vbar = 0;
  for (int j = 0; j < n; ++j) vbar += optimal_velocity(u[j], p);
  vbar /= n;
  for (int i = 0; i < p.n_cars; ++i)
    s.velocities[i] = vbar - wave.c * chi_p_vals[i * stride];
  for (int i = 0; i < p.n_cars; ++i) s.positions[i] = ring_reduce(s.positions[i], p.road_length);
  return s;
}

struct FloquetReport {
  Eigen::VectorXcd multipliers;
  Eigen::VectorXcd exponents;  // log(multiplier) / t_per
  int zero_multiplicity = 0;
  double gap = 0;  // min |exponent| over the nonzero group
  double max_real_nonzero = -std::numeric_limits<double>::infinity();  // stability indicator
  double t_per = 0;
};

/// Spectrum of the linearized one-car-shift return map about the wave: the
/// variational equations of the 2N-dimensional microsystem are integrated over
/// t_per = 1/|c| and composed with the index shift that maps the trajectory
/// back onto itself.
inline FloquetReport floquet_spectrum(const TravelingWave& wave, const ModelParams& params,
                                      double zero_tol = 1e-5,
                                      const OdeOptions& ode_opts = {}) {
  if (std::abs(wave.c) < 1e-8) throw std::invalid_argument("wave speed too close to zero");
  ModelParams p = params;
  p.v0 = wave.v0;
  const int n = p.n_cars;
  const int dim = 2 * n;
  const double t_per = 1.0 / std::abs(wave.c);

  const MicroState base = microstate_from_wave(wave, p);

  // combined state: [x; y; columns of the tangent matrix W]
  Eigen::VectorXd y0(dim + dim * dim);
  y0.head(dim) = pack_state(base);
  Eigen::Map<Eigen::MatrixXd>(y0.data() + dim, dim, dim).setIdentity();

  const double tanh_h = std::tanh(p.safety_distance);
  Eigen::VectorXd vprime(n);
  auto rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    for (int i = 0; i < n; ++i) {
      const double gap = ring_reduce(y[(i + 1) % n] - y[i], p.road_length);
      const double th = std::tanh(gap - p.safety_distance);
      dy[i] = y[n + i];
      dy[n + i] = p.inv_tau * (p.v0 * (th + tanh_h) - y[n + i]);
      vprime[i] = p.v0 * (1.0 - th * th);
    }
    for (int col = 0; col < dim; ++col) {
      const auto w = y.segment(dim + col * dim, dim);
      auto dw = dy.segment(dim + col * dim, dim);
      for (int i = 0; i < n; ++i) {
        dw[i] = w[n + i];
        dw[n + i] = p.inv_tau * (vprime[i] * (w[(i + 1) % n] - w[i]) - w[n + i]);
      }
    }
  };

  const Eigen::VectorXd yt = integrate_ode(rhs, y0, 0.0, t_per, ode_opts);
  const Eigen::MatrixXd monodromy =
      Eigen::Map<const Eigen::MatrixXd>(yt.data() + dim, dim, dim);

  // index shift S with (Sv)_i = v_{i-1} on both position and velocity blocks;
  // it undoes the one-car advance of the wave over t_per (c < 0)
  Eigen::MatrixXd composed(dim, dim);
  const int shift = wave.c < 0 ? 1 : -1;
  for (int i = 0; i < n; ++i) {
    const int j = ((i - shift) % n + n) % n;
    composed.row(i) = monodromy.row(j);
    composed.row(n + i) = monodromy.row(n + j);
  }

  FloquetReport rep;
  rep.t_per = t_per;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(composed);
  rep.multipliers = eig.eigenvalues();
  rep.exponents.resize(dim);
  for (int i = 0; i < dim; ++i) rep.exponents[i] = std::log(rep.multipliers[i]) / t_per;

  rep.gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    const double mag = std::abs(rep.exponents[i]);
    if (mag <= zero_tol) {
      ++rep.zero_multiplicity;
    } else {
      rep.gap = std::min(rep.gap, mag);
      rep.max_real_nonzero = std::max(rep.max_real_nonzero, rep.exponents[i].real());
    }
  }
  return rep;
}

/// Estimates the wave from a settled microsimulation: headways give the
/// profile, the drift of the fundamental Fourier phase over a short horizon
/// gives c.
struct TwSeedOptions {
  double amplitude = 2.0;
  double settle_time = 2000;
  double drift_dt = 2.0;
  int n_grid = 240;
};

inline TravelingWave seed_wave_from_simulation(const ModelParams& params,
                                               const TwSeedOptions& opts = {}) {
  const MicroState s0 = sinusoidal_perturbation_state(params, opts.amplitude);
  const MicroState s1 = evolve(s0, opts.settle_time, params);
  const MicroState s2 = evolve(s1, opts.drift_dt, params);
  const Eigen::VectorXd h1 = headways(s1, params).headways;
  const Eigen::VectorXd h2 = headways(s2, params).headways;

  const int n_cars = params.n_cars;
  Eigen::FFT<double> fft;
  Eigen::VectorXcd f1(n_cars), f2(n_cars);
  Eigen::VectorXcd c1 = h1.cast<std::complex<double>>();
  Eigen::VectorXcd c2 = h2.cast<std::complex<double>>();
  fft.fwd(f1, c1);
  fft.fwd(f2, c2);
  if (std::abs(f1[1]) < 1e-9)
    throw DegenerateDataError("profile has no fundamental mode; cannot estimate wave speed");
  // h2(n) = h1(n - c dt) shifts the fundamental phase by -2 pi c dt / N
  const double dphi = std::arg(f2[1] / f1[1]);
  TravelingWave wave;
  wave.c = -dphi * n_cars / (2.0 * std::numbers::pi * opts.drift_dt);
  wave.d = 0;
  wave.v0 = params.v0;
  SpectralGrid grid(opts.n_grid, double(n_cars));
  wave.u_modes = grid.to_modes(spectral_upsample(h1, opts.n_grid));
  return wave;
}

struct TwBranchPoint {
  TravelingWave wave;
  double sigma = 0;
  double residual = 0;
  bool fold = false;
  bool stable = false;
  bool stability_known = false;
  double aliasing = 0;
};

struct TwBranch {
  std::vector<TwBranchPoint> points;
  std::string termination;
  int fold_index = -1;  // first flagged fold, -1 if none
};

struct TwContinuationOptions {
  // defaults resolve the fold to ~1e-3 in sigma; coarser steps land the
  // flagged fold visibly off the turning point
  double step = 0.0025;
  double newton_tol = 1e-10;
  int newton_max_iter = 12;
  int max_points = 400;
  double v0_min = 0.9;
  double v0_max = 1.12;
  int initial_direction = -1;  // toward decreasing v0 (the fold lies below)
  double fd_step = 1e-6;
  double sigma_stop = 0.02;  // terminate when the wave amplitude degenerates
  bool compute_floquet = true;
  double floquet_zero_tol = 1e-5;
};

/// Pseudo-arclength continuation of traveling waves in v0, fold flagged, sigma
/// and Floquet stability recorded per point. The phase-condition anchor is
/// updated to each accepted profile.
inline TwBranch continue_tw(const TravelingWave& start, const ModelParams& params,
                            const TwContinuationOptions& opts = {}) {
  const int n = int(start.u_modes.size());
  TwResidual residual(params, n);
  residual.set_anchor(start.u_modes);

  ContinuationSettings cfg;
  cfg.step = opts.step;
  cfg.newton_tol = opts.newton_tol;
  cfg.newton_max_iter = opts.newton_max_iter;
  cfg.max_points = opts.max_points;
  cfg.param_min = opts.v0_min;
  cfg.param_max = opts.v0_max;
  cfg.initial_direction = opts.initial_direction;
  cfg.fd_steps = Eigen::VectorXd::Constant(n + 3, opts.fd_step);
  cfg.weights = Eigen::VectorXd::Ones(n + 3);

  TwBranch branch;
  ModelParams p = params;
  const auto to_point = [&](const ContinuationPoint& cp) {
    TwBranchPoint bp;
    bp.wave.u_modes = unpack_real_spectrum(cp.unknowns.head(n));
    bp.wave.c = cp.unknowns[n];
    bp.wave.d = cp.unknowns[n + 1];
    bp.wave.v0 = cp.param;
    bp.sigma = wave_sigma(bp.wave, p);
    bp.residual = cp.residual_norm;
    bp.fold = cp.fold;
    bp.aliasing = residual.aliasing_fraction(bp.wave.u_modes, cp.param);
    return bp;
  };

  cfg.stop_predicate = [&](const ContinuationPoint& cp) {
    TravelingWave w;
    w.u_modes = unpack_real_spectrum(cp.unknowns.head(n));
    return wave_sigma(w, p) < opts.sigma_stop;
  };

  const auto on_accept = [&](const ContinuationPoint& cp) {
    TwBranchPoint bp = to_point(cp);
    residual.set_anchor(bp.wave.u_modes);
    if (opts.compute_floquet) {
      const FloquetReport rep = floquet_spectrum(bp.wave, p, opts.floquet_zero_tol);
      bp.stable = rep.max_real_nonzero < 1e-6;
      bp.stability_known = true;
    }
    if (bp.fold && branch.fold_index < 0) branch.fold_index = int(branch.points.size());
    branch.points.push_back(std::move(bp));
  };

  Eigen::VectorXd z0(n + 2);
  z0.head(n) = pack_real_spectrum(start.u_modes);
  z0[n] = start.c;
  z0[n + 1] = start.d;

  const ContinuationResult res =
      continue_branch(std::ref(residual), z0, start.v0, cfg, on_accept);
  branch.termination = res.termination;
  return branch;
}

}  // namespace eqfree
