#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqfree {

struct ContinuationPoint {
  Eigen::VectorXd unknowns;
  double param = 0;
  double residual_norm = 0;
  bool fold = false;
};

/// Settings for the bordered pseudo-arclength driver. The residual maps
/// (unknowns z, parameter p) to a vector of size z.size(); the driver follows
/// the solution curve of R(z, p) = 0 in (z, p)-space.
struct ContinuationSettings {
  double step = 0.01;
  double min_step_factor = 1.0 / 16;  // halving floor relative to step
  double newton_tol = 1e-8;
  int newton_max_iter = 12;
  int max_points = 400;
  double param_min = -std::numeric_limits<double>::infinity();
  double param_max = std::numeric_limits<double>::infinity();
  int initial_direction = 1;  // sign of the parameter component of the first tangent
  Eigen::VectorXd fd_steps;   // size z+1; last entry is the parameter step
  Eigen::VectorXd weights;    // arclength metric diag, size z+1; default all ones
  // one-sided Jacobians reuse the base residual and never average across a
  // kink of a piecewise-smooth residual; damping halves Newton updates until
  // the corrector residual decreases. Smooth problems keep the defaults.
  bool one_sided = false;
  bool damped = false;
  // optional early-out, checked on each accepted point (fold refinements included)
  std::function<bool(const ContinuationPoint&)> stop_predicate;
};

struct ContinuationResult {
  std::vector<ContinuationPoint> points;
  std::string termination;
};

namespace detail {

// Finite-difference Jacobian of R in z alone (m x m). fd_steps has size m+1.
// Central by default; one-sided differences against r_base (evaluated here if
// not supplied) stay on one side of any kink.
template <class Residual>
Eigen::MatrixXd fd_jacobian_z(Residual& R, const Eigen::VectorXd& z, double p,
                              const Eigen::VectorXd& fd_steps, bool one_sided = false,
                              const Eigen::VectorXd& r_base = Eigen::VectorXd()) {
  const int m = int(z.size());
  Eigen::MatrixXd J(m, m);
  Eigen::VectorXd zp = z;
  Eigen::VectorXd base;
  if (one_sided) base = r_base.size() == m ? r_base : R(z, p).eval();
  for (int j = 0; j < m; ++j) {
    const double h = fd_steps[j];
    zp[j] = z[j] + h;
    const Eigen::VectorXd r_plus = R(zp, p);
    if (one_sided) {
      J.col(j) = (r_plus - base) / h;
    } else {
      zp[j] = z[j] - h;
      const Eigen::VectorXd r_minus = R(zp, p);
      J.col(j) = (r_plus - r_minus) / (2 * h);
    }
    zp[j] = z[j];
  }
  return J;
}

// Full (z, p) Jacobian (m x (m+1)); the last column differentiates p.
template <class Residual>
Eigen::MatrixXd fd_jacobian(Residual& R, const Eigen::VectorXd& z, double p,
                            const Eigen::VectorXd& fd_steps, bool one_sided = false,
                            const Eigen::VectorXd& r_base = Eigen::VectorXd()) {
  const int m = int(z.size());
  Eigen::MatrixXd J(m, m + 1);
  Eigen::VectorXd base;
  if (one_sided) base = r_base.size() == m ? r_base : R(z, p).eval();
  J.leftCols(m) = fd_jacobian_z(R, z, p, fd_steps, one_sided, base);
  const double hp = fd_steps[m];
  if (one_sided)
    J.col(m) = (R(z, p + hp) - base) / hp;
  else
    J.col(m) = (R(z, p + hp) - R(z, p - hp)) / (2 * hp);
  return J;
}

}  // namespace detail

/// Newton iteration on z at fixed parameter. Returns true on convergence.
template <class Residual>
bool newton_fixed_param(Residual& R, Eigen::VectorXd& z, double p, double tol, int max_iter,
                        const Eigen::VectorXd& fd_steps) {
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd r = R(z, p);
    if (!r.allFinite()) return false;
    if (r.norm() <= tol) return true;
    const Eigen::MatrixXd J = detail::fd_jacobian_z(R, z, p, fd_steps);
    const Eigen::VectorXd dz = J.colPivHouseholderQr().solve(r);
    if (!dz.allFinite()) return false;
    z -= dz;
  }
  return R(z, p).norm() <= tol;
}

/// Pseudo-arclength continuation with a tangent predictor and a bordered Newton
/// corrector. The optional on_accept callback sees every accepted point in
/// order (including the one-level fold refinement points, flagged as folds).
template <class Residual>
ContinuationResult continue_branch(
    Residual R, const Eigen::VectorXd& z0, double p0, const ContinuationSettings& cfg,
    const std::function<void(const ContinuationPoint&)>& on_accept = {}) {
  const int m = int(z0.size());
  if (cfg.fd_steps.size() != m + 1) throw std::invalid_argument("fd_steps must have size z+1");
  Eigen::VectorXd weights =
      cfg.weights.size() == 0 ? Eigen::VectorXd::Ones(m + 1) : cfg.weights;
  if (weights.size() != m + 1) throw std::invalid_argument("weights must have size z+1");

  ContinuationResult out;
  const auto weighted = [&](const Eigen::VectorXd& z, double p) {
    Eigen::VectorXd w(m + 1);
    w.head(m) = z;
    w[m] = p;
    return w.cwiseProduct(weights).eval();
  };
  const auto accept = [&](const Eigen::VectorXd& z, double p, double res, bool fold) {
    ContinuationPoint pt;
    pt.unknowns = z;
    pt.param = p;
    pt.residual_norm = res;
    pt.fold = fold;
    out.points.push_back(pt);
    if (on_accept) on_accept(out.points.back());
  };

  // converge the starting point at fixed parameter
  Eigen::VectorXd z = z0;
  if (!newton_fixed_param(R, z, p0, cfg.newton_tol, cfg.newton_max_iter, cfg.fd_steps)) {
    out.termination = "initial point did not converge";
    return out;
  }
  const Eigen::VectorXd r_init = R(z, p0);
  accept(z, p0, r_init.norm(), false);

  // initial tangent: J_z v = -J_p makes (v, 1) tangent to the curve in raw
  // coordinates; normalize in the weighted metric and orient the parameter
  // component along initial_direction
  Eigen::VectorXd dir(m + 1);
  {
    const Eigen::MatrixXd J = detail::fd_jacobian(R, z, p0, cfg.fd_steps, cfg.one_sided, r_init);
    const Eigen::VectorXd v = J.leftCols(m).colPivHouseholderQr().solve(-J.col(m));
    if (!v.allFinite()) {
      out.termination = "initial tangent solve failed";
      return out;
    }
    dir.head(m) = v.cwiseProduct(weights.head(m));
    dir[m] = weights[m];
    dir /= dir.norm();
    if (dir[m] * cfg.initial_direction < 0) dir = -dir;
  }

  // bordered corrector: solve R(w) = 0, <W(w - w_pred), W d> = 0
  const auto correct = [&](Eigen::VectorXd& zc, double& pc, const Eigen::VectorXd& w_pred,
                           const Eigen::VectorXd& dir) -> bool {
    Eigen::VectorXd r = R(zc, pc);
    double arc = (weighted(zc, pc) - w_pred).dot(dir);
    for (int it = 0; it < cfg.newton_max_iter; ++it) {
      if (!r.allFinite()) return false;
      if (r.norm() <= cfg.newton_tol && std::abs(arc) <= cfg.newton_tol * 10) return true;
      Eigen::MatrixXd M(m + 1, m + 1);
      M.topRows(m) = detail::fd_jacobian(R, zc, pc, cfg.fd_steps, cfg.one_sided, r);
      M.row(m) = (dir.cwiseProduct(weights)).transpose();
      Eigen::VectorXd rhs(m + 1);
      rhs.head(m) = r;
      rhs[m] = arc;
      const Eigen::VectorXd dw = M.colPivHouseholderQr().solve(rhs);
      if (!dw.allFinite()) return false;
      if (!cfg.damped) {
        zc -= dw.head(m);
        pc -= dw[m];
        r = R(zc, pc);
        arc = (weighted(zc, pc) - w_pred).dot(dir);
        continue;
      }
      const double aug = std::hypot(r.norm(), arc);
      double damp = 1.0;
      bool moved = false;
      for (int half = 0; half < 8; ++half) {
        const Eigen::VectorXd z_try = zc - damp * dw.head(m);
        const double p_try = pc - damp * dw[m];
        const Eigen::VectorXd r_try = R(z_try, p_try);
        const double arc_try = (weighted(z_try, p_try) - w_pred).dot(dir);
        if (r_try.allFinite() && (std::hypot(r_try.norm(), arc_try) < aug ||
                                  r_try.norm() <= cfg.newton_tol)) {
          zc = z_try;
          pc = p_try;
          r = r_try;
          arc = arc_try;
          moved = true;
          break;
        }
        damp /= 2;
      }
      if (!moved) return false;
    }
    return r.allFinite() && r.norm() <= cfg.newton_tol &&
           std::abs(arc) <= cfg.newton_tol * 10;
  };

  double step = cfg.step;
  while (int(out.points.size()) < cfg.max_points) {
    const Eigen::VectorXd z_b = out.points.back().unknowns;
    const double p_b = out.points.back().param;
    const Eigen::VectorXd w_b = weighted(z_b, p_b);

    bool accepted = false;
    double step_used = step;
    Eigen::VectorXd zc;
    double pc = 0;
    while (step_used >= cfg.step * cfg.min_step_factor) {
      const Eigen::VectorXd w_pred = w_b + step_used * dir;
      zc = z_b + step_used * dir.head(m).cwiseQuotient(weights.head(m));
      pc = p_b + step_used * dir[m] / weights[m];
      if (correct(zc, pc, w_pred, dir)) {
        accepted = true;
        break;
      }
      step_used /= 2;
    }
    if (!accepted) {
      out.termination = "newton corrector failed at minimum step";
      return out;
    }
    // captured before any fold-refinement accept: on_accept may re-anchor R
    const Eigen::VectorXd r_c = R(zc, pc);
    const double res_c = r_c.norm();

    // tangent at the candidate: J tau = 0, normalized against the incoming
    // direction. A secant between points straddling a fold can keep its
    // parameter sign (the step cuts the corner), so folds are detected from
    // the tangent's parameter component instead.
    Eigen::VectorXd t_new;
    {
      Eigen::MatrixXd M(m + 1, m + 1);
      M.topRows(m) = detail::fd_jacobian(R, zc, pc, cfg.fd_steps, cfg.one_sided, r_c);
      M.row(m) = (dir.cwiseProduct(weights)).transpose();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
      rhs[m] = 1.0;
      const Eigen::VectorXd tau = M.colPivHouseholderQr().solve(rhs);
      t_new = tau.cwiseProduct(weights);
      const double nrm = t_new.norm();
      if (!t_new.allFinite() || nrm == 0) {
        t_new = weighted(zc, pc) - w_b;  // secant fallback
        if (t_new.norm() == 0) {
          out.termination = "stalled (identical consecutive points)";
          return out;
        }
      }
      t_new /= t_new.norm();
      if (t_new.dot(dir) < 0) t_new = -t_new;
    }

    // fold between b and the candidate: refine by one half-step bisection so
    // the flagged point is accurate to half the continuation step
    if (t_new[m] * dir[m] < 0) {
      const Eigen::VectorXd w_half = w_b + 0.5 * step_used * dir;
      Eigen::VectorXd zf = z_b + 0.5 * step_used * dir.head(m).cwiseQuotient(weights.head(m));
      double pf = p_b + 0.5 * step_used * dir[m] / weights[m];
      if (correct(zf, pf, w_half, dir)) {
        accept(zf, pf, R(zf, pf).norm(), true);
      } else {
        out.points.back().fold = true;  // fall back to flagging the pre-fold point
      }
    }

    accept(zc, pc, res_c, false);
    dir = t_new;
    if (step_used < step) step = step_used;
    else if (step < cfg.step) step = std::min(cfg.step, step * 2);

    const double p_new = out.points.back().param;
    if (p_new < cfg.param_min || p_new > cfg.param_max) {
      out.termination = "parameter left its range";
      return out;
    }
    if (cfg.stop_predicate && cfg.stop_predicate(out.points.back())) {
      out.termination = "stop predicate satisfied";
      return out;
    }
  }
  out.termination = "max points reached";
  return out;
}

}  // namespace eqfree
