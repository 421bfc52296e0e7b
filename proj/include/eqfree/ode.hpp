#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "eqfree/errors.hpp"

namespace eqfree {

struct OdeOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double initial_step = 1e-3;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 100000000;
};

/// Adaptive Dormand-Prince 5(4) stepper. The callable must have signature
/// rhs(double t, const VectorXd& y, VectorXd& dy) and fill dy without resizing.
template <class Rhs>
class Dopri5 {
 public:
  Dopri5(Rhs rhs, const Eigen::VectorXd& y0, double t0, const OdeOptions& opts = {})
      : rhs_(std::move(rhs)), opts_(opts), t_(t0), y_(y0), h_(opts.initial_step) {
    const auto n = y0.size();
    for (auto& k : k_) k.resize(n);
    stage_.resize(n);
    y_new_.resize(n);
    rhs_(t_, y_, k_[0]);
  }

  double time() const { return t_; }
  const Eigen::VectorXd& state() const { return y_; }

  /// Advances to exactly t_end (>= current time) and returns the state there.
  const Eigen::VectorXd& advance_to(double t_end) {
    if (t_end < t_) throw std::invalid_argument("Dopri5: target time precedes current time");
    while (t_ < t_end) {
      if (++steps_taken_ > opts_.max_steps)
        throw IntegrationError("step budget exhausted", t_);
      double h = std::min(h_, opts_.max_step);
      bool hits_end = false;
      if (t_ + h >= t_end) {
        h = t_end - t_;
        hits_end = true;
      }
      if (!(h > 0) || t_ + h == t_)
        throw IntegrationError("step size underflow", t_);

      const double err = try_step(h);
      if (err <= 1.0) {
        t_ = hits_end ? t_end : t_ + h;
        y_.swap(y_new_);
        k_[0].swap(k_[6]);  // first-same-as-last
        if (!hits_end) h_ = h * growth_factor(err);
        // a step clamped to hit t_end keeps the previous working step size
      } else {
        h_ = h * shrink_factor(err);
        if (h_ < 1e-14 * std::max(1.0, std::abs(t_)))
          throw IntegrationError("step size underflow", t_);
      }
    }
    return y_;
  }

 private:
  static double growth_factor(double err) {
    if (err <= 0) return 5.0;
    return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
  }
  static double shrink_factor(double err) {
    return std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
  }

  // Returns the scaled error norm of the trial step; fills y_new_ and k_[6].
  double try_step(double h) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    // difference between the 5th- and 4th-order solutions
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    stage_ = y_ + h * (a21 * k_[0]);
    rhs_(t_ + c2 * h, stage_, k_[1]);
    stage_ = y_ + h * (a31 * k_[0] + a32 * k_[1]);
    rhs_(t_ + c3 * h, stage_, k_[2]);
    stage_ = y_ + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
    rhs_(t_ + c4 * h, stage_, k_[3]);
    stage_ = y_ + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
    rhs_(t_ + c5 * h, stage_, k_[4]);
    stage_ = y_ + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] + a64 * k_[3] + a65 * k_[4]);
    rhs_(t_ + h, stage_, k_[5]);
    y_new_ = y_ + h * (a71 * k_[0] + a73 * k_[2] + a74 * k_[3] + a75 * k_[4] + a76 * k_[5]);
    rhs_(t_ + h, y_new_, k_[6]);

    stage_ = h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] + e5 * k_[4] + e6 * k_[5] + e7 * k_[6]);
    double acc = 0;
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      const double scale =
          opts_.abs_tol + opts_.rel_tol * std::max(std::abs(y_[i]), std::abs(y_new_[i]));
      const double q = stage_[i] / scale;
      acc += q * q;
    }
    return std::sqrt(acc / double(y_.size()));
  }

  Rhs rhs_;
  OdeOptions opts_;
  double t_;
  Eigen::VectorXd y_;
  double h_;
  std::size_t steps_taken_ = 0;
  Eigen::VectorXd k_[7];
  Eigen::VectorXd stage_;
  Eigen::VectorXd y_new_;
};

template <class Rhs>
Eigen::VectorXd integrate_ode(Rhs rhs, const Eigen::VectorXd& y0, double t0, double t1,
                              const OdeOptions& opts = {}) {
  Dopri5<Rhs> stepper(std::move(rhs), y0, t0, opts);
  return stepper.advance_to(t1);
}

/// States at each requested time; `times` must be nondecreasing and >= t0.
template <class Rhs>
std::vector<Eigen::VectorXd> integrate_ode_at(Rhs rhs, const Eigen::VectorXd& y0, double t0,
                                              const std::vector<double>& times,
                                              const OdeOptions& opts = {}) {
  Dopri5<Rhs> stepper(std::move(rhs), y0, t0, opts);
  std::vector<Eigen::VectorXd> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(stepper.advance_to(t));
  return out;
}

}  // namespace eqfree
