#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eqfree/continuation.hpp"

using namespace eqfree;

namespace {

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd z(1);
  z[0] = v;
  return z;
}

ContinuationSettings line_settings() {
  ContinuationSettings cfg;
  cfg.step = 0.05;
  cfg.newton_tol = 1e-12;
  cfg.max_points = 100;
  cfg.fd_steps = Eigen::VectorXd::Constant(2, 1e-6);
  return cfg;
}

// z = p, a straight solution curve with no folds
Eigen::VectorXd line_residual(const Eigen::VectorXd& z, double p) {
  return scalar(z[0] - p);
}

// unit circle z^2 + p^2 = 1, folds at p = +-1
Eigen::VectorXd circle_residual(const Eigen::VectorXd& z, double p) {
  return scalar(z[0] * z[0] + p * p - 1.0);
}

}  // namespace

TEST_CASE("fixed-parameter Newton solves a cubic", "[continuation]") {
  auto cube = [](const Eigen::VectorXd& z, double p) { return scalar(z[0] * z[0] * z[0] - p); };
  Eigen::VectorXd z = scalar(3.0);
  const Eigen::VectorXd fd = Eigen::VectorXd::Constant(2, 1e-7);
  REQUIRE(newton_fixed_param(cube, z, 8.0, 1e-12, 20, fd));
  CHECK(z[0] == Catch::Approx(2.0).epsilon(1e-10));

  Eigen::VectorXd bad = scalar(0.0);
  auto rootless = [](const Eigen::VectorXd& z, double) { return scalar(z[0] * z[0] + 1.0); };
  CHECK_FALSE(newton_fixed_param(rootless, bad, 0.0, 1e-12, 10, fd));
}

TEST_CASE("line branch walks the parameter range", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.param_max = 0.5;
  cfg.initial_direction = 1;

  const ContinuationResult res = continue_branch(line_residual, scalar(0.0), 0.0, cfg);
  CHECK(res.termination == "parameter left its range");
  REQUIRE(res.points.size() > 10);
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    const ContinuationPoint& pt = res.points[i];
    CHECK(std::abs(pt.unknowns[0] - pt.param) < 1e-10);
    CHECK_FALSE(pt.fold);
    if (i > 0) CHECK(pt.param > res.points[i - 1].param);
  }
  CHECK(res.points.back().param > 0.5 - 0.05);

  SECTION("initial direction flips the march") {
    cfg.param_min = -0.4;
    cfg.param_max = 10.0;
    cfg.initial_direction = -1;
    const ContinuationResult down = continue_branch(line_residual, scalar(0.0), 0.0, cfg);
    CHECK(down.termination == "parameter left its range");
    CHECK(down.points.back().param < -0.4 + 0.05);
  }
}

TEST_CASE("predictor steps are unit arclength in the weighted metric", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.param_max = 0.5;
  cfg.weights = Eigen::VectorXd(2);
  cfg.weights << 1.0, 3.0;

  const ContinuationResult res = continue_branch(line_residual, scalar(0.0), 0.0, cfg);
  REQUIRE(res.points.size() > 3);
  for (std::size_t i = 1; i < res.points.size(); ++i) {
    const double dz = res.points[i].unknowns[0] - res.points[i - 1].unknowns[0];
    const double dp = res.points[i].param - res.points[i - 1].param;
    const double arc = std::hypot(cfg.weights[0] * dz, cfg.weights[1] * dp);
    // the corrector has nothing to do on a straight curve
    CHECK(arc == Catch::Approx(cfg.step).epsilon(1e-9));
  }
}

TEST_CASE("off-curve start converges before stepping", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.param_max = 0.2;
  const ContinuationResult res = continue_branch(line_residual, scalar(0.37), 0.0, cfg);
  REQUIRE_FALSE(res.points.empty());
  CHECK(res.points.front().param == 0.0);
  CHECK(std::abs(res.points.front().unknowns[0]) < 1e-10);
}

TEST_CASE("hopeless initial point reports failure", "[continuation]") {
  auto rootless = [](const Eigen::VectorXd& z, double) { return scalar(z[0] * z[0] + 1.0); };
  const ContinuationResult res = continue_branch(rootless, scalar(0.5), 0.0, line_settings());
  CHECK(res.termination == "initial point did not converge");
  CHECK(res.points.empty());
}

TEST_CASE("circle branch flags its folds and stays on the curve", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.step = 0.05;
  cfg.max_points = 150;
  cfg.param_min = -2.0;
  cfg.param_max = 2.0;

  const ContinuationResult res = continue_branch(circle_residual, scalar(1.0), 0.0, cfg);
  CHECK(res.termination == "max points reached");

  int folds = 0;
  for (const ContinuationPoint& pt : res.points) {
    CHECK(std::abs(pt.unknowns[0] * pt.unknowns[0] + pt.param * pt.param - 1.0) < 1e-8);
    if (pt.fold) {
      ++folds;
      CHECK(std::abs(pt.param) > 0.998);
      CHECK(std::abs(pt.unknowns[0]) < 0.07);
    }
  }
  // 150 points at step 0.05 wrap the circle at least once: both folds seen
  CHECK(folds >= 2);

  SECTION("stop predicate cuts the walk short") {
    cfg.stop_predicate = [](const ContinuationPoint& pt) { return pt.unknowns[0] < 0.5; };
    const ContinuationResult cut = continue_branch(circle_residual, scalar(1.0), 0.0, cfg);
    CHECK(cut.termination == "stop predicate satisfied");
    CHECK(cut.points.back().unknowns[0] < 0.5);
    for (std::size_t i = 0; i + 1 < cut.points.size(); ++i)
      CHECK(cut.points[i].unknowns[0] >= 0.5);
  }
}

TEST_CASE("point budget is honored", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.max_points = 5;
  const ContinuationResult res = continue_branch(line_residual, scalar(0.0), 0.0, cfg);
  CHECK(res.termination == "max points reached");
  CHECK(res.points.size() == 5);
}

TEST_CASE("malformed settings are rejected", "[continuation]") {
  ContinuationSettings cfg = line_settings();
  cfg.fd_steps = Eigen::VectorXd::Constant(3, 1e-6);
  CHECK_THROWS_AS(continue_branch(line_residual, scalar(0.0), 0.0, cfg), std::invalid_argument);

  cfg = line_settings();
  cfg.weights = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(continue_branch(line_residual, scalar(0.0), 0.0, cfg), std::invalid_argument);
}
