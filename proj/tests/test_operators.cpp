#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "eqfree/operators.hpp"

using namespace eqfree;

namespace {

double snap(double x) { return std::round(x * 1024.0) / 1024.0; }

// rows trace a smooth curve in headway space: a closed loop embeds in two
// dimensions, an open arc in one
Dataset curve_dataset(int m, bool closed, int n_cars = 4) {
  Dataset d;
  d.params.n_cars = n_cars;
  d.params.road_length = 2.0 * n_cars;
  for (int i = 0; i < m; ++i) {
    const double t = closed ? 2.0 * std::numbers::pi * i / m
                            : 0.9 * std::numbers::pi * i / (m - 1);
    HeadwayProfile prof;
    prof.headways.resize(n_cars);
    for (int k = 0; k < n_cars; ++k)
      prof.headways[k] = snap(2.0 + std::sin(t + 0.5 * k) + 0.3 * std::cos(2.0 * t - k));
    d.profiles.push_back(prof);
    d.meta.push_back(RowMeta{});
  }
  d.config.n_samples = m;
  return d;
}

struct Fixture {
  Dataset data;
  DiffusionMap map;
  OperatorPair ops;
};

Fixture build_fixture(int m, bool closed) {
  Fixture f;
  f.data = curve_dataset(m, closed);
  auto [map, report] = embed(f.data);
  f.map = map;
  f.ops = make_operator_pair(f.map, f.data);
  return f;
}

const Fixture& closed_fixture() {
  static const Fixture f = build_fixture(48, true);
  return f;
}

const Fixture& arc_fixture() {
  static const Fixture f = build_fixture(40, false);
  return f;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("operator pair construction validates the map/dataset binding", "[operators]") {
  const Fixture& closed = closed_fixture();
  const Fixture& arc = arc_fixture();
  REQUIRE(closed.map.dimension() == 2);
  REQUIRE(arc.map.dimension() == 1);

  SECTION("defaults pick K from the embedding dimension") {
    CHECK(closed.ops.lift_k == 8);
    CHECK(arc.ops.lift_k == 3);
  }

  SECTION("explicit K is accepted down to D+1 and capped at the row count") {
    CHECK(make_operator_pair(closed.map, closed.data, 3).lift_k == 3);
    CHECK(make_operator_pair(arc.map, arc.data, 2).lift_k == 2);
    CHECK_THROWS_AS(make_operator_pair(closed.map, closed.data, 2), std::invalid_argument);
    CHECK_THROWS_AS(make_operator_pair(arc.map, arc.data, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_operator_pair(arc.map, arc.data, 41), std::invalid_argument);
    CHECK(make_operator_pair(arc.map, arc.data, 40).lift_k == 40);
  }

  SECTION("a map built from different data is rejected") {
    Dataset other = closed.data;
    other.profiles[0].headways(0) += 0.5;
    CHECK_THROWS_AS(make_operator_pair(closed.map, other), std::invalid_argument);
  }

  SECTION("a map without selected eigenvectors is rejected") {
    DiffusionMap empty;
    empty.epsilon = 1.0;
    empty.dataset_fingerprint = fingerprint(closed.data);
    CHECK_THROWS_AS(make_operator_pair(empty, closed.data), std::invalid_argument);
  }
}

TEST_CASE("restriction reproduces in-sample embeddings exactly", "[operators]") {
  for (const Fixture* f : {&closed_fixture(), &arc_fixture()}) {
    double worst = 0.0;
    for (int i = 0; i < f->data.rows(); ++i) {
      const Eigen::VectorXd psi = restrict(f->ops, f->data.profiles[std::size_t(i)]);
      worst = std::max(worst, (psi - f->map.eigenvectors.row(i).transpose()).norm());
    }
    CHECK(worst <= 1e-12);
  }

  SECTION("profile length must match the dataset") {
    HeadwayProfile bad;
    bad.headways = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(restrict(closed_fixture().ops, bad), std::invalid_argument);
  }
}

TEST_CASE("restriction matches the kernel extension formula on new profiles", "[operators]") {
  const Fixture& f = closed_fixture();
  HeadwayProfile mid;
  mid.headways = 0.5 * (f.data.profiles[3].headways + f.data.profiles[4].headways);
  const Eigen::VectorXd got = restrict(f.ops, mid);

  SECTION("brute-force evaluation of the weighted eigenvector sum") {
    const int m = f.data.rows();
    const int d = f.map.dimension();
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) {
      const double dist = (f.data.profiles[std::size_t(i)].headways - mid.headways).norm();
      w(i) = std::exp(-dist * dist / (f.map.epsilon * f.map.epsilon));
    }
    w /= w.sum();
    for (int l = 0; l < d; ++l) {
      const double oracle = w.dot(f.map.eigenvectors.col(l)) / f.map.eigenvalues(l);
      CHECK(got(l) == Catch::Approx(oracle).margin(1e-12));
    }
  }

  SECTION("components stay inside the scaled convex-combination bounds") {
    for (int l = 0; l < f.map.dimension(); ++l) {
      const double lo = f.map.eigenvectors.col(l).minCoeff() / f.map.eigenvalues(l);
      const double hi = f.map.eigenvectors.col(l).maxCoeff() / f.map.eigenvalues(l);
      CHECK(got(l) >= lo - 1e-12);
      CHECK(got(l) <= hi + 1e-12);
    }
  }

  SECTION("profiles far outside the data support are rejected") {
    HeadwayProfile far;
    far.headways = f.data.profiles[0].headways.array() + 1000.0;
    CHECK_THROWS_AS(restrict(f.ops, far), OutOfSupportError);
  }
}

TEST_CASE("lifting an in-sample embedding returns the dataset row", "[operators]") {
  for (const Fixture* f : {&closed_fixture(), &arc_fixture()}) {
    const int row = 3;
    const LiftResult res = lift(f->ops, f->map.eigenvectors.row(row).transpose());
    CHECK(res.neighbor_indices[0] == row);
    CHECK(res.coefficients(0) == 1.0);
    CHECK(res.residual <= 1e-10);
    CHECK_FALSE(res.degraded);
    CHECK((res.microstate.headways.array() ==
           f->data.profiles[std::size_t(row)].headways.array())
              .all());
  }
}

TEST_CASE("K=1 lifting returns the single nearest dataset row", "[operators]") {
  const Fixture& f = arc_fixture();
  OperatorPair one = f.ops;
  one.lift_k = 1;

  Eigen::VectorXd near(1), far(1);
  near(0) = f.map.eigenvectors(7, 0) + 0.25 * (f.map.eigenvectors(8, 0) - f.map.eigenvectors(7, 0));
  far(0) = 10.0;
  for (const Eigen::VectorXd* target : {&near, &far}) {
    int expect = 0;
    for (int i = 1; i < f.data.rows(); ++i)
      if (std::abs(f.map.eigenvectors(i, 0) - (*target)(0)) <
          std::abs(f.map.eigenvectors(expect, 0) - (*target)(0)))
        expect = i;
    const LiftResult res = lift(one, *target);
    CHECK(res.neighbor_indices.size() == 1);
    CHECK(res.neighbor_indices[0] == expect);
    CHECK(res.coefficients.size() == 1);
    CHECK(res.coefficients(0) == 1.0);
    CHECK((res.microstate.headways.array() ==
           f.data.profiles[std::size_t(expect)].headways.array())
              .all());
  }
}

TEST_CASE("lifting a midpoint target meets tolerance on the simplex", "[operators]") {
  for (const Fixture* f : {&closed_fixture(), &arc_fixture()}) {
    const Eigen::VectorXd target =
        0.5 * (f->map.eigenvectors.row(3) + f->map.eigenvectors.row(4)).transpose();
    const LiftResult res = lift(f->ops, target);
    CHECK(res.residual <= 1e-8);
    CHECK_FALSE(res.degraded);
    CHECK(int(res.coefficients.size()) == f->ops.lift_k);
    CHECK(res.coefficients.minCoeff() >= 0.0);
    CHECK(std::abs(res.coefficients.sum() - 1.0) <= 1e-10);

    // microstate is the reported convex combination of the neighbors
    Eigen::VectorXd combo = Eigen::VectorXd::Zero(f->data.params.n_cars);
    for (int i = 0; i < f->ops.lift_k; ++i)
      combo += res.coefficients(i) *
               f->data.profiles[std::size_t(res.neighbor_indices[std::size_t(i)])].headways;
    CHECK((combo - res.microstate.headways).norm() <= 1e-14);

    // reported residual is the actual round-trip error
    const double roundtrip = (restrict(f->ops, res.microstate) - target).norm();
    CHECK(roundtrip == Catch::Approx(res.residual).margin(1e-13));
  }
}

TEST_CASE("far targets come back degraded instead of throwing", "[operators]") {
  const Fixture& f = closed_fixture();
  const Eigen::VectorXd target = 50.0 * f.map.eigenvectors.row(0).transpose();
  const LiftResult res = lift(f.ops, target);
  CHECK(res.degraded);
  CHECK(res.residual > 1.0);
  CHECK(res.coefficients.minCoeff() >= 0.0);
  CHECK(std::abs(res.coefficients.sum() - 1.0) <= 1e-10);
  CHECK(res.microstate.headways.allFinite());

  SECTION("target validation") {
    Eigen::VectorXd bad(1);
    bad(0) = 0.0;
    CHECK_THROWS_AS(lift(f.ops, bad), std::invalid_argument);
    Eigen::VectorXd nan(2);
    nan << 0.0, std::nan("");
    CHECK_THROWS_AS(lift(f.ops, nan), std::invalid_argument);
  }
}

TEST_CASE("identical lift calls give identical results", "[operators]") {
  const Fixture& f = closed_fixture();
  const Eigen::VectorXd target =
      0.5 * (f.map.eigenvectors.row(10) + f.map.eigenvectors.row(11)).transpose();
  const LiftResult a = lift(f.ops, target);
  const LiftResult b = lift(f.ops, target);
  CHECK(a.residual == b.residual);
  CHECK(a.neighbor_indices == b.neighbor_indices);
  CHECK((a.coefficients.array() == b.coefficients.array()).all());
  CHECK((a.microstate.headways.array() == b.microstate.headways.array()).all());
  CHECK(a.degraded == b.degraded);
}

TEST_CASE("lift identity over the embedded dataset stays at optimizer tolerance",
          "[operators]") {
  const Fixture& f = closed_fixture();
  const ValidationReport report = validate_lift_identity(f.ops);
  CHECK(report.coords == f.map.eigenvectors);
  CHECK(int(report.abs_error.size()) == f.data.rows());
  CHECK(report.max_abs_error <= 1e-10);
  CHECK(report.max_abs_error == report.abs_error.maxCoeff());
  CHECK(report.mean_rel_error == Catch::Approx(report.rel_error.mean()).margin(1e-15));

  SECTION("a far target reports its residual rather than throwing") {
    Eigen::MatrixXd targets(1, 2);
    targets = 50.0 * f.map.eigenvectors.row(0);
    const ValidationReport single = validate_lift_identity(f.ops, targets);
    CHECK(single.abs_error(0) > 1.0);
    CHECK(single.rel_error(0) > 0.0);
  }

  SECTION("target dimension must match the embedding") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(validate_lift_identity(f.ops, bad), std::invalid_argument);
  }
}

TEST_CASE("leave-one-out validation reports drop-one perturbation errors", "[operators]") {
  // open arc with one duplicated interior row; the duplicate's removal
  // leaves an identical point behind, so its error carries no extension
  // component and must sit inside the bulk of the distribution
  Dataset data = curve_dataset(120, false);
  data.profiles.push_back(data.profiles[60]);
  data.meta.push_back(data.meta[60]);
  data.config.n_samples = 121;
  const int m = data.rows();

  const ValidationReport report = validate_restriction_loo(data);
  REQUIRE(report.coords.cols() == 1);
  REQUIRE(int(report.abs_error.size()) == m);
  CHECK(report.rel_error.minCoeff() > 0.0);
  CHECK(report.abs_error.allFinite());
  CHECK(report.mean_rel_error == Catch::Approx(report.rel_error.mean()).margin(1e-15));
  CHECK(report.max_abs_error == report.abs_error.maxCoeff());
  CHECK(report.mean_rel_error < 0.05);

  SECTION("both copies of the duplicated row agree and are not outliers") {
    Eigen::VectorXd sorted = report.rel_error;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const double median = sorted(m / 2);
    CHECK(report.rel_error(60) == Catch::Approx(report.rel_error(m - 1)).margin(1e-6));
    CHECK(report.rel_error(60) <= 2.0 * median);
    CHECK(report.rel_error(m - 1) <= 2.0 * median);
  }

  SECTION("errors are largest near the embedding boundary") {
    const double lo = report.coords.col(0).minCoeff();
    const double hi = report.coords.col(0).maxCoeff();
    double outer = 0.0, inner = 0.0;
    int n_outer = 0, n_inner = 0;
    for (int i = 0; i < m; ++i) {
      const double frac = (report.coords(i, 0) - lo) / (hi - lo);
      if (frac < 0.05 || frac > 0.95) {
        outer += report.abs_error(i);
        ++n_outer;
      } else if (frac > 0.25 && frac < 0.75) {
        inner += report.abs_error(i);
        ++n_inner;
      }
    }
    REQUIRE(n_outer > 0);
    REQUIRE(n_inner > 0);
    CHECK(outer / n_outer >= 1.5 * inner / n_inner);
  }

  SECTION("needs at least three rows") {
    CHECK_THROWS_AS(validate_restriction_loo(curve_dataset(2, false)), std::invalid_argument);
  }
}

TEST_CASE("validation reports round-trip through CSV", "[operators]") {
  const Fixture& f = arc_fixture();
  const ValidationReport report = validate_lift_identity(f.ops);
  const std::string path = temp_path("eqfree_test_report.csv");
  save(report, path);
  const Eigen::MatrixXd table = read_csv_matrix(path);
  std::filesystem::remove(path);

  REQUIRE(table.rows() == report.coords.rows());
  REQUIRE(table.cols() == report.coords.cols() + 3);
  for (int i = 0; i < table.rows(); ++i) {
    CHECK(table(i, 0) == double(i));
    CHECK(table(i, 1) == report.coords(i, 0));
    CHECK(table(i, 2) == report.abs_error(i));
    CHECK(table(i, 3) == report.rel_error(i));
  }
}
