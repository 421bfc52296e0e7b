#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>

#include "eqfree/fourier.hpp"
#include "eqfree/rng.hpp"

using namespace eqfree;

namespace {

constexpr double kPi = std::numbers::pi;

// band-limited test signal on [0, period): value and first two derivatives
double trig(double xi, double period, int deriv) {
  const double w3 = 2.0 * kPi * 3.0 / period;
  const double w5 = 2.0 * kPi * 5.0 / period;
  switch (deriv) {
    case 0: return std::sin(w3 * xi) + 0.5 * std::cos(w5 * xi);
    case 1: return w3 * std::cos(w3 * xi) - 0.5 * w5 * std::sin(w5 * xi);
    default: return -w3 * w3 * std::sin(w3 * xi) - 0.5 * w5 * w5 * std::cos(w5 * xi);
  }
}

Eigen::VectorXd sample_trig(const SpectralGrid& g, int deriv) {
  Eigen::VectorXd v(g.size());
  for (int j = 0; j < g.size(); ++j) v[j] = trig(j * g.spacing(), g.period(), deriv);
  return v;
}

Eigen::VectorXd random_values(int n, SplitMix64& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("mode/value round trip", "[fourier][property]") {
  const SpectralGrid g(48, 30.0);
  SplitMix64 rng(101);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd v = random_values(48, rng);
    CHECK((g.to_values(g.to_modes(v)) - v).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("mean value sits in mode zero", "[fourier]") {
  const SpectralGrid g(32, 7.0);
  SplitMix64 rng(5);
  const Eigen::VectorXd v = random_values(32, rng);
  const Eigen::VectorXcd m = g.to_modes(v);
  CHECK(m[0].real() == Catch::Approx(v.mean()).epsilon(1e-13));
  CHECK(std::abs(m[0].imag()) < 1e-14);
}

TEST_CASE("signed frequencies cover the symmetric band", "[fourier]") {
  const SpectralGrid g(8, 1.0);
  CHECK(g.signed_frequency(0) == 0);
  CHECK(g.signed_frequency(3) == 3);
  CHECK(g.signed_frequency(4) == 4);
  CHECK(g.signed_frequency(5) == -3);
  CHECK(g.signed_frequency(7) == -1);
}

TEST_CASE("spectral derivatives of a band-limited signal", "[fourier]") {
  const SpectralGrid g(96, 30.0);
  const Eigen::VectorXcd m = g.to_modes(sample_trig(g, 0));
  const Eigen::VectorXd d1 = g.to_values(g.derivative(m, 1));
  const Eigen::VectorXd d2 = g.to_values(g.derivative(m, 2));
  CHECK((d1 - sample_trig(g, 1)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((d2 - sample_trig(g, 2)).cwiseAbs().maxCoeff() < 1e-9);

  const Eigen::VectorXcd flat = g.to_modes(Eigen::VectorXd::Constant(96, 4.2));
  CHECK(g.to_values(g.derivative(flat, 1)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("odd-order derivative kills the Nyquist mode", "[fourier]") {
  const SpectralGrid g(16, 1.0);
  // pure Nyquist cosine: alternating samples
  Eigen::VectorXd v(16);
  for (int j = 0; j < 16; ++j) v[j] = (j % 2 == 0) ? 1.0 : -1.0;
  const Eigen::VectorXd d1 = g.to_values(g.derivative(g.to_modes(v), 1));
  CHECK(d1.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("shift represents translation of the interpolant", "[fourier]") {
  const SpectralGrid g(96, 30.0);
  const Eigen::VectorXcd m = g.to_modes(sample_trig(g, 0));

  SECTION("fractional shift matches the analytic translate") {
    const double s = 0.77;
    const Eigen::VectorXd shifted = g.to_values(g.shift(m, s));
    for (int j = 0; j < g.size(); ++j)
      CHECK(shifted[j] == Catch::Approx(trig(j * g.spacing() + s, 30.0, 0)).margin(1e-11));
  }

  SECTION("shift by one grid spacing rotates the samples") {
    const Eigen::VectorXd v = g.to_values(m);
    const Eigen::VectorXd shifted = g.to_values(g.shift(m, g.spacing()));
    for (int j = 0; j < g.size(); ++j)
      CHECK(shifted[j] == Catch::Approx(v[(j + 1) % g.size()]).margin(1e-12));
  }
}

TEST_CASE("unit shifts in opposite directions compose to the identity", "[fourier][property]") {
  const SpectralGrid g(240, 30.0);
  SplitMix64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXcd m = g.to_modes(random_values(240, rng));
    const Eigen::VectorXcd back = g.shift(g.shift(m, 1.0), -1.0);
    CHECK((back - m).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("pointwise evaluation agrees with the grid and the analytic signal", "[fourier]") {
  const SpectralGrid g(96, 30.0);
  const Eigen::VectorXd v = sample_trig(g, 0);
  const Eigen::VectorXcd m = g.to_modes(v);
  for (int j = 0; j < g.size(); j += 7)
    CHECK(g.evaluate(m, j * g.spacing()) == Catch::Approx(v[j]).margin(1e-12));
  for (double xi = 0.13; xi < 30.0; xi += 3.71)
    CHECK(g.evaluate(m, xi) == Catch::Approx(trig(xi, 30.0, 0)).margin(1e-11));
}

TEST_CASE("upsampling preserves coarse samples and band-limited content", "[fourier]") {
  const SpectralGrid coarse(30, 30.0);
  const Eigen::VectorXd v = sample_trig(coarse, 0);
  const Eigen::VectorXd fine = spectral_upsample(v, 240);
  const SpectralGrid g(240, 30.0);
  for (int i = 0; i < 30; ++i) CHECK(fine[i * 8] == Catch::Approx(v[i]).margin(1e-12));
  for (int j = 0; j < 240; ++j)
    CHECK(fine[j] == Catch::Approx(trig(j * g.spacing(), 30.0, 0)).margin(1e-11));

  CHECK_THROWS_AS(spectral_upsample(v, 45), std::invalid_argument);
  CHECK_THROWS_AS(spectral_upsample(v, 15), std::invalid_argument);
}

TEST_CASE("top-third energy fraction separates smooth from rough", "[fourier]") {
  const SpectralGrid g(48, 30.0);
  Eigen::VectorXd low(48), high(48);
  for (int j = 0; j < 48; ++j) {
    const double xi = j * g.spacing();
    low[j] = 2.0 + std::cos(2.0 * kPi * 2.0 * xi / 30.0);
    high[j] = 2.0 + std::cos(2.0 * kPi * 20.0 * xi / 30.0);
  }
  CHECK(g.top_third_energy_fraction(g.to_modes(low)) < 1e-12);
  CHECK(g.top_third_energy_fraction(g.to_modes(high)) > 1.0 - 1e-12);
  CHECK(g.top_third_energy_fraction(g.to_modes(Eigen::VectorXd::Constant(48, 3.0))) == 0.0);
}

TEST_CASE("grid construction rejects bad sizes", "[fourier]") {
  CHECK_THROWS_AS(SpectralGrid(7, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralGrid(2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralGrid(8, 0.0), std::invalid_argument);
  const SpectralGrid g(8, 1.0);
  CHECK_THROWS_AS(g.to_modes(Eigen::VectorXd::Zero(7)), std::invalid_argument);
  CHECK_THROWS_AS(g.to_values(Eigen::VectorXcd::Zero(9)), std::invalid_argument);
}
