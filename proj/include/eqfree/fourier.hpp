#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <unsupported/Eigen/FFT>

namespace eqfree {

/// Spectral operations for real periodic grid functions. Modes are stored as
/// the full complex DFT divided by the grid size, so modes[k] is the coefficient
/// of exp(2*pi*i*f(k)*xi/period) with the signed frequency f(k) = k for
/// k <= size/2 and k - size otherwise.
///
/// The cached FFT plan makes concurrent transforms on one instance unsafe;
/// give each thread its own SpectralGrid (construction is cheap).
class SpectralGrid {
 public:
  SpectralGrid(int size, double period) : n_(size), period_(period) {
    if (size < 4 || size % 2 != 0) throw std::invalid_argument("grid size must be even and >= 4");
    if (!(period > 0)) throw std::invalid_argument("period must be positive");
  }

  int size() const { return n_; }
  double period() const { return period_; }
  double spacing() const { return period_ / n_; }

  int signed_frequency(int k) const { return k <= n_ / 2 ? k : k - n_; }

  Eigen::VectorXcd to_modes(const Eigen::VectorXd& values) const {
    if (values.size() != n_) throw std::invalid_argument("grid size mismatch");
    Eigen::VectorXcd in = values.cast<std::complex<double>>();
    Eigen::VectorXcd out(n_);
    fft_.fwd(out, in);
    return out / double(n_);
  }

  Eigen::VectorXd to_values(const Eigen::VectorXcd& modes) const {
    if (modes.size() != n_) throw std::invalid_argument("mode count mismatch");
    Eigen::VectorXcd scaled = modes * double(n_);
    Eigen::VectorXcd out(n_);
    fft_.inv(out, scaled);
    return out.real();
  }

  /// d^order/dxi^order; odd orders zero the Nyquist mode to keep the result real.
  Eigen::VectorXcd derivative(const Eigen::VectorXcd& modes, int order) const {
    Eigen::VectorXcd out(n_);
    const std::complex<double> two_pi_i(0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < n_; ++k) {
      const int f = signed_frequency(k);
      out[k] = modes[k] * std::pow(two_pi_i * (double(f) / period_), order);
    }
    if (order % 2 != 0) out[n_ / 2] = 0.0;
    return out;
  }

  /// Translate: represents u(xi + amount).
  Eigen::VectorXcd shift(const Eigen::VectorXcd& modes, double amount) const {
    Eigen::VectorXcd out(n_);
    for (int k = 0; k < n_; ++k) {
      const double phase = 2.0 * std::numbers::pi * signed_frequency(k) * amount / period_;
      out[k] = modes[k] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return out;
  }

  /// Fraction of fluctuation energy (mean mode excluded) carried by
  /// frequencies |f| > size/3; a proxy for aliasing of nonlinear terms.
  double top_third_energy_fraction(const Eigen::VectorXcd& modes) const {
    double total = 0, top = 0;
    for (int k = 1; k < n_; ++k) {
      const double e = std::norm(modes[k]);
      total += e;
      if (std::abs(signed_frequency(k)) > n_ / 3) top += e;
    }
    return total > 0 ? top / total : 0.0;
  }

  /// Value of the trigonometric interpolant at an arbitrary point.
  double evaluate(const Eigen::VectorXcd& modes, double xi) const {
    std::complex<double> acc = modes[0];
    for (int k = 1; k < n_; ++k) {
      if (k == n_ / 2) {
        // Nyquist mode contributes its real cosine part only
        acc += modes[k] * std::cos(2.0 * std::numbers::pi * (n_ / 2) * xi / period_);
        continue;
      }
      const double phase = 2.0 * std::numbers::pi * signed_frequency(k) * xi / period_;
      acc += modes[k] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return acc.real();
  }

 private:
  int n_;
  double period_;
  mutable Eigen::FFT<double> fft_;
};

/// Spectral interpolation of equispaced samples onto a finer equispaced grid
/// covering the same period. n_fine must be an even multiple of values.size().
inline Eigen::VectorXd spectral_upsample(const Eigen::VectorXd& values, int n_fine) {
  const int n = int(values.size());
  if (n_fine % n != 0 || n_fine < n) throw std::invalid_argument("n_fine must be a multiple of the sample count");
  Eigen::FFT<double> fft;
  Eigen::VectorXcd in = values.cast<std::complex<double>>();
  Eigen::VectorXcd coarse(n);
  fft.fwd(coarse, in);
  coarse /= double(n);

  Eigen::VectorXcd fine = Eigen::VectorXcd::Zero(n_fine);
  for (int k = 0; k <= n / 2; ++k) fine[k] = coarse[k];
  for (int k = n / 2 + 1; k < n; ++k) fine[n_fine - (n - k)] = coarse[k];
  if (n % 2 == 0) {
    // split the coarse Nyquist mode between symmetric fine frequencies
    fine[n / 2] = 0.5 * coarse[n / 2];
    fine[n_fine - n / 2] = 0.5 * coarse[n / 2];
  }
  SpectralGrid grid(n_fine, double(n));
  return grid.to_values(fine);
}

}  // namespace eqfree
