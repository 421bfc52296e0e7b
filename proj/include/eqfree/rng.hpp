#pragma once

#include <cmath>
#include <cstdint>

namespace eqfree {

/// Counter-seeded splitmix64 stream.
///
/// Used instead of std::mt19937 + <random> distributions so that sampled
/// datasets are bit-identical across platforms and standard libraries.
/// Each dataset row draws from its own substream derived from
/// (seed, row index), which keeps row generation order-independent and
/// embarrassingly parallel.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi). Degenerate ranges (lo == hi) return lo.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// shift + Exponential(mean), sampled as shift - mean*log(1 - u).
  double shifted_exponential(double mean, double shift) {
    return shift - mean * std::log1p(-uniform01());
  }

  /// Independent stream for element `index` of a run seeded with `seed`.
  static SplitMix64 substream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mix(seed ^ ((index + 1) * 0x9e3779b97f4a7c15ull));
    mix.next();
    return mix;
  }

 private:
  std::uint64_t state_;
};

}  // namespace eqfree
