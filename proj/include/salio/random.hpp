#pragma once

#include <cmath>
#include <cstdint>

namespace salio {

/// SplitMix64 (Steele, Lea, Flood 2014), the mixing function of Java's
/// SplittableRandom. Chosen over std::mt19937_64 because the standard leaves
/// distribution adapters implementation-defined; with a fixed generator and
/// a fixed uniform/Gaussian recipe below, a (spec, seed) pair regenerates the
/// same byte stream on any conforming platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via the polar-free Box-Muller transform. One draw per
  /// call, no cached spare, so the stream position is a pure function of the
  /// call count.
  double next_gaussian() {
    double u1 = next_uniform();
    while (u1 <= 0.0) u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace salio
