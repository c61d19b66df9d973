#pragma once

#include <cmath>
#include <cstdint>

namespace spdcrc {

// Counter-based generator built on the SplitMix64 mixing function.
//
// The i-th output is a pure function of (key, i):
//   out(i) = mix64(key + (i+1) * 0x9E3779B97F4A7C15)
// so streams are reproducible across platforms and languages from the
// documented constants alone. Independent streams are derived by
// rekeying with `derive`, e.g. one stream per (class, set, sample).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t key) : key_(key), counter_(0) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Child stream key: derive(key, tag) = mix64(key ^ (tag + golden)).
  static std::uint64_t derive(std::uint64_t key, std::uint64_t tag) {
    return mix64(key ^ (tag + kGolden));
  }

  std::uint64_t next() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform draw in [0,1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller: consumes exactly two uniforms per call
  /// (the sine branch is discarded to keep the stream layout trivial).
  double normal() {
    // (0,1] so the logarithm is finite.
    double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace spdcrc
