#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

namespace cris {

/// SplitMix64 generator (Steele, Lea & Flood's fixed-increment variant).
///
/// All data-side randomness in this project (dataset splits, synthetic data,
/// batch shuffling, hyperparameter sampling) runs through this generator
/// instead of <random>, whose distributions are implementation-defined. The
/// sequences below are pure integer/IEEE-754 arithmetic and therefore
/// reproduce bit-exactly on any platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t avalanche(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Derives an independent stream seed from a parent seed and a label.
inline std::uint64_t seed_mix(std::uint64_t parent, std::uint64_t label) {
  return detail::avalanche(parent * 0x9e3779b97f4a7c15ULL ^
                           detail::avalanche(label + 0x165667b19e3779f9ULL));
}

/// FNV-1a over the bytes of `label`, then mixed with the parent seed.
inline std::uint64_t seed_mix(std::uint64_t parent, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return seed_mix(parent, h);
}

/// Fisher-Yates shuffle of [0, n) driven by SplitMix64: the project's one
/// permutation algorithm, used for dataset splits and batch shuffling so that
/// both reproduce across platforms and standard libraries.
inline std::vector<std::size_t> seeded_permutation(std::size_t n,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace cris
