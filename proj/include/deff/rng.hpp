#pragma once

// Counter-based 64-bit generator used for every random draw in the toolkit.
//
// Algorithm (fixed so that subsets and simulated runs are reproducible across
// platforms and reimplementations):
//
//   output_i = mix(key + i * 0x9E3779B97F4A7C15),  i = 1, 2, 3, ...
//   mix(z)   = SplitMix64 finalizer:
//              z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              z =  z ^ (z >> 31)
//
// Integers in [0, n) use rejection: draw x until x >= (2^64 - n) mod n,
// return x mod n. Doubles in (0, 1] are ((x >> 11) + 1) * 2^-53.
// Normal variates use the Box-Muller cosine branch on two unit draws.
//
// std::shuffle and the <random> distributions are deliberately avoided: their
// algorithms are implementation-defined.

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace deff {

class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t next() noexcept {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  // Uniform integer in [0, n). n must be > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return x % n;
    }
  }

  // Uniform double in (0, 1].
  double unit() noexcept {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() noexcept {
    const double u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Folds several 64-bit values into one generator key.
constexpr std::uint64_t derive_key(
    std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) h = CounterRng::mix(h ^ CounterRng::mix(p + CounterRng::kGamma));
  return h;
}

// Bit pattern of a double, for keying on real-valued parameters.
inline std::uint64_t key_bits(double v) noexcept {
  if (v == 0.0) v = 0.0;  // fold -0.0
  return std::bit_cast<std::uint64_t>(v);
}

}  // namespace deff
