#pragma once

// Platform-independent random numbers. std::*_distribution output is
// implementation-defined, so uniforms and normals are derived by hand from
// 64-bit integer streams.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace diffadapt::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1) with 53 bits of resolution.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1]; safe to take the logarithm of.
constexpr double to_open_unit(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// A keyed stream: the i-th draw is a pure function of (key, i), so draws do
// not depend on evaluation order or thread scheduling.
class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_bits() { return mix(key_, counter_++); }
  double uniform() { return to_unit(next_bits()); }
  double open_uniform() { return to_open_unit(next_bits()); }
  // Box-Muller; one normal per two uniforms.
  double normal() {
    const double u1 = open_uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  // Uniform integer in [0, n) by rejection (n > 0).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_bits();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace diffadapt::rng
