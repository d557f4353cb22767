#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numbers>

#include <Eigen/Dense>

namespace doob::rng {

// SplitMix64 finalizer; the workhorse for counter-based streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combine an arbitrary list of 64-bit keys into one stream key.
inline std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

inline std::uint64_t hash_double(double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  return splitmix64(bits);
}

// Counter-based stream: output depends only on (key, counter), so any
// (seed, particle, step) tuple maps to the same draws regardless of thread
// layout or evaluation order.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t key) : key_(key) {}

  // Uniform in (0, 1), never exactly 0 or 1.
  double uniform() {
    std::uint64_t bits = splitmix64(key_ ^ splitmix64(counter_++));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index d) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal();
    return z;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace doob::rng
