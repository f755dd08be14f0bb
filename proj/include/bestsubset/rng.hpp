#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "bestsubset/linalg.hpp"

namespace bestsubset {

/// Counter-based generator: draw j of stream (seed, stream) is a pure
/// function of (seed, stream, j), so results never depend on scheduling.
/// Gaussians use Box-Muller on our own uniforms rather than
/// std::normal_distribution, whose output is implementation-defined.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key_ + counter_++ * 0xD1B54A32D192ED03ULL); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Laplace with scale b (variance 2 b^2).
  double laplace(double b) {
    const double u = uniform() - 0.5;
    return u < 0 ? b * std::log1p(2.0 * u) : -b * std::log1p(-2.0 * u);
  }

  Vector normal_vector(Index n, double sd = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = sd * normal();
    return v;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bestsubset
