/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "vlplan/error.hpp"

namespace vlplan {

/// Mixes a seed with a stream tag so that independent consumers of one user
/// seed get decorrelated substreams (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random source used by every stochastic operation.
///
/// All draws are implemented on top of the raw mt19937_64 stream rather than
/// the standard distribution objects, because the standard distributions are
/// not bit-reproducible across library implementations and reports must be
/// byte-identical for a given seed everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (no cached second value, so the draw
  /// count per call is fixed and replayable).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Lognormal multiplier with mean exactly 1 and relative spread `jitter`
  /// (sigma^2 = ln(1 + jitter^2), mu = -sigma^2/2). jitter = 0 returns 1.
  double unit_mean_lognormal(double jitter) {
    if (jitter < 0.0) fail(Errc::InvalidArgument, "jitter must be >= 0");
    if (jitter == 0.0) return 1.0;
    const double sigma2 = std::log(1.0 + jitter * jitter);
    return std::exp(-0.5 * sigma2 + std::sqrt(sigma2) * normal());
  }

  /// Index drawn from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) fail(Errc::InvalidArgument, "negative categorical weight");
      total += w;
    }
    if (total <= 0.0) fail(Errc::InvalidArgument, "categorical weights sum to zero");
    double x = uniform01() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      x -= weights[i];
      if (x < 0.0) return i;
    }
    return weights.size() - 1;
  }

  /// Uniform integer in [0, n). Rejection-free multiply-shift would bias for
  /// huge n; n here is always far below 2^32, where the 53-bit path is exact
  /// enough for planning purposes and stays reproducible.
  int uniform_int(int n) {
    if (n < 1) fail(Errc::InvalidArgument, "uniform_int needs n >= 1");
    const int draw = static_cast<int>(uniform01() * static_cast<double>(n));
    return draw < n ? draw : n - 1;
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vlplan
