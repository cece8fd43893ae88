// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace posse {

// Deterministic RNG wrapper. std::mt19937_64's raw output sequence is fixed
// by the standard; the distribution helpers below are implemented by hand so
// streams are reproducible across compilers and platforms. A draw counter is
// kept so the exact state can be restored from (seed, n_draws), which is what
// training-state files store.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed), draws_(0) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  // Restore a stream to a previously recorded position.
  static Rng restore(std::uint64_t seed, std::uint64_t draws) {
    Rng r(seed);
    r.eng_.discard(draws);
    r.draws_ = draws;
    return r;
  }

  std::uint64_t next_u64() {
    ++draws_;
    return eng_();
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Lemire's multiply-shift mapping;
  // the tiny modulo bias is irrelevant here, determinism is what matters.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto wide = static_cast<unsigned __int128>(next_u64()) * range;
    return lo + static_cast<std::int64_t>(wide >> 64);
  }

  // Standard normal via Box-Muller. Always consumes exactly two draws and
  // returns one variate, so the draw counter stays a faithful state record.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  std::uint64_t draws_;
};

// splitmix64; used to derive independent sub-streams from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace posse
