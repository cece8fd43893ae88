// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "posse/errors.hpp"

namespace posse {

// Iterative radix-2 Cooley-Tukey FFT, power-of-two sizes only.
// Convention (pinned for golden tests): forward is unnormalized,
//   X[k] = sum_n x[n] * exp(-2*pi*i*n*k/N),
// and the inverse carries the 1/N factor.
namespace fft {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

inline void transform(std::vector<std::complex<double>> &a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw UserError("fft: size must be a power of two, got " + std::to_string(n));
  if (n == 1) return;

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double pi = 3.141592653589793238462643383279502884;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

inline void forward(std::vector<std::complex<double>> &a) { detail::transform(a, false); }

inline void inverse(std::vector<std::complex<double>> &a) {
  detail::transform(a, true);
  const double scale = 1.0 / static_cast<double>(a.size());
  for (auto &v : a) v *= scale;
}

}  // namespace fft
}  // namespace posse
