// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Test-only reference implementations, kept independent of the library code
// paths they check.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "posse/dsp.hpp"
#include "posse/rng.hpp"

namespace oracles {

// Naive O(n^2) DFT, X[k] = sum_n x[n] exp(-2 pi i n k / N).
inline std::vector<std::complex<double>> naive_dft(const std::vector<double> &x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double pi = 3.141592653589793238462643383279502884;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * pi * static_cast<double>(i) * static_cast<double>(k) /
                         static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline posse::Waveform random_waveform(std::uint64_t seed, Eigen::Index n) {
  posse::Rng rng(seed);
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = rng.uniform(-0.8, 0.8);
  return posse::Waveform(std::move(s));
}

inline posse::Waveform sine_waveform(double freq_hz, double duration_s, double amp = 0.5) {
  const auto n = static_cast<Eigen::Index>(duration_s * posse::kSampleRate);
  const double pi = 3.141592653589793238462643383279502884;
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s[i] = amp * std::sin(2.0 * pi * freq_hz * static_cast<double>(i) / posse::kSampleRate);
  return posse::Waveform(std::move(s));
}

inline posse::ComplexSpectrogram random_spectrogram(std::uint64_t seed, Eigen::Index t_frames) {
  posse::Rng rng(seed);
  posse::ComplexSpectrogram s;
  s.frames.resize(t_frames, posse::kFrameLen / 2 + 1);
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t)
    for (Eigen::Index k = 0; k < s.frames.cols(); ++k)
      s.frames(t, k) = std::complex<double>(rng.normal(), rng.normal());
  return s;
}

// Mean power per octave band of the magnitude-squared spectrum, expressed
// per-bin so white noise comes out flat.
inline std::vector<double> octave_band_density(const posse::Waveform &x,
                                               const std::vector<double> &edges_hz) {
  const posse::ComplexSpectrogram spec = posse::dsp::stft(x);
  const Eigen::Index n_bins = spec.num_bins();
  const double hz_per_bin = static_cast<double>(posse::kSampleRate) / posse::kFrameLen;
  std::vector<double> density;
  for (std::size_t b = 0; b + 1 < edges_hz.size(); ++b) {
    double sum = 0.0;
    long count = 0;
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      const double f = k * hz_per_bin;
      if (f >= edges_hz[b] && f < edges_hz[b + 1]) {
        sum += spec.frames.col(k).cwiseAbs2().sum();
        count += spec.frames.rows();
      }
    }
    density.push_back(count > 0 ? sum / static_cast<double>(count) : 0.0);
  }
  return density;
}

}  // namespace oracles
