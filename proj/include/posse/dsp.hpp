// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "posse/errors.hpp"
#include "posse/fft.hpp"

namespace posse {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFrameLen = 512;  // 32 ms at 16 kHz
inline constexpr int kHop = 256;       // 16 ms at 16 kHz

// Mono time-domain signal, nominal range [-1, 1].
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(Eigen::VectorXd s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  Eigen::Index size() const { return samples.size(); }
};

// T x K complex STFT frames (rows are frames, K = frame_len/2 + 1 bins).
struct ComplexSpectrogram {
  Eigen::MatrixXcd frames;
  int frame_len = kFrameLen;
  int hop = kHop;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_bins() const { return frames.cols(); }
};

// T x K non-negative magnitudes.
using MagnitudeSpectrogram = Eigen::MatrixXd;

// T x K real mask, entries in [0, 1].
using MaskMatrix = Eigen::MatrixXd;

namespace dsp {

// Where |Y| falls below this, the PSM target is defined as 0.
inline constexpr double kPsmDivisionGuard = 1e-8;

// Periodic square-root Hann: w[n] = sqrt(0.5*(1 - cos(2*pi*n/L))).
// Satisfies w^2[n] + w^2[n + L/2] == 1, the overlap-add identity at hop L/2.
inline Eigen::VectorXd sqrt_hann_window(int length) {
  if (length < 2 || length % 2 != 0)
    throw ConfigError("sqrt_hann_window: length must be even and >= 2, got " +
                      std::to_string(length));
  Eigen::VectorXd w(length);
  const double pi = 3.141592653589793238462643383279502884;
  for (int n = 0; n < length; ++n)
    w[n] = std::sqrt(0.5 * (1.0 - std::cos(2.0 * pi * n / length)));
  return w;
}

// Frames start every `hop` samples while the start lies inside the signal;
// the tail is zero-padded to a full frame. For 16000 samples at the default
// config this yields 63 frames.
inline Eigen::Index num_frames(Eigen::Index n_samples, int hop) {
  if (n_samples <= 0) return 0;
  return (n_samples + hop - 1) / hop;
}

inline ComplexSpectrogram stft(const Waveform &x, int frame_len, int hop,
                               const Eigen::VectorXd &window) {
  if (x.size() == 0) throw UserError("stft: empty waveform");
  if (window.size() != frame_len)
    throw ShapeError("stft: window length " + std::to_string(window.size()) +
                     " != frame_len " + std::to_string(frame_len));
  if (hop <= 0 || frame_len <= 0 || !fft::is_pow2(static_cast<std::size_t>(frame_len)))
    throw ConfigError("stft: frame_len must be a positive power of two and hop > 0");

  const Eigen::Index n = x.size();
  const Eigen::Index t_frames = num_frames(n, hop);
  const int n_bins = frame_len / 2 + 1;

  ComplexSpectrogram out;
  out.frame_len = frame_len;
  out.hop = hop;
  out.frames.resize(t_frames, n_bins);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(frame_len));
  for (Eigen::Index t = 0; t < t_frames; ++t) {
    const Eigen::Index start = t * hop;
    for (int i = 0; i < frame_len; ++i) {
      const Eigen::Index idx = start + i;
      const double s = (idx < n) ? x.samples[idx] : 0.0;
      buf[static_cast<std::size_t>(i)] = s * window[i];
    }
    fft::forward(buf);
    for (int k = 0; k < n_bins; ++k) out.frames(t, k) = buf[static_cast<std::size_t>(k)];
  }
  return out;
}

inline ComplexSpectrogram stft(const Waveform &x) {
  return stft(x, kFrameLen, kHop, sqrt_hann_window(kFrameLen));
}

// Weighted overlap-add synthesis with the same window as analysis. Output has
// (T-1)*hop + frame_len samples; interior samples reconstruct exactly thanks
// to the sqrt-Hann overlap identity. Non-Hermitian input is projected onto
// real signals (the imaginary parts of bins 0 and frame_len/2 are dropped).
inline Waveform istft(const ComplexSpectrogram &S, int hop, const Eigen::VectorXd &window) {
  const int frame_len = S.frame_len;
  if (window.size() != frame_len)
    throw ShapeError("istft: window length does not match spectrogram frame_len");
  if (hop != S.hop)
    throw UserError("istft: hop " + std::to_string(hop) +
                    " does not match spectrogram hop " + std::to_string(S.hop));
  if (S.num_bins() != frame_len / 2 + 1)
    throw ShapeError("istft: expected " + std::to_string(frame_len / 2 + 1) +
                     " bins, got " + std::to_string(S.num_bins()));

  const Eigen::Index t_frames = S.num_frames();
  const Eigen::Index out_len = (t_frames - 1) * hop + frame_len;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(out_len);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(frame_len));
  for (Eigen::Index t = 0; t < t_frames; ++t) {
    for (int k = 0; k <= frame_len / 2; ++k) buf[static_cast<std::size_t>(k)] = S.frames(t, k);
    for (int k = 1; k < frame_len / 2; ++k)
      buf[static_cast<std::size_t>(frame_len - k)] = std::conj(S.frames(t, k));
    fft::inverse(buf);
    const Eigen::Index start = t * hop;
    for (int i = 0; i < frame_len; ++i)
      y[start + i] += window[i] * buf[static_cast<std::size_t>(i)].real();
  }
  return Waveform(std::move(y));
}

inline Waveform istft(const ComplexSpectrogram &S) {
  return istft(S, S.hop, sqrt_hann_window(S.frame_len));
}

inline MagnitudeSpectrogram magnitude(const ComplexSpectrogram &S) {
  return S.frames.cwiseAbs();
}

// Phase-sensitive mask target: (|S|/|Y|) * cos(phase(S) - phase(Y)), which
// equals Re(S * conj(Y)) / |Y|^2, clipped to [0, 1]. Bins where |Y| is below
// the division guard return 0.
inline MaskMatrix psm_target(const ComplexSpectrogram &S, const ComplexSpectrogram &Y) {
  if (S.num_frames() != Y.num_frames() || S.num_bins() != Y.num_bins())
    throw ShapeError("psm_target: clean/noisy spectrogram shapes differ");
  MaskMatrix m(S.num_frames(), S.num_bins());
  for (Eigen::Index t = 0; t < S.num_frames(); ++t) {
    for (Eigen::Index k = 0; k < S.num_bins(); ++k) {
      const std::complex<double> s = S.frames(t, k);
      const std::complex<double> y = Y.frames(t, k);
      const double mag_y = std::abs(y);
      double v = 0.0;
      if (mag_y >= kPsmDivisionGuard) {
        v = (s.real() * y.real() + s.imag() * y.imag()) / (mag_y * mag_y);
      }
      m(t, k) = std::min(1.0, std::max(0.0, v));
    }
  }
  return m;
}

// Elementwise real mask on the complex noisy spectrum (noisy phase retained).
inline ComplexSpectrogram apply_mask(const ComplexSpectrogram &Y, const MaskMatrix &M) {
  if (M.rows() != Y.num_frames() || M.cols() != Y.num_bins())
    throw ShapeError("apply_mask: mask shape does not match spectrogram");
  ComplexSpectrogram out = Y;
  out.frames = Y.frames.cwiseProduct(M.cast<std::complex<double>>());
  return out;
}

}  // namespace dsp
}  // namespace posse
