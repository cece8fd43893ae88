// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "posse/dsp.hpp"
#include "posse/errors.hpp"
#include "posse/fft.hpp"
#include "posse/rng.hpp"
#include "posse/wav.hpp"

namespace posse {
namespace mixer {

// ---------------------------------------------------------------------------
// SNR-controlled mixing
// ---------------------------------------------------------------------------

struct Mixed {
  Waveform noisy;
  Waveform scaled_noise;
};

// Scales the noise so that 10*log10(P_s/P_noise) equals snr_db exactly, then
// adds: y = s + alpha*d. No clipping is applied; mixtures are stored as
// floats so the additive model stays exact.
inline Mixed mix_at_snr(const Waveform &s, const Waveform &d, double snr_db) {
  if (s.size() != d.size())
    throw ShapeError("mix_at_snr: clean and noise lengths differ (" +
                     std::to_string(s.size()) + " vs " + std::to_string(d.size()) + ")");
  if (s.size() == 0) throw UserError("mix_at_snr: empty input");
  const double p_s = s.samples.squaredNorm() / static_cast<double>(s.size());
  const double p_d = d.samples.squaredNorm() / static_cast<double>(d.size());
  if (p_s <= 0.0) throw UserError("mix_at_snr: clean signal has zero power");
  if (p_d <= 0.0) throw UserError("mix_at_snr: noise signal has zero power");
  const double alpha = std::sqrt(p_s / (p_d * std::pow(10.0, snr_db / 10.0)));
  Mixed m;
  m.scaled_noise = Waveform(alpha * d.samples);
  m.noisy = Waveform(s.samples + m.scaled_noise.samples);
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic sources (desk-scale stand-ins for real corpora)
// ---------------------------------------------------------------------------

namespace detail {

// Two-pole resonator; r close to 1 gives a narrow formant-like peak.
struct Resonator {
  double a1 = 0.0, a2 = 0.0, gain = 1.0;
  double y1 = 0.0, y2 = 0.0;

  void set(double freq_hz, double bandwidth_hz, double g) {
    const double pi = 3.141592653589793238462643383279502884;
    const double r = std::exp(-pi * bandwidth_hz / kSampleRate);
    a1 = 2.0 * r * std::cos(2.0 * pi * freq_hz / kSampleRate);
    a2 = -r * r;
    gain = g;
  }

  double step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

inline void peak_normalize(Eigen::VectorXd &x, double peak) {
  const double m = x.cwiseAbs().maxCoeff();
  if (m > 0.0) x *= peak / m;
}

}  // namespace detail

// Speech-like signal: a glottal-style pulse train with drifting F0 in
// [80, 300] Hz, three drifting formant resonators, syllabic gating with
// silence gaps, and a low noise floor. Peak-normalized to 0.5.
inline Waveform synth_clean(std::uint64_t seed, double duration_s) {
  if (duration_s <= 0.0) throw UserError("synth_clean: duration must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * kSampleRate));
  Rng rng(seed);
  const double pi = 3.141592653589793238462643383279502884;

  // slow F0 drift: two incommensurate LFOs around a per-utterance base
  const double f0_base = rng.uniform(110.0, 240.0);
  const double lfo1_hz = rng.uniform(0.2, 0.9), lfo1_ph = rng.uniform(0.0, 2.0 * pi);
  const double lfo2_hz = rng.uniform(1.1, 2.3), lfo2_ph = rng.uniform(0.0, 2.0 * pi);

  // syllable gating: voiced stretches separated by near-silent gaps
  std::vector<double> gate(static_cast<std::size_t>(n), 0.0);
  {
    Eigen::Index pos = 0;
    while (pos < n) {
      const auto voiced = static_cast<Eigen::Index>(rng.uniform(0.10, 0.35) * kSampleRate);
      const auto gap = static_cast<Eigen::Index>(rng.uniform(0.05, 0.22) * kSampleRate);
      const double amp = rng.uniform(0.45, 1.0);
      const auto ramp = static_cast<Eigen::Index>(0.018 * kSampleRate);
      for (Eigen::Index i = 0; i < voiced && pos + i < n; ++i) {
        double e = amp;
        if (i < ramp) e *= 0.5 * (1.0 - std::cos(pi * i / ramp));
        if (voiced - i < ramp) e *= 0.5 * (1.0 - std::cos(pi * (voiced - i) / ramp));
        gate[static_cast<std::size_t>(pos + i)] = e;
      }
      pos += voiced + gap;
    }
  }

  detail::Resonator f1, f2, f3;
  const double f1_c = rng.uniform(350.0, 750.0);
  const double f2_c = rng.uniform(950.0, 1900.0);
  const double f3_c = rng.uniform(2300.0, 2900.0);
  f1.set(f1_c, 90.0, 1.0);
  f2.set(f2_c, 140.0, 0.55);
  f3.set(f3_c, 220.0, 0.22);
  const double formant_lfo_hz = rng.uniform(0.5, 1.5);
  const double formant_lfo_ph = rng.uniform(0.0, 2.0 * pi);

  Eigen::VectorXd out(n);
  double phase = rng.uniform(0.0, 1.0);
  double glottal = 0.0;
  double dc_x1 = 0.0, dc_y1 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double f0 = f0_base * (1.0 + 0.12 * std::sin(2.0 * pi * lfo1_hz * t + lfo1_ph) +
                           0.06 * std::sin(2.0 * pi * lfo2_hz * t + lfo2_ph));
    f0 = std::min(300.0, std::max(80.0, f0));
    phase += f0 / kSampleRate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    // leaky integrator shapes the pulse train toward a 1/f harmonic rolloff
    glottal = 0.96 * glottal + pulse;

    // slow formant drift (re-tuning per 10 ms block would do as well)
    if (i % 160 == 0) {
      const double w = std::sin(2.0 * pi * formant_lfo_hz * t + formant_lfo_ph);
      f1.set(f1_c * (1.0 + 0.12 * w), 90.0, 1.0);
      f2.set(f2_c * (1.0 + 0.08 * w), 140.0, 0.55);
    }
    const double voiced = f1.step(glottal) + f2.step(glottal) + f3.step(glottal);
    const double g = gate[static_cast<std::size_t>(i)];
    const double breath = 0.0015 * rng.normal();
    double v = voiced * g + breath;
    // DC blocker
    const double y = v - dc_x1 + 0.995 * dc_y1;
    dc_x1 = v;
    dc_y1 = y;
    out[i] = y;
  }
  detail::peak_normalize(out, 0.5);
  return Waveform(std::move(out));
}

enum class NoiseKind { white, pink, babble, machine };

inline const char *to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble: return "babble";
    case NoiseKind::machine: return "machine";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(const std::string &s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble") return NoiseKind::babble;
  if (s == "machine") return NoiseKind::machine;
  throw UserError("unknown noise kind '" + s + "' (expected white|pink|babble|machine)");
}

inline Waveform synth_noise(std::uint64_t seed, double duration_s, NoiseKind kind) {
  if (duration_s <= 0.0) throw UserError("synth_noise: duration must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * kSampleRate));
  Rng rng(seed);
  const double pi = 3.141592653589793238462643383279502884;
  Eigen::VectorXd out(n);

  switch (kind) {
    case NoiseKind::white: {
      for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.normal();
      break;
    }
    case NoiseKind::pink: {
      // spectral synthesis: magnitude ~ 1/sqrt(f), random phase, then IFFT
      const std::size_t m = fft::next_pow2(static_cast<std::size_t>(n));
      std::vector<std::complex<double>> spec(m, {0.0, 0.0});
      for (std::size_t k = 1; k <= m / 2; ++k) {
        const double mag = 1.0 / std::sqrt(static_cast<double>(k));
        const double ph = rng.uniform(0.0, 2.0 * pi);
        spec[k] = std::polar(mag, ph);
        if (k < m / 2) spec[m - k] = std::conj(spec[k]);
      }
      spec[m / 2] = std::complex<double>(spec[m / 2].real(), 0.0);
      fft::inverse(spec);
      for (Eigen::Index i = 0; i < n; ++i) out[i] = spec[static_cast<std::size_t>(i)].real();
      break;
    }
    case NoiseKind::babble: {
      out.setZero();
      const int talkers = 6;
      for (int s = 0; s < talkers; ++s) {
        const Waveform one = synth_clean(mix_seed(seed, 100 + static_cast<std::uint64_t>(s)),
                                         duration_s);
        out += one.samples;
      }
      break;
    }
    case NoiseKind::machine: {
      // AM harmonic stack over a low fundamental plus a faint broadband bed
      const double f0 = rng.uniform(45.0, 110.0);
      const double am_hz = rng.uniform(2.0, 12.0);
      const double am_depth = rng.uniform(0.3, 0.7);
      const int n_harm = static_cast<int>(std::min(40.0, 5000.0 / f0));
      std::vector<double> h_phase(static_cast<std::size_t>(n_harm));
      for (auto &p : h_phase) p = rng.uniform(0.0, 2.0 * pi);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        double v = 0.0;
        for (int h = 1; h <= n_harm; ++h)
          v += std::sin(2.0 * pi * f0 * h * t + h_phase[static_cast<std::size_t>(h - 1)]) / h;
        const double am = 1.0 + am_depth * std::sin(2.0 * pi * am_hz * t);
        out[i] = v * am + 0.01 * rng.normal();
      }
      break;
    }
  }
  detail::peak_normalize(out, 0.5);
  return Waveform(std::move(out));
}

// ---------------------------------------------------------------------------
// Corpus manifest
// ---------------------------------------------------------------------------

enum class Role { clean, noise };
enum class Split { train, val, test };

inline const char *to_string(Role r) { return r == Role::clean ? "clean" : "noise"; }
inline const char *to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct ManifestEntry {
  Role role;
  Split split;
  std::string path;          // resolved
  Eigen::Index n_samples = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry *> select(Role role, Split split) const {
    std::vector<const ManifestEntry *> out;
    for (const auto &e : entries)
      if (e.role == role && e.split == split) out.push_back(&e);
    return out;
  }
};

// Plain-text manifest, one `<role>,<split>,<path>` per line; '#' comments and
// blank lines are skipped. Relative paths resolve against the manifest's own
// directory. A file listed under two splits is rejected.
inline Manifest load_manifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  Manifest m;
  std::map<std::string, Split> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    const auto c1 = line.find(',');
    const auto c2 = (c1 == std::string::npos) ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw UserError("manifest: " + path + ":" + std::to_string(line_no) +
                      ": expected '<role>,<split>,<path>'");
    const std::string role_s = line.substr(0, c1);
    const std::string split_s = line.substr(c1 + 1, c2 - c1 - 1);
    std::string file = line.substr(c2 + 1);

    ManifestEntry entry;
    if (role_s == "clean") entry.role = Role::clean;
    else if (role_s == "noise") entry.role = Role::noise;
    else throw UserError("manifest: bad role '" + role_s + "' at line " + std::to_string(line_no));
    if (split_s == "train") entry.split = Split::train;
    else if (split_s == "val") entry.split = Split::val;
    else if (split_s == "test") entry.split = Split::test;
    else
      throw UserError("manifest: bad split '" + split_s + "' at line " + std::to_string(line_no));

    std::filesystem::path fp(file);
    if (fp.is_relative()) fp = base / fp;
    entry.path = fp.string();

    const auto it = seen.find(entry.path);
    if (it != seen.end() && it->second != entry.split)
      throw UserError("manifest: " + entry.path + " appears in two splits");
    seen[entry.path] = entry.split;

    entry.n_samples = wav::probe(entry.path).n_samples;
    m.entries.push_back(std::move(entry));
  }
  if (m.entries.empty()) throw UserError("manifest: " + path + " lists no files");
  return m;
}

// Loaded-audio cache so repeated sampling does not re-read WAVs.
class WaveformCache {
 public:
  const Waveform &get(const std::string &path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, wav::read(path)).first;
    return it->second;
  }

 private:
  std::map<std::string, Waveform> cache_;
};

// ---------------------------------------------------------------------------
// Batch sampling (dynamic mixing)
// ---------------------------------------------------------------------------

struct TrainExample {
  MagnitudeSpectrogram mag;   // |Y|
  MaskMatrix psm;             // training target
  Waveform noisy, clean;
  double snr_db = 0.0;
};

namespace detail {

inline Waveform clip_of(const Waveform &w, Eigen::Index offset, Eigen::Index len) {
  return Waveform(w.samples.segment(offset, len));
}

// Noise shorter than the requested clip is tiled deterministically.
inline Waveform noise_clip(const Waveform &w, Eigen::Index offset, Eigen::Index len) {
  if (offset + len <= w.size()) return clip_of(w, offset, len);
  Eigen::VectorXd out(len);
  for (Eigen::Index i = 0; i < len; ++i) out[i] = w.samples[(offset + i) % w.size()];
  return Waveform(std::move(out));
}

}  // namespace detail

// One dynamically mixed example: random clean clip, random noise clip,
// integer-dB SNR uniform over [snr_lo, snr_hi]. Draw order is fixed, so the
// result is a pure function of the rng state.
inline TrainExample sample_example(const std::vector<const ManifestEntry *> &clean,
                                   const std::vector<const ManifestEntry *> &noise,
                                   WaveformCache &cache, double clip_len_s, int snr_lo,
                                   int snr_hi, Rng &rng) {
  if (clean.empty()) throw UserError("sample_example: no clean files in split");
  if (noise.empty()) throw UserError("sample_example: no noise files in split");
  const auto clip_len = static_cast<Eigen::Index>(std::llround(clip_len_s * kSampleRate));

  Waveform s;
  for (int attempt = 0;; ++attempt) {
    const auto *entry = clean[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(clean.size()) - 1))];
    if (entry->n_samples < clip_len) {
      if (attempt > 64)
        throw UserError("sample_example: no clean file long enough for a " +
                        std::to_string(clip_len_s) + " s clip");
      continue;
    }
    const Eigen::Index off =
        static_cast<Eigen::Index>(rng.uniform_int(0, entry->n_samples - clip_len));
    s = detail::clip_of(cache.get(entry->path), off, clip_len);
    const double power = s.samples.squaredNorm() / static_cast<double>(clip_len);
    if (power > 1e-10 || attempt > 64) break;  // skip near-silent stretches
  }

  const auto *noise_entry = noise[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(noise.size()) - 1))];
  const Eigen::Index max_off = std::max<Eigen::Index>(noise_entry->n_samples - 1, 0);
  const auto noff = static_cast<Eigen::Index>(rng.uniform_int(0, max_off));
  const Waveform d = detail::noise_clip(cache.get(noise_entry->path), noff, clip_len);
  const double snr = static_cast<double>(rng.uniform_int(snr_lo, snr_hi));

  TrainExample ex;
  ex.snr_db = snr;
  const Mixed mixed = mix_at_snr(s, d, snr);
  ex.clean = std::move(s);
  ex.noisy = mixed.noisy;
  const ComplexSpectrogram S = dsp::stft(ex.clean);
  const ComplexSpectrogram Y = dsp::stft(ex.noisy);
  ex.mag = dsp::magnitude(Y);
  ex.psm = dsp::psm_target(S, Y);
  return ex;
}

inline std::vector<TrainExample> sample_batch(const Manifest &manifest, WaveformCache &cache,
                                              int batch_size, double clip_len_s, int snr_lo,
                                              int snr_hi, Rng &rng) {
  const auto clean = manifest.select(Role::clean, Split::train);
  const auto noise = manifest.select(Role::noise, Split::train);
  std::vector<TrainExample> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i)
    batch.push_back(sample_example(clean, noise, cache, clip_len_s, snr_lo, snr_hi, rng));
  return batch;
}

// Frozen evaluation mixtures from a non-train split. clip_len_s == 0 uses
// each clean file's full length.
inline std::vector<TrainExample> build_mixtures(const Manifest &manifest, WaveformCache &cache,
                                                Split split, int count, double clip_len_s,
                                                int snr_lo, int snr_hi, std::uint64_t seed) {
  const auto clean = manifest.select(Role::clean, split);
  const auto noise = manifest.select(Role::noise, split);
  if (clean.empty() || noise.empty())
    throw UserError(std::string("build_mixtures: split '") + to_string(split) +
                    "' needs both clean and noise files");
  Rng rng(seed);
  std::vector<TrainExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    if (clip_len_s > 0.0) {
      out.push_back(sample_example(clean, noise, cache, clip_len_s, snr_lo, snr_hi, rng));
    } else {
      const auto *entry = clean[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(clean.size()) - 1))];
      out.push_back(sample_example({entry}, noise, cache,
                                   static_cast<double>(entry->n_samples) / kSampleRate, snr_lo,
                                   snr_hi, rng));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct CorpusSpec {
  std::string out_dir;
  int clean_files = 60;
  int noise_files = 12;
  double clean_len_s = 30.0;
  double noise_len_s = 60.0;
  std::uint64_t seed = 1234;
};

// Writes float32 WAVs plus manifest.txt; byte-identical for a fixed seed.
// The manifest is written last, so a failed run leaves no usable manifest.
inline std::string make_corpus(const CorpusSpec &spec) {
  namespace fs = std::filesystem;
  if (spec.clean_files < 3 || spec.noise_files < 3)
    throw ConfigError("make_corpus: need at least 3 clean and 3 noise files for the splits");
  std::error_code ec;
  fs::create_directories(spec.out_dir, ec);
  if (ec || !fs::is_directory(spec.out_dir))
    throw IoError("make_corpus: cannot create output directory " + spec.out_dir);

  const auto split_of = [](int idx, int total) {
    const int n_val = std::max(1, total / 10);
    const int n_test = std::max(1, total / 10);
    const int n_train = total - n_val - n_test;
    if (idx < n_train) return Split::train;
    if (idx < n_train + n_val) return Split::val;
    return Split::test;
  };

  std::vector<std::string> lines;
  char name[64];
  for (int i = 0; i < spec.clean_files; ++i) {
    const Waveform w = synth_clean(mix_seed(spec.seed, static_cast<std::uint64_t>(i)),
                                   spec.clean_len_s);
    std::snprintf(name, sizeof(name), "clean_%03d.wav", i);
    wav::write((fs::path(spec.out_dir) / name).string(), w, wav::Format::float32);
    lines.push_back(std::string("clean,") + to_string(split_of(i, spec.clean_files)) + "," + name);
  }
  const NoiseKind kinds[4] = {NoiseKind::white, NoiseKind::pink, NoiseKind::babble,
                              NoiseKind::machine};
  for (int i = 0; i < spec.noise_files; ++i) {
    const NoiseKind kind = kinds[i % 4];
    const Waveform w = synth_noise(mix_seed(spec.seed, 1000 + static_cast<std::uint64_t>(i)),
                                   spec.noise_len_s, kind);
    std::snprintf(name, sizeof(name), "noise_%03d_%s.wav", i, to_string(kind));
    wav::write((fs::path(spec.out_dir) / name).string(), w, wav::Format::float32);
    lines.push_back(std::string("noise,") + to_string(split_of(i, spec.noise_files)) + "," + name);
  }

  const std::string manifest_path = (fs::path(spec.out_dir) / "manifest.txt").string();
  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw IoError("make_corpus: cannot write " + manifest_path);
  for (const auto &l : lines) mf << l << "\n";
  mf.close();
  return manifest_path;
}

}  // namespace mixer
}  // namespace posse
