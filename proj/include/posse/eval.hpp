// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <filesystem>

#include "posse/dsp.hpp"
#include "posse/errors.hpp"
#include "posse/mixer.hpp"
#include "posse/model.hpp"
#include "posse/train.hpp"
#include "posse/wav.hpp"

namespace posse {
namespace eval {

// Numerically perfect reconstruction is reported as this cap instead of +inf.
inline constexpr double kSiSdrCap = 100.0;

// Scale-invariant SDR: project the estimate onto the reference and compare
// target energy against residual energy.
inline double si_sdr(const Waveform &est, const Waveform &ref) {
  if (est.size() != ref.size()) throw ShapeError("si_sdr: lengths differ");
  if (est.size() == 0) throw UserError("si_sdr: empty input");
  const double ref_energy = ref.samples.squaredNorm();
  if (ref_energy <= 0.0) throw UserError("si_sdr: reference signal is zero");
  const double scale = est.samples.dot(ref.samples) / ref_energy;
  const Eigen::VectorXd target = scale * ref.samples;
  const Eigen::VectorXd residual = est.samples - target;
  const double t_e = target.squaredNorm();
  const double r_e = residual.squaredNorm();
  if (r_e <= t_e * 1e-20) return kSiSdrCap;
  return std::min(kSiSdrCap, 10.0 * std::log10(t_e / r_e));
}

// Segmental SNR: per-frame 10*log10(||ref||^2/||est-ref||^2), clamped to
// [floor_db, ceil_db], averaged over frames whose reference energy is within
// 40 dB of the loudest frame. Invariant under common scaling of est and ref.
inline double seg_snr(const Waveform &est, const Waveform &ref, int frame = 512, int hop = 256,
                      double floor_db = -10.0, double ceil_db = 35.0) {
  if (est.size() != ref.size()) throw ShapeError("seg_snr: lengths differ");
  if (ref.size() < frame) throw UserError("seg_snr: signal shorter than one frame");

  std::vector<double> frame_energy;
  for (Eigen::Index start = 0; start + frame <= ref.size(); start += hop)
    frame_energy.push_back(ref.samples.segment(start, frame).squaredNorm());
  const double max_e = *std::max_element(frame_energy.begin(), frame_energy.end());
  if (max_e <= 0.0) throw UserError("seg_snr: reference is silent");
  const double silence_gate = max_e * 1e-4;  // 40 dB below the loudest frame

  double sum = 0.0;
  int n = 0;
  std::size_t idx = 0;
  for (Eigen::Index start = 0; start + frame <= ref.size(); start += hop, ++idx) {
    const double ref_e = frame_energy[idx];
    if (ref_e <= silence_gate) continue;
    const double err_e = (est.samples.segment(start, frame) - ref.samples.segment(start, frame))
                             .squaredNorm();
    double snr = (err_e <= ref_e * 1e-20) ? ceil_db : 10.0 * std::log10(ref_e / err_e);
    snr = std::max(floor_db, std::min(ceil_db, snr));
    sum += snr;
    ++n;
  }
  if (n == 0) throw UserError("seg_snr: no frames above the silence gate");
  return sum / n;
}

// Mean mask MSE over an evaluation set; same formula as the training loss,
// so values are directly comparable to the loss curves.
inline double masked_spectral_mse(const ModelParams &params,
                                  const std::vector<mixer::TrainExample> &mixtures) {
  return train::validation_loss(params, mixtures);
}

// forward -> mask -> istft, trimmed to the input length.
inline Waveform enhance(const ModelParams &params, const Waveform &noisy) {
  const ComplexSpectrogram Y = dsp::stft(noisy);
  const auto fw = model::forward(dsp::magnitude(Y), params);
  const Waveform full = dsp::istft(dsp::apply_mask(Y, fw.mask));
  return Waveform(full.samples.head(noisy.size()));
}

// ---------------------------------------------------------------------------
// Length sweep (train-short / test-long harness)
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string scheme;
  double train_len_s = 0.0;
  double test_len_s = 0.0;
  double snr_db = 0.0;
  std::string metric;
  double value = 0.0;
  long count = 0;
};

struct SweepScheme {
  std::string tag;
  ModelParams params;
  double train_len_s = 0.0;
};

struct SweepConfig {
  std::vector<double> lengths_s = {1, 2, 5, 10, 15, 20};
  std::vector<double> snrs_db = {-5, 0, 5, 10, 15};
  int mixtures_per_cell = 40;
  std::uint64_t seed = 7;
};

namespace detail {

inline void metric_rows(std::vector<ReportRow> &rows, const std::string &scheme,
                        double train_len, double len_s, double snr, const char *metric,
                        double value, long n) {
  rows.push_back({scheme, train_len, len_s, snr, metric, value, n});
}

}  // namespace detail

// Evaluates every scheme on bit-identical mixtures per (length, snr) cell.
// Adds a "noisy" baseline row set (identity mask) and an "oracle_psm" upper
// bound. A Learned-APE length overflow becomes an error row, not a crash.
// If wav_dir is non-empty, the first enhanced mixture of each cell is written
// there per scheme.
inline std::vector<ReportRow> length_sweep(const std::vector<SweepScheme> &schemes,
                                           const mixer::Manifest &manifest,
                                           mixer::WaveformCache &cache, const SweepConfig &cfg,
                                           const std::string &wav_dir = "") {
  if (!wav_dir.empty()) std::filesystem::create_directories(wav_dir);
  std::vector<ReportRow> rows;
  for (std::size_t li = 0; li < cfg.lengths_s.size(); ++li) {
    const double len_s = cfg.lengths_s[li];
    for (std::size_t si = 0; si < cfg.snrs_db.size(); ++si) {
      const double snr = cfg.snrs_db[si];
      const auto cell_seed = mix_seed(cfg.seed, 10000 + li * 100 + si);
      const auto mixtures = mixer::build_mixtures(
          manifest, cache, mixer::Split::test, cfg.mixtures_per_cell, len_s,
          static_cast<int>(snr), static_cast<int>(snr), cell_seed);
      const long n = static_cast<long>(mixtures.size());

      // references
      double noisy_sisdr = 0.0, noisy_seg = 0.0, noisy_mse = 0.0;
      double oracle_sisdr = 0.0, oracle_seg = 0.0;
      for (const auto &ex : mixtures) {
        noisy_sisdr += si_sdr(ex.noisy, ex.clean);
        noisy_seg += seg_snr(ex.noisy, ex.clean);
        noisy_mse += (Eigen::MatrixXd::Ones(ex.psm.rows(), ex.psm.cols()) - ex.psm)
                         .squaredNorm() /
                     static_cast<double>(ex.psm.size());
        const ComplexSpectrogram Y = dsp::stft(ex.noisy);
        const Waveform oracle =
            Waveform(dsp::istft(dsp::apply_mask(Y, ex.psm)).samples.head(ex.noisy.size()));
        oracle_sisdr += si_sdr(oracle, ex.clean);
        oracle_seg += seg_snr(oracle, ex.clean);
      }
      detail::metric_rows(rows, "noisy", 0, len_s, snr, "si_sdr_db", noisy_sisdr / n, n);
      detail::metric_rows(rows, "noisy", 0, len_s, snr, "seg_snr_db", noisy_seg / n, n);
      detail::metric_rows(rows, "noisy", 0, len_s, snr, "masked_mse", noisy_mse / n, n);
      detail::metric_rows(rows, "oracle_psm", 0, len_s, snr, "si_sdr_db", oracle_sisdr / n, n);
      detail::metric_rows(rows, "oracle_psm", 0, len_s, snr, "seg_snr_db", oracle_seg / n, n);
      detail::metric_rows(rows, "oracle_psm", 0, len_s, snr, "masked_mse", 0.0, n);

      for (const auto &scheme : schemes) {
        double s_sisdr = 0.0, s_seg = 0.0, s_mse = 0.0;
        bool overflow = false;
        std::size_t mix_idx = 0;
        for (const auto &ex : mixtures) {
          try {
            const auto fw = model::forward(ex.mag, scheme.params);
            s_mse += train::mse_mask_loss(fw.mask, ex.psm).value;
            const ComplexSpectrogram Y = dsp::stft(ex.noisy);
            const Waveform out = Waveform(
                dsp::istft(dsp::apply_mask(Y, fw.mask)).samples.head(ex.noisy.size()));
            s_sisdr += si_sdr(out, ex.clean);
            s_seg += seg_snr(out, ex.clean);
            if (!wav_dir.empty() && mix_idx == 0) {
              char fname[160];
              std::snprintf(fname, sizeof(fname), "%s_len%gs_snr%gdB.wav",
                            scheme.tag.c_str(), len_s, snr);
              wav::write((std::filesystem::path(wav_dir) / fname).string(), out);
            }
          } catch (const UserError &) {
            overflow = true;
            break;
          }
          ++mix_idx;
        }
        if (overflow) {
          detail::metric_rows(rows, scheme.tag, scheme.train_len_s, len_s, snr,
                              "error.length_overflow", 1.0, 0);
          continue;
        }
        detail::metric_rows(rows, scheme.tag, scheme.train_len_s, len_s, snr, "si_sdr_db",
                            s_sisdr / n, n);
        detail::metric_rows(rows, scheme.tag, scheme.train_len_s, len_s, snr, "seg_snr_db",
                            s_seg / n, n);
        detail::metric_rows(rows, scheme.tag, scheme.train_len_s, len_s, snr, "masked_mse",
                            s_mse / n, n);
      }
    }
  }
  return rows;
}

inline void write_report(const std::string &path, const std::vector<ReportRow> &rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("report: cannot write " + path);
  os << "# posse length-sweep report\n";
  os << "# metrics are desk-scale proxies (si_sdr_db, seg_snr_db, masked_mse); they are NOT\n";
  os << "# comparable to published PESQ/ESTOI/CSIG/CBAK/COVL numbers.\n";
  os << "scheme,train_len,test_len,snr_db,metric,value,n\n";
  char buf[64];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.value);
    os << r.scheme << "," << r.train_len_s << "," << r.test_len_s << "," << r.snr_db << ","
       << r.metric << "," << buf << "," << r.count << "\n";
  }
  if (!os) throw IoError("report: short write to " + path);
}

}  // namespace eval
}  // namespace posse
