// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "posse/checkpoint.hpp"
#include "posse/errors.hpp"
#include "posse/mixer.hpp"
#include "posse/model.hpp"

namespace posse {
namespace train {

// ---------------------------------------------------------------------------
// Flat tensor views (params, grads and Adam moments share one canonical order)
// ---------------------------------------------------------------------------

struct TensorView {
  std::string name;
  double *data;
  Eigen::Index size;
};

struct ConstTensorView {
  std::string name;
  const double *data;
  Eigen::Index size;
};

inline std::vector<TensorView> tensor_views(ModelParams &p) {
  std::vector<TensorView> v;
  for_each_tensor(p, [&](const std::string &n, auto &t) {
    v.push_back({n, t.data(), t.size()});
  });
  return v;
}

inline std::vector<ConstTensorView> tensor_views(const ModelParams &p) {
  std::vector<ConstTensorView> v;
  for_each_tensor(p, [&](const std::string &n, const auto &t) {
    v.push_back({n, t.data(), t.size()});
  });
  return v;
}

// ---------------------------------------------------------------------------
// Optimization recipe
// ---------------------------------------------------------------------------

// Inverse-square-root warmup: lr = d_model^-0.5 * min(n^-0.5, n * w^-1.5).
// Rises linearly for n < w, peaks at n == w, then decays as n^-0.5.
inline double lr_schedule(std::int64_t n_itr, std::int64_t w_itr, int d_model) {
  if (n_itr < 1) throw UserError("lr_schedule: n_itr must be >= 1 (formula undefined at 0)");
  if (w_itr < 1) throw ConfigError("lr_schedule: w_itr must be >= 1");
  const double n = static_cast<double>(n_itr);
  const double w = static_cast<double>(w_itr);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(n, -0.5), n * std::pow(w, -1.5));
}

struct MseLoss {
  double value = 0.0;
  Eigen::MatrixXd grad;  // dL/dM, same shape as the mask
};

// Mean over all T*K entries of (mask - target)^2.
inline MseLoss mse_mask_loss(const Eigen::MatrixXd &mask, const Eigen::MatrixXd &target) {
  if (mask.rows() != target.rows() || mask.cols() != target.cols())
    throw ShapeError("mse_mask_loss: mask and target shapes differ");
  const double n = static_cast<double>(mask.size());
  MseLoss out;
  const Eigen::MatrixXd diff = mask - target;
  out.value = diff.squaredNorm() / n;
  out.grad = (2.0 / n) * diff;
  return out;
}

// Elementwise value clamp to [-clip, clip]; this is value clipping, not norm
// clipping. Idempotent.
inline void clip_grads(GradStore &grads, double clip = 1.0) {
  for_each_tensor(grads, [&](const std::string &, auto &t) {
    t = t.cwiseMax(-clip).cwiseMin(clip);
  });
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct AdamState {
  GradStore m, v;
  std::uint64_t step = 0;

  static AdamState init(const ModelParams &p) {
    AdamState s;
    s.m = zeros_like(p);
    s.v = zeros_like(p);
    return s;
  }
};

// Standard Adam with bias correction; the step counter is incremented before
// the update, so the first call applies t = 1 corrections.
inline void adam_step(ModelParams &params, const GradStore &grads, AdamState &state, double lr,
                      const AdamConfig &cfg = {}) {
  ++state.step;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto pv = tensor_views(params);
  const auto gv = tensor_views(static_cast<const ModelParams &>(grads));
  auto mv = tensor_views(state.m);
  auto vv = tensor_views(state.v);
  if (pv.size() != gv.size()) throw ShapeError("adam_step: gradient/parameter tensor mismatch");
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i].size != gv[i].size || pv[i].name != gv[i].name)
      throw ShapeError("adam_step: tensor '" + pv[i].name + "' shape mismatch");
    double *p = pv[i].data;
    const double *g = gv[i].data;
    double *m = mv[i].data;
    double *v = vv[i].data;
    for (Eigen::Index j = 0; j < pv[i].size; ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / b1t;
      const double vhat = v[j] / b2t;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training state (for exact resume)
// ---------------------------------------------------------------------------

struct TrainState {
  std::uint64_t global_iter = 0;
  std::uint32_t epochs_done = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::uint64_t data_seed = 0;
  std::uint64_t data_draws = 0;
  AdamState opt;
};

inline constexpr char kStateMagic[8] = {'P', 'O', 'S', 'S', 'E', 'S', 'T', '1'};

inline void save_state(const std::string &path, const TrainState &st) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("train state: cannot write " + path);
  namespace d = ckpt::detail;
  d::put_bytes(os, kStateMagic, 8);
  d::put_u32(os, 1);
  d::put_u64(os, st.global_iter);
  d::put_u32(os, st.epochs_done);
  d::put_f64(os, st.best_val);
  d::put_u64(os, st.data_seed);
  d::put_u64(os, st.data_draws);
  d::put_u64(os, st.opt.step);
  for_each_tensor(st.opt.m, [&](const std::string &n, const auto &t) { d::put_tensor(os, n, t); });
  for_each_tensor(st.opt.v, [&](const std::string &n, const auto &t) { d::put_tensor(os, n, t); });
  if (!os) throw IoError("train state: short write to " + path);
}

inline TrainState load_state(const std::string &path, const ModelParams &shape_like) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("train state: cannot open " + path);
  namespace d = ckpt::detail;
  char magic[8];
  d::get_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, kStateMagic, 8) != 0)
    throw IoError("train state: " + path + " is not a posse training-state file");
  if (d::get_u32(is, "version") != 1) throw IoError("train state: unsupported version");
  TrainState st;
  st.global_iter = d::get_u64(is, "global_iter");
  st.epochs_done = d::get_u32(is, "epochs_done");
  st.best_val = d::get_f64(is, "best_val");
  st.data_seed = d::get_u64(is, "data_seed");
  st.data_draws = d::get_u64(is, "data_draws");
  st.opt.m = zeros_like(shape_like);
  st.opt.v = zeros_like(shape_like);
  st.opt.step = d::get_u64(is, "opt_step");
  for_each_tensor(st.opt.m, [&](const std::string &n, auto &t) { d::get_tensor(is, n, t); });
  for_each_tensor(st.opt.v, [&](const std::string &n, auto &t) { d::get_tensor(is, n, t); });
  return st;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 150;
  int iters_per_epoch = 1000;
  int batch_size = 10;
  double clip_len_s = 1.0;
  std::int64_t warmup_iters = 40000;
  AdamConfig adam;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
  int snr_lo = -10;
  int snr_hi = 20;
  int val_mixtures = 20;
  double val_len_s = 0.0;  // 0 = full-length (unsegmented) validation clips
  int threads = 0;         // forward/backward workers per batch; 0 = hardware
  bool resume = false;
  std::string out_dir;

  void validate() const {
    if (epochs < 1 || iters_per_epoch < 1 || batch_size < 1)
      throw ConfigError("train config: epochs, iters_per_epoch, batch_size must be >= 1");
    if (clip_len_s <= 0.0) throw ConfigError("train config: clip_len_s must be positive");
    if (warmup_iters < 1) throw ConfigError("train config: warmup_iters must be >= 1");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0))
      throw ConfigError("train config: adam betas must lie in (0, 1)");
    if (grad_clip <= 0.0) throw ConfigError("train config: grad_clip must be positive");
    if (snr_lo > snr_hi) throw ConfigError("train config: snr_lo must be <= snr_hi");
    if (out_dir.empty()) throw ConfigError("train config: out_dir is required");
  }
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string loss_csv;
  double best_val = 0.0;
  double final_train_loss = 0.0;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers over a static
// interleaved partition. Callers write results into index-addressed slots and
// reduce in index order afterwards, so the numbers are identical for every
// thread count.
template <class Fn>
void parallel_indices(std::size_t n, int threads, Fn &&fn) {
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n;
             i += static_cast<std::size_t>(workers))
          fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);
}

inline void check_finite_or_die(const ModelParams &params, const GradStore &grads,
                                double loss, std::uint64_t iter) {
  if (std::isfinite(loss)) return;
  std::string first_bad = "(none)";
  bool found = false;
  for_each_tensor(static_cast<const ModelParams &>(grads),
                  [&](const std::string &n, const auto &t) {
                    if (!found && !t.allFinite()) {
                      first_bad = "grad:" + n;
                      found = true;
                    }
                  });
  if (!found)
    for_each_tensor(params, [&](const std::string &n, const auto &t) {
      if (!found && !t.allFinite()) {
        first_bad = "param:" + n;
        found = true;
      }
    });
  throw NumericError("training loss became non-finite at iteration " + std::to_string(iter) +
                     "; first non-finite parameter group: " + first_bad);
}

inline std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Computes the frozen-validation loss: mean of per-utterance mask MSEs.
// Utterances may be evaluated on several threads; the mean is reduced in
// utterance order either way.
inline double validation_loss(const ModelParams &params,
                              const std::vector<mixer::TrainExample> &mixtures,
                              int threads = 1) {
  if (mixtures.empty()) throw UserError("validation_loss: no mixtures");
  std::vector<double> losses(mixtures.size());
  detail::parallel_indices(mixtures.size(), threads, [&](std::size_t i) {
    const auto fw = model::forward(mixtures[i].mag, params);
    losses[i] = mse_mask_loss(fw.mask, mixtures[i].psm).value;
  });
  double sum = 0.0;
  for (const double v : losses) sum += v;
  return sum / static_cast<double>(mixtures.size());
}

// The full recipe: per iteration, sample a dynamically mixed batch, run
// forward/backward per utterance, average the gradients, clip, and apply one
// Adam step at the scheduled learning rate. Logs `iter,epoch,split,loss` per
// iteration plus one frozen-validation row per epoch, and checkpoints both
// the best-validation and the latest parameters. Deterministic: the whole
// run is a pure function of (config, manifest, seed).
inline TrainResult train_loop(const TrainConfig &cfg, const ModelConfig &model_cfg,
                              const mixer::Manifest &manifest) {
  cfg.validate();
  ModelConfig mc = model_cfg;
  const auto train_frames =
      dsp::num_frames(static_cast<Eigen::Index>(std::llround(cfg.clip_len_s * kSampleRate)),
                      kHop);
  if (mc.pe == PeKind::learned_ape && mc.pe_t_max == 0) mc.pe_t_max = 4 * train_frames;
  mc.validate();

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  const std::string best_path = (fs::path(cfg.out_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
  const std::string state_path = (fs::path(cfg.out_dir) / "last.state").string();
  const std::string csv_path = (fs::path(cfg.out_dir) / "loss.csv").string();

  mixer::WaveformCache cache;
  const std::vector<mixer::TrainExample> val_set =
      mixer::build_mixtures(manifest, cache, mixer::Split::val, cfg.val_mixtures, cfg.val_len_s,
                            cfg.snr_lo, cfg.snr_hi, mix_seed(cfg.seed, 2));
  if (mc.pe == PeKind::learned_ape) {
    Eigen::Index longest = 0;
    for (const auto &ex : val_set) longest = std::max(longest, ex.mag.rows());
    if (longest > mc.pe_t_max)
      throw ConfigError(
          "train_loop: validation mixtures reach " + std::to_string(longest) +
          " frames but the learned-APE table has pe.t_max=" + std::to_string(mc.pe_t_max) +
          " rows; raise pe.t_max or shorten data.val_len_s");
  }

  ModelParams params;
  TrainState st;
  std::ofstream csv;
  if (cfg.resume) {
    params = ckpt::load(last_path).params;
    if (params.config != mc)
      throw UserError("train_loop: resume checkpoint config does not match requested config");
    st = load_state(state_path, params);
    csv.open(csv_path, std::ios::app);
  } else {
    params = model::init_params(mc, cfg.seed);
    st.opt = AdamState::init(params);
    st.data_seed = mix_seed(cfg.seed, 1);
    csv.open(csv_path, std::ios::trunc);
    csv << "iter,epoch,split,loss\n";
  }
  if (!csv) throw IoError("train_loop: cannot write " + csv_path);

  Rng data_rng = Rng::restore(st.data_seed, st.data_draws);

  double train_loss = 0.0;
  for (int epoch = static_cast<int>(st.epochs_done) + 1; epoch <= cfg.epochs; ++epoch) {
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      ++st.global_iter;
      const auto batch = mixer::sample_batch(manifest, cache, cfg.batch_size, cfg.clip_len_s,
                                             cfg.snr_lo, cfg.snr_hi, data_rng);
      // utterances run forward/backward in parallel against the read-only
      // params snapshot; gradients are reduced in utterance order
      std::vector<double> losses(batch.size());
      std::vector<GradStore> per_utt(batch.size());
      detail::parallel_indices(batch.size(), cfg.threads, [&](std::size_t i) {
        const auto fw = model::forward(batch[i].mag, params);
        const MseLoss loss = mse_mask_loss(fw.mask, batch[i].psm);
        losses[i] = loss.value;
        per_utt[i] = model::backward(fw.tape, loss.grad, params);
      });
      GradStore grads = zeros_like(params);
      double loss_sum = 0.0;
      auto acc = tensor_views(grads);
      for (std::size_t u = 0; u < batch.size(); ++u) {
        loss_sum += losses[u];
        const auto add = tensor_views(static_cast<const ModelParams &>(per_utt[u]));
        for (std::size_t i = 0; i < acc.size(); ++i)
          for (Eigen::Index j = 0; j < acc[i].size; ++j) acc[i].data[j] += add[i].data[j];
        params.pe.trained_len = std::max(params.pe.trained_len, batch[u].mag.rows());
      }
      const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
      for_each_tensor(grads, [&](const std::string &, auto &t) { t *= inv_b; });
      train_loss = loss_sum * inv_b;

      detail::check_finite_or_die(params, grads, train_loss, st.global_iter);
      clip_grads(grads, cfg.grad_clip);
      const double lr =
          lr_schedule(static_cast<std::int64_t>(st.global_iter), cfg.warmup_iters, mc.d_model);
      adam_step(params, grads, st.opt, lr, cfg.adam);

      csv << st.global_iter << "," << epoch << ",train," << detail::fmt_loss(train_loss)
          << "\n";
    }

    const double val = validation_loss(params, val_set, cfg.threads);
    csv << st.global_iter << "," << epoch << ",val," << detail::fmt_loss(val) << "\n";
    csv.flush();
    if (val < st.best_val) {
      st.best_val = val;
      ckpt::save(best_path, params, cfg.clip_len_s);
    }
    st.epochs_done = static_cast<std::uint32_t>(epoch);
    st.data_draws = data_rng.draws();
    ckpt::save(last_path, params, cfg.clip_len_s);
    save_state(state_path, st);
  }

  TrainResult r;
  r.best_checkpoint = best_path;
  r.last_checkpoint = last_path;
  r.loss_csv = csv_path;
  r.best_val = st.best_val;
  r.final_train_loss = train_loss;
  return r;
}

}  // namespace train
}  // namespace posse
