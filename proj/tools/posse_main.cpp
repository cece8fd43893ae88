// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// posse CLI: corpus synthesis, training, enhancement, evaluation sweeps,
// gradient checks, and position-embedding dumps. Exit codes: 0 success,
// 1 user/configuration error, 2 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "posse/checkpoint.hpp"
#include "posse/config.hpp"
#include "posse/eval.hpp"
#include "posse/gradcheck.hpp"
#include "posse/mixer.hpp"
#include "posse/model.hpp"
#include "posse/train.hpp"
#include "posse/wav.hpp"

namespace {

// Overrides are accepted both bare (`pe.scheme=kerple`) and flag-style
// (`--pe.scheme=kerple`).
posse::Config load_config(const std::string &path, const std::vector<std::string> &overrides) {
  posse::Config cfg = path.empty() ? posse::Config() : posse::Config::from_file(path);
  for (std::string o : overrides) {
    if (o.rfind("--", 0) == 0) o = o.substr(2);
    cfg.apply_override(o);
  }
  return cfg;
}

void echo_resolved(const posse::Config &cfg, const std::string &persist_dir = "") {
  std::cout << "# resolved config\n" << cfg.resolved();
  if (!persist_dir.empty()) {
    std::filesystem::create_directories(persist_dir);
    std::ofstream os(std::filesystem::path(persist_dir) / "resolved.cfg");
    os << cfg.resolved();
  }
}

int cmd_make_corpus(const std::string &config_path, const std::vector<std::string> &overrides) {
  const posse::Config cfg = load_config(config_path, overrides);
  posse::mixer::CorpusSpec spec = cfg.corpus_spec();
  if (spec.out_dir.empty())
    throw posse::ConfigError("make-corpus: corpus.out_dir is required");
  echo_resolved(cfg, spec.out_dir);
  const std::string manifest = posse::mixer::make_corpus(spec);
  std::cout << "wrote corpus manifest: " << manifest << "\n";
  return 0;
}

int cmd_train(const std::string &config_path, const std::vector<std::string> &overrides) {
  const posse::Config cfg = load_config(config_path, overrides);
  const posse::train::TrainConfig tc = cfg.train_config();
  const posse::ModelConfig mc = cfg.model_config();
  if (cfg.manifest_path().empty())
    throw posse::ConfigError("train: data.manifest is required");
  echo_resolved(cfg, tc.out_dir);
  const posse::mixer::Manifest manifest = posse::mixer::load_manifest(cfg.manifest_path());
  const posse::train::TrainResult r = posse::train::train_loop(tc, mc, manifest);
  std::cout << "loss log:        " << r.loss_csv << "\n"
            << "best checkpoint: " << r.best_checkpoint << " (val mse "
            << r.best_val << ")\n"
            << "last checkpoint: " << r.last_checkpoint << "\n";
  return 0;
}

int cmd_enhance(const std::string &ckpt_path, const std::string &in_path,
                const std::string &out_path) {
  std::cout << "# resolved: checkpoint=" << ckpt_path << " in=" << in_path
            << " out=" << out_path << "\n";
  const posse::ckpt::Loaded loaded = posse::ckpt::load(ckpt_path);
  const posse::Waveform noisy = posse::wav::read(in_path);
  std::cout << "# checkpoint: pe=" << posse::to_string(loaded.params.config.pe)
            << " layers=" << loaded.params.config.n_layers
            << " d_model=" << loaded.params.config.d_model
            << " trained_clip_s=" << loaded.train_clip_seconds << "\n";
  const posse::Waveform out = posse::eval::enhance(loaded.params, noisy);
  posse::wav::write(out_path, out);
  std::cout << "wrote " << out_path << " (" << out.size() << " samples)\n";
  return 0;
}

int cmd_eval_sweep(const std::string &config_path, const std::vector<std::string> &overrides,
                   const std::vector<std::string> &checkpoints) {
  const posse::Config cfg = load_config(config_path, overrides);
  if (cfg.manifest_path().empty())
    throw posse::ConfigError("eval-sweep: data.manifest is required");
  if (checkpoints.empty())
    throw posse::ConfigError("eval-sweep: at least one --checkpoint tag=path is required");
  echo_resolved(cfg);

  std::vector<posse::eval::SweepScheme> schemes;
  for (const auto &spec : checkpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw posse::ConfigError("eval-sweep: --checkpoint expects tag=path, got '" + spec + "'");
    posse::eval::SweepScheme s;
    s.tag = spec.substr(0, eq);
    const posse::ckpt::Loaded loaded = posse::ckpt::load(spec.substr(eq + 1));
    s.params = loaded.params;
    s.train_len_s = loaded.train_clip_seconds;
    schemes.push_back(std::move(s));
  }

  posse::eval::SweepConfig sweep;
  sweep.lengths_s = cfg.get_list("eval.lengths_s", sweep.lengths_s);
  sweep.snrs_db = cfg.get_list("eval.snrs_db", sweep.snrs_db);
  sweep.mixtures_per_cell = static_cast<int>(cfg.get_int("eval.mixtures_per_cell", 40));
  sweep.seed = cfg.seed();
  const std::string out = cfg.get_str("eval.out", "report.csv");
  const std::string wav_dir = cfg.get_bool("eval.write_wavs", false) ? out + ".wavs" : "";

  const posse::mixer::Manifest manifest = posse::mixer::load_manifest(cfg.manifest_path());
  posse::mixer::WaveformCache cache;
  const auto rows = posse::eval::length_sweep(schemes, manifest, cache, sweep, wav_dir);
  posse::eval::write_report(out, rows);
  std::cout << "wrote " << rows.size() << " report rows to " << out << "\n";
  return 0;
}

int cmd_grad_check(const std::string &scheme, std::uint64_t seed, int t_len, bool corrupt) {
  std::cout << "# resolved: scheme=" << scheme << " seed=" << seed << " frames=" << t_len
            << " corrupt=" << (corrupt ? 1 : 0) << "\n";
  std::vector<posse::PeKind> kinds;
  if (scheme == "all") {
    kinds = {posse::PeKind::no_pos, posse::PeKind::sinusoidal, posse::PeKind::learned_ape,
             posse::PeKind::t5_rpe, posse::PeKind::kerple};
  } else {
    kinds = {posse::parse_pe_kind(scheme)};
  }

  bool ok = true;
  for (const posse::PeKind kind : kinds) {
    posse::ModelConfig tiny;
    tiny.n_layers = 2;
    tiny.n_heads = 2;
    tiny.d_model = 8;
    tiny.d_ff = 16;
    tiny.n_freq = 9;
    tiny.pe = kind;
    tiny.pe_t_max = 4 * t_len;
    const posse::gradcheck::Report report =
        posse::gradcheck::run(tiny, t_len, seed, 1e-4, corrupt);
    std::printf("scheme %-12s worst rel err %.3e  [%s]\n", posse::to_string(kind),
                report.worst, report.passed() ? "ok" : "FAIL");
    for (const auto &g : report.groups)
      std::printf("  %-24s %.3e\n", g.name.c_str(), g.max_rel_err);
    ok = ok && report.passed();
  }
  if (!ok) throw posse::NumericError("gradient check failed (see report above)");
  std::cout << "gradient check passed for all schemes\n";
  return 0;
}

int cmd_pe_dump(const std::string &scheme, int t_len, const std::string &out_path,
                const std::string &ckpt_path, std::uint64_t seed, int n_heads, int d_model) {
  std::cout << "# resolved: scheme=" << scheme << " frames=" << t_len << " out=" << out_path
            << " checkpoint=" << (ckpt_path.empty() ? "(randomized)" : ckpt_path)
            << " seed=" << seed << " heads=" << n_heads << " d_model=" << d_model << "\n";
  using posse::PeKind;
  const PeKind kind = posse::parse_pe_kind(scheme);
  posse::PeParams pe;
  if (!ckpt_path.empty()) {
    const posse::ckpt::Loaded loaded = posse::ckpt::load(ckpt_path);
    if (loaded.params.config.pe != kind)
      throw posse::UserError("pe-dump: checkpoint holds scheme '" +
                             std::string(posse::to_string(loaded.params.config.pe)) + "'");
    pe = loaded.params.pe;
  } else {
    // no checkpoint: visualize a randomized instance of the scheme
    pe = posse::posemb::build_scheme(kind, n_heads, d_model, t_len, seed);
    posse::Rng rng(posse::mix_seed(seed, 3));
    if (kind == PeKind::t5_rpe)
      for (Eigen::Index i = 0; i < pe.t5_buckets.size(); ++i)
        pe.t5_buckets.data()[i] = rng.normal();
    if (kind == PeKind::kerple)
      for (int h = 0; h < n_heads; ++h) {
        pe.kerple_rho1[h] = rng.normal();
        pe.kerple_rho2[h] = rng.normal();
      }
  }

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw posse::IoError("pe-dump: cannot write " + out_path);
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    os << buf;
  };
  if (posse::is_rpe(kind)) {
    const auto bias = posse::posemb::build_bias(pe, t_len);
    for (std::size_t h = 0; h < bias.size(); ++h) {
      os << "# head " << h << " (" << t_len << "x" << t_len << ")\n";
      for (Eigen::Index i = 0; i < bias[h].rows(); ++i) {
        for (Eigen::Index j = 0; j < bias[h].cols(); ++j) {
          if (j) os << ",";
          put(bias[h](i, j));
        }
        os << "\n";
      }
    }
  } else if (posse::is_ape(kind)) {
    const Eigen::MatrixXd table = posse::posemb::ape_rows(pe, t_len);
    os << "# " << posse::to_string(kind) << " table (" << t_len << "x" << d_model << ")\n";
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      for (Eigen::Index j = 0; j < table.cols(); ++j) {
        if (j) os << ",";
        put(table(i, j));
      }
      os << "\n";
    }
  } else {
    os << "# no_pos adds no position information; nothing to dump\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"posse: position-aware Transformer speech enhancement"};
  app.require_subcommand(1);

  std::string config_path, scheme = "all", ckpt_path, in_path, out_path;
  std::vector<std::string> overrides, checkpoints;
  std::uint64_t seed = 7;
  int t_len = 5;
  int n_heads = 8, d_model = 256;
  bool corrupt = false;

  auto *mk = app.add_subcommand("make-corpus", "synthesize the WAV corpus and manifest");
  mk->add_option("--config", config_path, "key=value config file");
  mk->add_option("overrides", overrides, "key=value overrides");
  mk->allow_extras();

  auto *tr = app.add_subcommand("train", "train a mask-estimation model");
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("overrides", overrides, "key=value overrides");
  tr->allow_extras();

  auto *en = app.add_subcommand("enhance", "enhance a 16 kHz mono WAV");
  en->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  en->add_option("--in", in_path, "input WAV")->required();
  en->add_option("--out", out_path, "output WAV")->required();

  auto *ev = app.add_subcommand("eval-sweep", "train-short/test-long length sweep");
  ev->add_option("--config", config_path, "key=value config file");
  ev->add_option("--checkpoint", checkpoints, "tag=path, repeatable")->required();
  ev->add_option("overrides", overrides, "key=value overrides");
  ev->allow_extras();

  auto *gc = app.add_subcommand("grad-check", "finite-difference gradient suite (tiny model)");
  gc->add_option("--scheme", scheme, "pe scheme or 'all'");
  gc->add_option("--seed", seed, "rng seed");
  gc->add_option("--frames", t_len, "sequence length");
  gc->add_flag("--self-test-corrupt", corrupt,
               "deliberately corrupt one gradient (checker must fail)");

  auto *pd = app.add_subcommand("pe-dump", "dump PE tables / bias matrices as CSV");
  pd->add_option("--scheme", scheme, "pe scheme")->required();
  pd->add_option("--frames", t_len, "sequence length")->required();
  pd->add_option("--out", out_path, "output CSV")->required();
  pd->add_option("--checkpoint", ckpt_path, "dump the exact matrices of this checkpoint");
  pd->add_option("--seed", seed, "randomize learnable PE params (no checkpoint)");
  pd->add_option("--heads", n_heads, "head count (no checkpoint)");
  pd->add_option("--d-model", d_model, "embedding dim (no checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto with_extras = [&](CLI::App *sub) {
    const auto extra = sub->remaining();
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    return overrides;
  };

  try {
    if (mk->parsed()) return cmd_make_corpus(config_path, with_extras(mk));
    if (tr->parsed()) return cmd_train(config_path, with_extras(tr));
    if (en->parsed()) return cmd_enhance(ckpt_path, in_path, out_path);
    if (ev->parsed()) return cmd_eval_sweep(config_path, with_extras(ev), checkpoints);
    if (gc->parsed()) return cmd_grad_check(scheme, seed, t_len, corrupt);
    if (pd->parsed())
      return cmd_pe_dump(scheme, t_len, out_path, ckpt_path, seed, n_heads, d_model);
  } catch (const posse::NumericError &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const posse::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
