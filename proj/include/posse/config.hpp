// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "posse/errors.hpp"
#include "posse/mixer.hpp"
#include "posse/model.hpp"
#include "posse/train.hpp"

namespace posse {

// Plain-text `key=value` configuration. Every key must be known; '#' starts
// a comment. CLI overrides use the same `key=value` syntax. resolved() emits
// all keys with their effective values so any run can be replayed exactly.
class Config {
 public:
  Config() = default;

  static const std::set<std::string> &known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "out.dir",
        "pe.scheme",
        "pe.t_max",
        "model.n_layers",
        "model.n_heads",
        "model.d_model",
        "model.d_ff",
        "model.ffn_act",
        "train.epochs",
        "train.iters_per_epoch",
        "train.batch_size",
        "train.clip_len_s",
        "train.warmup_iters",
        "train.beta1",
        "train.beta2",
        "train.eps",
        "train.grad_clip",
        "train.threads",
        "train.resume",
        "data.manifest",
        "data.val_mixtures",
        "data.val_len_s",
        "data.snr_min",
        "data.snr_max",
        "corpus.out_dir",
        "corpus.clean_files",
        "corpus.noise_files",
        "corpus.clean_len_s",
        "corpus.noise_len_s",
        "eval.lengths_s",
        "eval.snrs_db",
        "eval.mixtures_per_cell",
        "eval.out",
        "eval.write_wavs",
    };
    return keys;
  }

  static Config from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    Config c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto e = line.find_last_not_of(" \t\r");
      line = line.substr(b, e - b + 1);
      c.set_pair(line, path + ":" + std::to_string(line_no));
    }
    return c;
  }

  void apply_override(const std::string &pair) { set_pair(pair, "override '" + pair + "'"); }

  bool has(const std::string &key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string &key, const std::string &def) const {
    check_known(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  std::int64_t get_int(const std::string &key, std::int64_t def) const {
    const auto s = get_str(key, "");
    if (s.empty()) return def;
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception &) {
      throw ConfigError("config: key '" + key + "' expects an integer, got '" + s + "'");
    }
  }

  double get_double(const std::string &key, double def) const {
    const auto s = get_str(key, "");
    if (s.empty()) return def;
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception &) {
      throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
    }
  }

  bool get_bool(const std::string &key, bool def) const {
    const auto s = get_str(key, "");
    if (s.empty()) return def;
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + s + "'");
  }

  std::vector<double> get_list(const std::string &key, const std::vector<double> &def) const {
    const auto s = get_str(key, "");
    if (s.empty()) return def;
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception &) {
        throw ConfigError("config: key '" + key + "' expects a comma list of numbers, got '" +
                          s + "'");
      }
    }
    if (out.empty())
      throw ConfigError("config: key '" + key + "' expects a non-empty list");
    return out;
  }

  // --- typed views -------------------------------------------------------

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed", 1)); }

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.n_layers = static_cast<int>(get_int("model.n_layers", 4));
    mc.n_heads = static_cast<int>(get_int("model.n_heads", 8));
    mc.d_model = static_cast<int>(get_int("model.d_model", 256));
    mc.d_ff = static_cast<int>(get_int("model.d_ff", 1024));
    mc.n_freq = kFrameLen / 2 + 1;
    mc.pe = parse_pe_kind(get_str("pe.scheme", "no_pos"));
    // 0 means auto: 4x the training length in frames, resolved by train_loop
    mc.pe_t_max = static_cast<Eigen::Index>(get_int("pe.t_max", 0));
    mc.ffn_act = parse_activation(get_str("model.ffn_act", "relu"));
    return mc;
  }

  train::TrainConfig train_config() const {
    train::TrainConfig tc;
    tc.epochs = static_cast<int>(get_int("train.epochs", 150));
    tc.iters_per_epoch = static_cast<int>(get_int("train.iters_per_epoch", 1000));
    tc.batch_size = static_cast<int>(get_int("train.batch_size", 10));
    tc.clip_len_s = get_double("train.clip_len_s", 1.0);
    tc.warmup_iters = get_int("train.warmup_iters", 40000);
    tc.adam.beta1 = get_double("train.beta1", 0.9);
    tc.adam.beta2 = get_double("train.beta2", 0.98);
    tc.adam.eps = get_double("train.eps", 1e-9);
    tc.grad_clip = get_double("train.grad_clip", 1.0);
    tc.threads = static_cast<int>(get_int("train.threads", 0));
    tc.resume = get_bool("train.resume", false);
    tc.seed = seed();
    tc.snr_lo = static_cast<int>(get_int("data.snr_min", -10));
    tc.snr_hi = static_cast<int>(get_int("data.snr_max", 20));
    tc.val_mixtures = static_cast<int>(get_int("data.val_mixtures", 20));
    tc.val_len_s = get_double("data.val_len_s", 0.0);
    tc.out_dir = get_str("out.dir", "");
    return tc;
  }

  mixer::CorpusSpec corpus_spec() const {
    mixer::CorpusSpec cs;
    cs.out_dir = get_str("corpus.out_dir", "");
    cs.clean_files = static_cast<int>(get_int("corpus.clean_files", 60));
    cs.noise_files = static_cast<int>(get_int("corpus.noise_files", 12));
    cs.clean_len_s = get_double("corpus.clean_len_s", 30.0);
    cs.noise_len_s = get_double("corpus.noise_len_s", 60.0);
    cs.seed = seed();
    return cs;
  }

  std::string manifest_path() const { return get_str("data.manifest", ""); }

  // All known keys with effective values, sorted; suitable for byte-for-byte
  // replay of a run.
  std::string resolved() const {
    std::ostringstream os;
    for (const auto &key : known_keys()) {
      const auto it = kv_.find(key);
      os << key << "=" << (it == kv_.end() ? default_of(key) : it->second) << "\n";
    }
    return os.str();
  }

 private:
  static void check_known(const std::string &key) {
    if (known_keys().count(key) == 0)
      throw ConfigError("config: unknown key '" + key + "'");
  }

  void set_pair(const std::string &pair, const std::string &where) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at " + where);
    std::string key = pair.substr(0, eq);
    std::string value = pair.substr(eq + 1);
    const auto kb = key.find_last_not_of(" \t");
    key = key.substr(0, kb + 1);
    const auto vb = value.find_first_not_of(" \t");
    value = (vb == std::string::npos) ? "" : value.substr(vb);
    check_known(key);
    kv_[key] = value;
  }

  static std::string default_of(const std::string &key) {
    static const std::map<std::string, std::string> defaults = {
        {"seed", "1"},
        {"out.dir", ""},
        {"pe.scheme", "no_pos"},
        {"pe.t_max", "0"},
        {"model.n_layers", "4"},
        {"model.n_heads", "8"},
        {"model.d_model", "256"},
        {"model.d_ff", "1024"},
        {"model.ffn_act", "relu"},
        {"train.epochs", "150"},
        {"train.iters_per_epoch", "1000"},
        {"train.batch_size", "10"},
        {"train.clip_len_s", "1"},
        {"train.warmup_iters", "40000"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.98"},
        {"train.eps", "1e-9"},
        {"train.grad_clip", "1"},
        {"train.threads", "0"},
        {"train.resume", "0"},
        {"data.manifest", ""},
        {"data.val_mixtures", "20"},
        {"data.val_len_s", "0"},
        {"data.snr_min", "-10"},
        {"data.snr_max", "20"},
        {"corpus.out_dir", ""},
        {"corpus.clean_files", "60"},
        {"corpus.noise_files", "12"},
        {"corpus.clean_len_s", "30"},
        {"corpus.noise_len_s", "60"},
        {"eval.lengths_s", "1,2,5,10,15,20"},
        {"eval.snrs_db", "-5,0,5,10,15"},
        {"eval.mixtures_per_cell", "40"},
        {"eval.out", "report.csv"},
        {"eval.write_wavs", "0"},
    };
    const auto it = defaults.find(key);
    return it == defaults.end() ? "" : it->second;
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace posse
