// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "posse/checkpoint.hpp"
#include "posse/config.hpp"

using namespace posse;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("posse_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig tiny(PeKind pe) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.n_freq = 9;
  c.pe = pe;
  c.pe_t_max = 12;
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-identical for every scheme") {
  const auto dir = tmp_dir("ckpt");
  for (const PeKind pe : {PeKind::no_pos, PeKind::sinusoidal, PeKind::learned_ape,
                          PeKind::t5_rpe, PeKind::kerple}) {
    ModelParams p = model::init_params(tiny(pe), 97);
    p.pe.trained_len = 42;
    const std::string path = (dir / (std::string("m_") + to_string(pe) + ".ckpt")).string();
    ckpt::save(path, p, 1.5);
    const ckpt::Loaded loaded = ckpt::load(path);
    CHECK(loaded.params.config == p.config);
    CHECK(loaded.train_clip_seconds == 1.5);
    CHECK(loaded.params.pe.trained_len == 42);

    const auto a = train::tensor_views(static_cast<const ModelParams &>(p));
    const auto b = train::tensor_views(static_cast<const ModelParams &>(loaded.params));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].name == b[i].name);
      REQUIRE(a[i].size == b[i].size);
      for (Eigen::Index j = 0; j < a[i].size; ++j)
        REQUIRE(std::memcmp(&a[i].data[j], &b[i].data[j], 8) == 0);
    }
  }
}

TEST_CASE("checkpoint save/load is byte-stable on disk") {
  const auto dir = tmp_dir("ckpt_bytes");
  const ModelParams p = model::init_params(tiny(PeKind::kerple), 3);
  ckpt::save((dir / "a.ckpt").string(), p);
  ckpt::save((dir / "b.ckpt").string(), p);
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK(!ba.empty());
}

TEST_CASE("checkpoint rejects foreign and truncated files") {
  const auto dir = tmp_dir("ckpt_bad");
  {
    std::ofstream os(dir / "junk.ckpt", std::ios::binary);
    os << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(ckpt::load((dir / "junk.ckpt").string()), IoError);

  const ModelParams p = model::init_params(tiny(PeKind::no_pos), 3);
  ckpt::save((dir / "ok.ckpt").string(), p);
  {
    std::ifstream in(dir / "ok.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream os(dir / "cut.ckpt", std::ios::binary);
    os << bytes;
  }
  CHECK_THROWS_AS(ckpt::load((dir / "cut.ckpt").string()), IoError);
  CHECK_THROWS_AS(ckpt::load((dir / "missing.ckpt").string()), IoError);
}

TEST_CASE("config: file parsing, overrides, typed getters") {
  const auto dir = tmp_dir("config");
  {
    std::ofstream os(dir / "run.cfg");
    os << "# a comment\n"
       << "seed=9\n"
       << "pe.scheme=kerple\n"
       << "model.d_model = 32\n"
       << "train.clip_len_s=0.5\n"
       << "eval.lengths_s=1,2,4\n";
  }
  Config c = Config::from_file((dir / "run.cfg").string());
  CHECK(c.seed() == 9);
  CHECK(c.model_config().pe == PeKind::kerple);
  CHECK(c.model_config().d_model == 32);
  CHECK(c.train_config().clip_len_s == 0.5);
  CHECK(c.get_list("eval.lengths_s", {}) == std::vector<double>{1, 2, 4});

  c.apply_override("model.d_model=64");
  CHECK(c.model_config().d_model == 64);

  // defaults fill everything else
  CHECK(c.model_config().n_layers == 4);
  CHECK(c.train_config().adam.beta2 == 0.98);
}

TEST_CASE("config rejects unknown keys and malformed values") {
  const auto dir = tmp_dir("config_bad");
  {
    std::ofstream os(dir / "bad.cfg");
    os << "model.dmodel=32\n";
  }
  CHECK_THROWS_AS(Config::from_file((dir / "bad.cfg").string()), ConfigError);

  Config c;
  CHECK_THROWS_AS(c.apply_override("nonsense=1"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("no_equals_sign"), ConfigError);
  c.apply_override("model.d_model=abc");
  CHECK_THROWS_AS(c.model_config(), ConfigError);
  c.apply_override("model.d_model=32");
  c.apply_override("pe.scheme=rope");
  CHECK_THROWS_AS(c.model_config(), ConfigError);
}

TEST_CASE("resolved config echoes every known key exactly once") {
  Config c;
  c.apply_override("seed=123");
  const std::string text = c.resolved();
  std::size_t lines = 0;
  for (const char ch : text) lines += (ch == '\n');
  CHECK(lines == Config::known_keys().size());
  CHECK(text.find("seed=123\n") != std::string::npos);
  CHECK(text.find("train.warmup_iters=40000\n") != std::string::npos);
}
