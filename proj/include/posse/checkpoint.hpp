// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "posse/errors.hpp"
#include "posse/model.hpp"

namespace posse {
namespace ckpt {

// Binary model checkpoint. Layout (all integers and doubles little-endian,
// documented in docs/formats.md):
//   magic "POSSECK1", u32 version,
//   u32 n_layers, n_heads, d_model, d_ff, n_freq, pe_kind, ffn_act,
//   u64 pe_t_max, u64 trained_len, f64 train_clip_seconds,
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major).
// Save/load round-trips are bit-identical: doubles are copied verbatim.

inline constexpr char kMagic[8] = {'P', 'O', 'S', 'S', 'E', 'C', 'K', '1'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put_bytes(std::ostream &os, const void *p, std::size_t n) {
  os.write(static_cast<const char *>(p), static_cast<std::streamsize>(n));
}

inline void put_u32(std::ostream &os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 4);
}

inline void put_u64(std::ostream &os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 8);
}

inline void put_f64(std::ostream &os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  put_u64(os, u);
}

inline void get_bytes(std::istream &is, void *p, std::size_t n, const std::string &what) {
  is.read(static_cast<char *>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw IoError("checkpoint: truncated file while reading " + what);
}

inline std::uint32_t get_u32(std::istream &is, const std::string &what) {
  unsigned char b[4];
  get_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream &is, const std::string &what) {
  unsigned char b[8];
  get_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream &is, const std::string &what) {
  const std::uint64_t u = get_u64(is, what);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

template <class Tensor>
void put_tensor(std::ostream &os, const std::string &name, const Tensor &t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  put_bytes(os, name.data(), name.size());
  put_u64(os, static_cast<std::uint64_t>(t.rows()));
  put_u64(os, static_cast<std::uint64_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) put_f64(os, t(r, c));
}

template <class Tensor>
void get_tensor(std::istream &is, const std::string &expect_name, Tensor &t) {
  const std::uint32_t name_len = get_u32(is, "tensor name length");
  std::string name(name_len, '\0');
  get_bytes(is, name.data(), name_len, "tensor name");
  if (name != expect_name)
    throw IoError("checkpoint: tensor order mismatch, expected '" + expect_name + "' got '" +
                  name + "'");
  const auto rows = static_cast<Eigen::Index>(get_u64(is, name + " rows"));
  const auto cols = static_cast<Eigen::Index>(get_u64(is, name + " cols"));
  if (rows != t.rows() || cols != t.cols())
    throw IoError("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", expected " + std::to_string(t.rows()) + "x" +
                  std::to_string(t.cols()));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = get_f64(is, name + " data");
}

}  // namespace detail

inline void save(const std::string &path, const ModelParams &p, double train_clip_seconds = 0.0) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot write " + path);
  detail::put_bytes(os, kMagic, 8);
  detail::put_u32(os, kVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.n_layers));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.n_heads));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.d_model));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.d_ff));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.n_freq));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.pe));
  detail::put_u32(os, static_cast<std::uint32_t>(p.config.ffn_act));
  detail::put_u64(os, static_cast<std::uint64_t>(p.config.pe_t_max));
  detail::put_u64(os, static_cast<std::uint64_t>(p.pe.trained_len));
  detail::put_f64(os, train_clip_seconds);

  std::uint32_t count = 0;
  for_each_tensor(p, [&](const std::string &, const auto &) { ++count; });
  detail::put_u32(os, count);
  for_each_tensor(p, [&](const std::string &name, const auto &t) {
    detail::put_tensor(os, name, t);
  });
  if (!os) throw IoError("checkpoint: short write to " + path);
}

struct Loaded {
  ModelParams params;
  double train_clip_seconds = 0.0;
};

inline Loaded load(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  detail::get_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: " + path + " is not a posse checkpoint");
  const std::uint32_t version = detail::get_u32(is, "version");
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));

  ModelConfig cfg;
  cfg.n_layers = static_cast<int>(detail::get_u32(is, "n_layers"));
  cfg.n_heads = static_cast<int>(detail::get_u32(is, "n_heads"));
  cfg.d_model = static_cast<int>(detail::get_u32(is, "d_model"));
  cfg.d_ff = static_cast<int>(detail::get_u32(is, "d_ff"));
  cfg.n_freq = static_cast<int>(detail::get_u32(is, "n_freq"));
  const std::uint32_t pe_kind = detail::get_u32(is, "pe_kind");
  if (pe_kind > 4) throw IoError("checkpoint: bad pe kind " + std::to_string(pe_kind));
  cfg.pe = static_cast<PeKind>(pe_kind);
  const std::uint32_t act = detail::get_u32(is, "ffn_act");
  if (act > 1) throw IoError("checkpoint: bad activation " + std::to_string(act));
  cfg.ffn_act = static_cast<Activation>(act);
  cfg.pe_t_max = static_cast<Eigen::Index>(detail::get_u64(is, "pe_t_max"));
  const auto trained_len = static_cast<Eigen::Index>(detail::get_u64(is, "trained_len"));
  const double clip_s = detail::get_f64(is, "train_clip_seconds");
  cfg.validate();

  Loaded out;
  out.params = model::init_params(cfg, 0);  // shapes only; every value overwritten below
  out.params.pe.trained_len = trained_len;
  out.train_clip_seconds = clip_s;

  std::uint32_t expect = 0;
  for_each_tensor(out.params, [&](const std::string &, const auto &) { ++expect; });
  const std::uint32_t count = detail::get_u32(is, "tensor count");
  if (count != expect)
    throw IoError("checkpoint: tensor count " + std::to_string(count) + ", expected " +
                  std::to_string(expect));
  for_each_tensor(out.params, [&](const std::string &name, auto &t) {
    detail::get_tensor(is, name, t);
  });
  return out;
}

}  // namespace ckpt
}  // namespace posse
