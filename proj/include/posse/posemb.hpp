// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "posse/errors.hpp"
#include "posse/rng.hpp"

namespace posse {

// The five position-embedding schemes under study. no_pos is the control:
// the bare Transformer receives no position information at all.
enum class PeKind { no_pos, sinusoidal, learned_ape, t5_rpe, kerple };

inline const char *to_string(PeKind k) {
  switch (k) {
    case PeKind::no_pos: return "no_pos";
    case PeKind::sinusoidal: return "sinusoidal";
    case PeKind::learned_ape: return "learned_ape";
    case PeKind::t5_rpe: return "t5_rpe";
    case PeKind::kerple: return "kerple";
  }
  return "?";
}

inline PeKind parse_pe_kind(const std::string &s) {
  if (s == "no_pos") return PeKind::no_pos;
  if (s == "sinusoidal") return PeKind::sinusoidal;
  if (s == "learned_ape") return PeKind::learned_ape;
  if (s == "t5_rpe") return PeKind::t5_rpe;
  if (s == "kerple") return PeKind::kerple;
  throw ConfigError("unknown pe scheme '" + s +
                    "' (expected no_pos|sinusoidal|learned_ape|t5_rpe|kerple)");
}

inline bool is_rpe(PeKind k) { return k == PeKind::t5_rpe || k == PeKind::kerple; }
inline bool is_ape(PeKind k) { return k == PeKind::sinusoidal || k == PeKind::learned_ape; }

namespace posemb {

inline constexpr int kT5Buckets = 32;
inline constexpr int kT5Exact = 8;        // |offset| below this gets its own bucket
inline constexpr int kT5MaxDistance = 128;

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Fixed sinusoidal table. Positions t and channels d are 1-based in the
// defining formula; storage is 0-based via (t-1, d-1). Even d uses
// sin(10000^(-d/d_model) * t), odd d uses cos(10000^(-(d-1)/d_model) * t).
inline Eigen::MatrixXd sinusoidal_table(Eigen::Index t_len, int d_model) {
  if (t_len < 1) throw UserError("sinusoidal_table: T must be >= 1");
  if (d_model < 2 || d_model % 2 != 0)
    throw ConfigError("sinusoidal_table: d_model must be even and >= 2");
  Eigen::MatrixXd table(t_len, d_model);
  for (Eigen::Index t0 = 0; t0 < t_len; ++t0) {
    const double t = static_cast<double>(t0 + 1);
    for (int d0 = 0; d0 < d_model; ++d0) {
      const int d = d0 + 1;
      if (d % 2 == 0) {
        table(t0, d0) = std::sin(std::pow(10000.0, -static_cast<double>(d) / d_model) * t);
      } else {
        table(t0, d0) = std::cos(std::pow(10000.0, -static_cast<double>(d - 1) / d_model) * t);
      }
    }
  }
  return table;
}

// Learnable absolute table, one row per position up to t_max. Entries are
// drawn N(0, 0.02); rows never touched by training keep their init values,
// which is exactly what inference beyond the trained length sees.
inline Eigen::MatrixXd learned_ape_init(Eigen::Index t_max, int d_model, std::uint64_t seed) {
  if (t_max < 1) throw ConfigError("learned_ape_init: t_max must be >= 1");
  Eigen::MatrixXd table(t_max, d_model);
  Rng rng(seed);
  for (Eigen::Index r = 0; r < t_max; ++r)
    for (int c = 0; c < d_model; ++c) table(r, c) = rng.normal(0.0, 0.02);
  return table;
}

// Bucket index for a signed relative offset i-j. Exact buckets for small
// offsets, logarithmic beyond, split by sign: 0..15 for i-j >= 0, 16..31 for
// i-j < 0. Natural log; the base cancels in the ratio anyway.
inline int t5_bucket(std::int64_t rel) {
  const auto log_bucket = [](std::int64_t dist) {
    const double frac = std::log(static_cast<double>(dist) / kT5Exact) /
                        std::log(static_cast<double>(kT5MaxDistance) / kT5Exact);
    const int b = kT5Exact + static_cast<int>(std::floor(frac * kT5Exact));
    return std::min(2 * kT5Exact - 1, b);
  };
  if (rel >= 0) {
    if (rel < kT5Exact) return static_cast<int>(rel);
    return log_bucket(rel);
  }
  const std::int64_t dist = -rel;
  if (dist < kT5Exact) return static_cast<int>(dist) + 2 * kT5Exact;
  return log_bucket(dist) + 2 * kT5Exact;
}

// KERPLE logarithmic-variant bias for one offset: -r1 * log(1 + r2*|i-j|).
// Non-causal (symmetric in the offset); zero on the diagonal; r1, r2 > 0.
inline double kerple_bias(std::int64_t rel, double r1, double r2) {
  return -r1 * std::log1p(r2 * static_cast<double>(std::llabs(rel)));
}

namespace detail {

// Both RPE schemes depend on i-j only, so a bias matrix is fully described by
// its value per offset. Building from an offset table makes the Toeplitz and
// length-crop properties hold exactly by construction.
template <class OffsetFn>
Eigen::MatrixXd toeplitz_from_offsets(Eigen::Index t_len, OffsetFn &&value_at) {
  std::vector<double> off(static_cast<std::size_t>(2 * t_len - 1));
  for (Eigen::Index r = -(t_len - 1); r <= t_len - 1; ++r)
    off[static_cast<std::size_t>(r + t_len - 1)] = value_at(r);
  Eigen::MatrixXd b(t_len, t_len);
  for (Eigen::Index i = 0; i < t_len; ++i)
    for (Eigen::Index j = 0; j < t_len; ++j)
      b(i, j) = off[static_cast<std::size_t>(i - j + t_len - 1)];
  return b;
}

}  // namespace detail

// bias[i][j] = buckets[t5_bucket(i-j)] for one head; `buckets` holds the 32
// learnable scalars of that head.
inline Eigen::MatrixXd t5_bias_matrix(Eigen::Index t_len,
                                      const Eigen::Ref<const Eigen::RowVectorXd> &buckets) {
  if (buckets.size() != kT5Buckets)
    throw UserError("t5_bias_matrix: expected exactly " + std::to_string(kT5Buckets) +
                    " bucket parameters, got " + std::to_string(buckets.size()));
  return detail::toeplitz_from_offsets(
      t_len, [&](Eigen::Index rel) { return buckets[t5_bucket(rel)]; });
}

inline Eigen::MatrixXd kerple_bias_matrix(Eigen::Index t_len, double r1, double r2) {
  if (!(r1 > 0.0) || !(r2 > 0.0))
    throw UserError("kerple_bias_matrix: r1 and r2 must be positive");
  return detail::toeplitz_from_offsets(
      t_len, [&](Eigen::Index rel) { return kerple_bias(rel, r1, r2); });
}

}  // namespace posemb

// Parameters of one position-embedding scheme, in the shape the model
// consumes uniformly. Only the tensors of the active kind are allocated.
// KERPLE stores unconstrained rho and applies softplus, so r1, r2 stay
// positive under any gradient update.
struct PeParams {
  PeKind kind = PeKind::no_pos;
  int n_heads = 0;
  int d_model = 0;
  Eigen::Index t_max = 0;       // learned-APE table rows
  Eigen::Index trained_len = 0; // longest sequence seen by training so far

  Eigen::MatrixXd ape_table;    // t_max x d_model      (learned_ape)
  Eigen::MatrixXd t5_buckets;   // n_heads x 32         (t5_rpe)
  Eigen::VectorXd kerple_rho1;  // n_heads              (kerple)
  Eigen::VectorXd kerple_rho2;  // n_heads              (kerple)

  double kerple_r1(int head) const { return posemb::softplus(kerple_rho1[head]); }
  double kerple_r2(int head) const { return posemb::softplus(kerple_rho2[head]); }
};

namespace posemb {

// Factory over the five schemes. T5 buckets start at zero (identical to
// no_pos at step 0); KERPLE starts at r1 = r2 = 1 through the softplus
// reparameterization; the learned table is seeded here.
inline PeParams build_scheme(PeKind kind, int n_heads, int d_model, Eigen::Index t_max,
                             std::uint64_t seed) {
  PeParams p;
  p.kind = kind;
  p.n_heads = n_heads;
  p.d_model = d_model;
  switch (kind) {
    case PeKind::no_pos:
    case PeKind::sinusoidal:
      break;
    case PeKind::learned_ape:
      p.t_max = t_max;
      p.ape_table = learned_ape_init(t_max, d_model, seed);
      break;
    case PeKind::t5_rpe:
      p.t5_buckets = Eigen::MatrixXd::Zero(n_heads, kT5Buckets);
      break;
    case PeKind::kerple:
      p.kerple_rho1 = Eigen::VectorXd::Constant(n_heads, softplus_inv(1.0));
      p.kerple_rho2 = Eigen::VectorXd::Constant(n_heads, softplus_inv(1.0));
      break;
  }
  return p;
}

// Per-head additive attention bias for a length-T forward. Empty for APE and
// no_pos runs. Shared across layers.
inline std::vector<Eigen::MatrixXd> build_bias(const PeParams &pe, Eigen::Index t_len) {
  std::vector<Eigen::MatrixXd> bias;
  if (pe.kind == PeKind::t5_rpe) {
    bias.reserve(static_cast<std::size_t>(pe.n_heads));
    for (int h = 0; h < pe.n_heads; ++h) bias.push_back(t5_bias_matrix(t_len, pe.t5_buckets.row(h)));
  } else if (pe.kind == PeKind::kerple) {
    bias.reserve(static_cast<std::size_t>(pe.n_heads));
    for (int h = 0; h < pe.n_heads; ++h)
      bias.push_back(kerple_bias_matrix(t_len, pe.kerple_r1(h), pe.kerple_r2(h)));
  }
  return bias;
}

// Absolute table rows 0..T-1 to add to the input embedding, or an empty
// matrix when the scheme adds nothing there. Learned-APE lookups past t_max
// fail loudly rather than alias.
inline Eigen::MatrixXd ape_rows(const PeParams &pe, Eigen::Index t_len) {
  if (pe.kind == PeKind::sinusoidal) return sinusoidal_table(t_len, pe.d_model);
  if (pe.kind == PeKind::learned_ape) {
    if (t_len > pe.t_max)
      throw UserError("learned_ape: sequence length " + std::to_string(t_len) +
                      " exceeds table size t_max=" + std::to_string(pe.t_max));
    return pe.ape_table.topRows(t_len);
  }
  return Eigen::MatrixXd();
}

}  // namespace posemb
}  // namespace posse
