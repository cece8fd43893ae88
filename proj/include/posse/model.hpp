// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "posse/errors.hpp"
#include "posse/posemb.hpp"
#include "posse/rng.hpp"

namespace posse {

enum class Activation { relu, gelu };

inline const char *to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

inline Activation parse_activation(const std::string &s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu|gelu)");
}

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 8;
  int d_model = 256;
  int d_ff = 1024;
  int n_freq = 257;  // K, STFT bins
  PeKind pe = PeKind::no_pos;
  Eigen::Index pe_t_max = 252;  // learned-APE table rows
  Activation ffn_act = Activation::relu;

  int d_k() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || n_freq < 1)
      throw ConfigError("model config: all dimensions must be >= 1");
    if (d_model % n_heads != 0)
      throw ConfigError("model config: d_model (" + std::to_string(d_model) +
                        ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    if (pe == PeKind::learned_ape && pe_t_max < 1)
      throw ConfigError("model config: pe_t_max must be >= 1 for learned_ape");
  }

  bool operator==(const ModelConfig &) const = default;
};

inline constexpr double kLnEps = 1e-5;

struct LayerParams {
  Eigen::MatrixXd wq, wk, wv, wo;       // d_model x d_model, heads fused
  Eigen::VectorXd ln1_gain, ln1_bias;   // d_model
  Eigen::MatrixXd ffn_w1;               // d_model x d_ff
  Eigen::VectorXd ffn_b1;               // d_ff
  Eigen::MatrixXd ffn_w2;               // d_ff x d_model
  Eigen::VectorXd ffn_b2;               // d_model
  Eigen::VectorXd ln2_gain, ln2_bias;   // d_model
};

// All learnable tensors, PE parameters included. Gradients use the same
// struct (shape parity by construction); see zeros_like().
struct ModelParams {
  ModelConfig config;
  Eigen::VectorXd in_ln_gain, in_ln_bias;  // K
  Eigen::MatrixXd in_w;                    // K x d_model
  Eigen::VectorXd in_b;                    // d_model
  std::vector<LayerParams> layers;
  Eigen::MatrixXd out_w;                   // d_model x K
  Eigen::VectorXd out_b;                   // K
  PeParams pe;
};

using GradStore = ModelParams;

// Visits every learnable tensor in a fixed canonical order under a stable
// name. The checkpoint layout, Adam state and the gradient checker all key
// off this order. PE tensors come last so that models differing only in
// pe scheme draw identical shared weights from the same seed.
template <class Params, class Fn>
void for_each_tensor(Params &p, Fn &&fn) {
  fn("input.ln.gain", p.in_ln_gain);
  fn("input.ln.bias", p.in_ln_bias);
  fn("input.fc.w", p.in_w);
  fn("input.fc.b", p.in_b);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto &l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    fn(pre + "attn.wq", l.wq);
    fn(pre + "attn.wk", l.wk);
    fn(pre + "attn.wv", l.wv);
    fn(pre + "attn.wo", l.wo);
    fn(pre + "ln1.gain", l.ln1_gain);
    fn(pre + "ln1.bias", l.ln1_bias);
    fn(pre + "ffn.w1", l.ffn_w1);
    fn(pre + "ffn.b1", l.ffn_b1);
    fn(pre + "ffn.w2", l.ffn_w2);
    fn(pre + "ffn.b2", l.ffn_b2);
    fn(pre + "ln2.gain", l.ln2_gain);
    fn(pre + "ln2.bias", l.ln2_bias);
  }
  fn("output.fc.w", p.out_w);
  fn("output.fc.b", p.out_b);
  switch (p.pe.kind) {
    case PeKind::learned_ape: fn("pe.learned.table", p.pe.ape_table); break;
    case PeKind::t5_rpe: fn("pe.t5.buckets", p.pe.t5_buckets); break;
    case PeKind::kerple:
      fn("pe.kerple.rho1", p.pe.kerple_rho1);
      fn("pe.kerple.rho2", p.pe.kerple_rho2);
      break;
    default: break;
  }
}

inline std::size_t parameter_count(const ModelParams &p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string &, const auto &t) {
    n += static_cast<std::size_t>(t.size());
  });
  return n;
}

inline GradStore zeros_like(const ModelParams &p) {
  GradStore g = p;
  for_each_tensor(g, [](const std::string &, auto &t) { t.setZero(); });
  return g;
}

namespace model {

namespace detail {

inline double sigmoid(double x) { return posemb::logistic(x); }

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }

inline double gelu_grad(double x) {
  const double kInvSqrt2Pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline Eigen::MatrixXd activate(const Eigen::MatrixXd &pre, Activation act) {
  if (act == Activation::relu) return pre.cwiseMax(0.0);
  return pre.unaryExpr([](double v) { return gelu(v); });
}

inline Eigen::MatrixXd activate_grad(const Eigen::MatrixXd &pre, Activation act) {
  if (act == Activation::relu)
    return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return pre.unaryExpr([](double v) { return gelu_grad(v); });
}

// Row-wise layer norm over the feature dimension. Population variance with
// kLnEps inside the square root; a zero-variance row normalizes to zero.
inline Eigen::MatrixXd ln_forward(const Eigen::MatrixXd &x, const Eigen::VectorXd &gain,
                                  const Eigen::VectorXd &bias, Eigen::MatrixXd *xhat,
                                  Eigen::VectorXd *istd) {
  const Eigen::Index rows = x.rows(), n = x.cols();
  xhat->resize(rows, n);
  istd->resize(rows);
  Eigen::MatrixXd y(rows, n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kLnEps);
    (*istd)[r] = is;
    xhat->row(r) = ((x.row(r).array() - mu) * is).matrix();
    y.row(r) =
        (xhat->row(r).array() * gain.transpose().array() + bias.transpose().array()).matrix();
  }
  return y;
}

inline Eigen::MatrixXd ln_backward(const Eigen::MatrixXd &dy, const Eigen::MatrixXd &xhat,
                                   const Eigen::VectorXd &istd, const Eigen::VectorXd &gain,
                                   Eigen::VectorXd *dgain, Eigen::VectorXd *dbias) {
  const Eigen::Index rows = dy.rows(), n = dy.cols();
  *dgain = dy.cwiseProduct(xhat).colwise().sum().transpose();
  *dbias = dy.colwise().sum().transpose();
  Eigen::MatrixXd dx(rows, n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::ArrayXd dyh = dy.row(r).transpose().array() * gain.array();
    const Eigen::ArrayXd xh = xhat.row(r).transpose().array();
    const double m1 = dyh.mean();
    const double m2 = (dyh * xh).mean();
    dx.row(r) = (istd[r] * (dyh - m1 - xh * m2)).matrix().transpose();
  }
  return dx;
}

// Softmax over one attention row plus the weighted sum of value rows.
// Both reductions run in ascending order of the attention weight, so the
// result is independent of how the frames were ordered (up to exact ties).
// This is what makes the no-PE model permutation-equivariant bit-for-bit.
using StridedRowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// a (T x m) times b (m x n), computed row by row. Each output row is then a
// pure function of its own input row and b: blocked GEMM kernels round
// differently depending on a row's position inside the panel, which would
// break the exact permutation-equivariance of the no-PE model.
inline Eigen::MatrixXd row_product(const Eigen::Ref<const Eigen::MatrixXd> &a,
                                   const Eigen::Ref<const Eigen::MatrixXd> &b) {
  Eigen::MatrixXd c(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) c.row(i).noalias() = a.row(i) * b;
  return c;
}

inline void softmax_row_and_mix(const Eigen::RowVectorXd &scores,
                                const Eigen::Ref<const Eigen::MatrixXd> &values,
                                StridedRowRef attn_out, StridedRowRef mix_out,
                                std::vector<Eigen::Index> &order) {
  const Eigen::Index t = scores.size();
  const double m = scores.maxCoeff();
  // scalar std::exp per element: Eigen's packet exp rounds differently from
  // the scalar tail, which would make the result depend on element position
  Eigen::RowVectorXd e(t);
  for (Eigen::Index j = 0; j < t; ++j) e[j] = std::exp(scores[j] - m);
  order.resize(static_cast<std::size_t>(t));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return e[a] < e[b]; });
  double denom = 0.0;
  for (const Eigen::Index j : order) denom += e[j];
  attn_out = e / denom;
  mix_out.setZero();
  for (const Eigen::Index j : order) mix_out += attn_out[j] * values.row(j);
}

}  // namespace detail

struct LayerTape {
  Eigen::MatrixXd u_in;                // T x d, sub-layer input
  Eigen::MatrixXd q, k, v;             // T x d, fused head projections
  std::vector<Eigen::MatrixXd> attn;   // per head, T x T softmax outputs
  Eigen::MatrixXd concat;              // T x d, heads concatenated
  Eigen::MatrixXd xhat1;               // LN1 cache
  Eigen::VectorXd istd1;
  Eigen::MatrixXd u1;                  // post-LN1 hidden
  Eigen::MatrixXd ffn_pre;             // T x d_ff, pre-activation
  Eigen::MatrixXd ffn_act;             // T x d_ff, activated
  Eigen::MatrixXd xhat2;               // LN2 cache
  Eigen::VectorXd istd2;
};

struct ActivationTape {
  ModelConfig config;
  Eigen::Index t_len = 0;
  Eigen::MatrixXd in_xhat;   // input LN cache (over K)
  Eigen::VectorXd in_istd;
  Eigen::MatrixXd h0;        // input LN output
  Eigen::MatrixXd embed_pre; // input FC pre-activation
  std::vector<LayerTape> layers;
  Eigen::MatrixXd u_final;   // last layer output
  Eigen::MatrixXd mask;      // sigmoid head output
};

struct ForwardResult {
  Eigen::MatrixXd mask;  // T x K, entries in (0, 1)
  ActivationTape tape;
};

namespace detail {

inline Eigen::MatrixXd mhsa_forward(const Eigen::MatrixXd &u,
                                    const std::vector<Eigen::MatrixXd> &bias,
                                    const LayerParams &lp, const ModelConfig &cfg,
                                    LayerTape *tape) {
  const Eigen::Index t = u.rows();
  const int dk = cfg.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  tape->u_in = u;
  tape->q = row_product(u, lp.wq);
  tape->k = row_product(u, lp.wk);
  tape->v = row_product(u, lp.wv);
  tape->attn.assign(static_cast<std::size_t>(cfg.n_heads), Eigen::MatrixXd());
  tape->concat.resize(t, cfg.d_model);

  std::vector<Eigen::Index> order;
  for (int h = 0; h < cfg.n_heads; ++h) {
    const auto qh = tape->q.middleCols(h * dk, dk);
    const auto kh = tape->k.middleCols(h * dk, dk);
    const auto vh = tape->v.middleCols(h * dk, dk);
    const Eigen::MatrixXd kh_t = kh.transpose();
    Eigen::MatrixXd scores = row_product(qh, kh_t) * inv_sqrt_dk;
    if (!bias.empty()) scores += bias[static_cast<std::size_t>(h)];
    Eigen::MatrixXd &a = tape->attn[static_cast<std::size_t>(h)];
    a.resize(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      detail::softmax_row_and_mix(scores.row(i), vh, a.row(i),
                                  tape->concat.row(i).segment(h * dk, dk), order);
    }
  }
  return row_product(tape->concat, lp.wo);
}

inline Eigen::MatrixXd layer_forward(const Eigen::MatrixXd &u,
                                     const std::vector<Eigen::MatrixXd> &bias,
                                     const LayerParams &lp, const ModelConfig &cfg,
                                     LayerTape *tape) {
  // post-LN: residual add around each sub-layer, then layer norm
  const Eigen::MatrixXd attn_out = mhsa_forward(u, bias, lp, cfg, tape);
  tape->u1 = detail::ln_forward(u + attn_out, lp.ln1_gain, lp.ln1_bias, &tape->xhat1,
                                &tape->istd1);
  tape->ffn_pre = row_product(tape->u1, lp.ffn_w1);
  tape->ffn_pre.rowwise() += lp.ffn_b1.transpose();
  tape->ffn_act = detail::activate(tape->ffn_pre, cfg.ffn_act);
  Eigen::MatrixXd f2 = row_product(tape->ffn_act, lp.ffn_w2);
  f2.rowwise() += lp.ffn_b2.transpose();
  return detail::ln_forward(tape->u1 + f2, lp.ln2_gain, lp.ln2_bias, &tape->xhat2,
                            &tape->istd2);
}

}  // namespace detail

// Z = ReLU(FC(LN_framewise(|Y|))): each frame is normalized over its K bins,
// projected to d_model, then rectified.
inline Eigen::MatrixXd input_embedding(const Eigen::MatrixXd &mag, const ModelParams &p,
                                       ActivationTape *tape) {
  if (mag.cols() != p.config.n_freq)
    throw ShapeError("input_embedding: expected " + std::to_string(p.config.n_freq) +
                     " frequency bins, got " + std::to_string(mag.cols()));
  if (mag.rows() < 1) throw UserError("input_embedding: need at least one frame");
  if (!mag.allFinite()) throw UserError("input_embedding: non-finite input");
  tape->h0 = detail::ln_forward(mag, p.in_ln_gain, p.in_ln_bias, &tape->in_xhat,
                                &tape->in_istd);
  tape->embed_pre = detail::row_product(tape->h0, p.in_w);
  tape->embed_pre.rowwise() += p.in_b.transpose();
  return tape->embed_pre.cwiseMax(0.0);
}

inline Eigen::MatrixXd input_embedding(const Eigen::MatrixXd &mag, const ModelParams &p) {
  ActivationTape scratch;
  return input_embedding(mag, p, &scratch);
}

// APE schemes add their table rows here; no_pos and the RPE schemes pass
// the embedding through untouched.
inline Eigen::MatrixXd add_ape(const Eigen::MatrixXd &z, const PeParams &pe) {
  if (!is_ape(pe.kind)) return z;
  const Eigen::MatrixXd rows = posemb::ape_rows(pe, z.rows());
  return z + rows;
}

inline Eigen::MatrixXd mhsa(const Eigen::MatrixXd &u, const std::vector<Eigen::MatrixXd> &bias,
                            const ModelParams &p, int layer) {
  LayerTape scratch;
  return detail::mhsa_forward(u, bias, p.layers[static_cast<std::size_t>(layer)], p.config,
                              &scratch);
}

inline Eigen::MatrixXd ffn(const Eigen::MatrixXd &u, const ModelParams &p, int layer) {
  const auto &lp = p.layers[static_cast<std::size_t>(layer)];
  Eigen::MatrixXd pre = detail::row_product(u, lp.ffn_w1);
  pre.rowwise() += lp.ffn_b1.transpose();
  Eigen::MatrixXd out = detail::row_product(detail::activate(pre, p.config.ffn_act), lp.ffn_w2);
  out.rowwise() += lp.ffn_b2.transpose();
  return out;
}

inline Eigen::MatrixXd transformer_layer(const Eigen::MatrixXd &u,
                                         const std::vector<Eigen::MatrixXd> &bias,
                                         const ModelParams &p, int layer) {
  LayerTape scratch;
  return detail::layer_forward(u, bias, p.layers[static_cast<std::size_t>(layer)], p.config,
                               &scratch);
}

inline Eigen::MatrixXd output_head(const Eigen::MatrixXd &u, const ModelParams &p) {
  Eigen::MatrixXd logits = detail::row_product(u, p.out_w);
  logits.rowwise() += p.out_b.transpose();
  return logits.unaryExpr([](double v) { return detail::sigmoid(v); });
}

// Full pipeline with the attention bias supplied by the caller; used by the
// bias-consistency tests. Normal callers use forward() below.
inline ForwardResult forward_with_bias(const Eigen::MatrixXd &mag, const ModelParams &p,
                                       const std::vector<Eigen::MatrixXd> &bias) {
  p.config.validate();
  ForwardResult r;
  ActivationTape &tape = r.tape;
  tape.config = p.config;
  tape.t_len = mag.rows();
  const Eigen::MatrixXd z = input_embedding(mag, p, &tape);
  Eigen::MatrixXd u = add_ape(z, p.pe);
  tape.layers.resize(static_cast<std::size_t>(p.config.n_layers));
  for (int l = 0; l < p.config.n_layers; ++l)
    u = detail::layer_forward(u, bias, p.layers[static_cast<std::size_t>(l)], p.config,
                              &tape.layers[static_cast<std::size_t>(l)]);
  tape.u_final = u;
  r.mask = output_head(u, p);
  tape.mask = r.mask;
  return r;
}

inline ForwardResult forward(const Eigen::MatrixXd &mag, const ModelParams &p) {
  return forward_with_bias(mag, p, posemb::build_bias(p.pe, mag.rows()));
}

// Exact reverse-mode gradients for every learnable tensor, PE parameters
// included. `dmask` is dL/dM over the sigmoid output.
inline GradStore backward(const ActivationTape &tape, const Eigen::MatrixXd &dmask,
                          const ModelParams &p) {
  if (tape.config != p.config)
    throw UserError("backward: tape was produced by a different model config");
  if (dmask.rows() != tape.mask.rows() || dmask.cols() != tape.mask.cols())
    throw ShapeError("backward: upstream gradient shape does not match mask");

  const ModelConfig &cfg = p.config;
  const Eigen::Index t = tape.t_len;
  const int dk = cfg.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  GradStore g = zeros_like(p);

  // sigmoid head
  const Eigen::MatrixXd dlogits =
      (dmask.array() * tape.mask.array() * (1.0 - tape.mask.array())).matrix();
  g.out_w = tape.u_final.transpose() * dlogits;
  g.out_b = dlogits.colwise().sum().transpose();
  Eigen::MatrixXd du = dlogits * p.out_w.transpose();

  std::vector<Eigen::MatrixXd> dbias;
  if (is_rpe(p.pe.kind))
    dbias.assign(static_cast<std::size_t>(cfg.n_heads), Eigen::MatrixXd::Zero(t, t));

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto &lt = tape.layers[static_cast<std::size_t>(l)];
    const auto &lp = p.layers[static_cast<std::size_t>(l)];
    auto &lg = g.layers[static_cast<std::size_t>(l)];

    // LN2
    Eigen::VectorXd dgain, dbias_v;
    const Eigen::MatrixXd dr2 =
        detail::ln_backward(du, lt.xhat2, lt.istd2, lp.ln2_gain, &dgain, &dbias_v);
    lg.ln2_gain += dgain;
    lg.ln2_bias += dbias_v;

    // FFN branch (residual: dr2 flows to both u1 and the FFN path)
    const Eigen::MatrixXd dact = dr2 * lp.ffn_w2.transpose();
    lg.ffn_w2 += lt.ffn_act.transpose() * dr2;
    lg.ffn_b2 += dr2.colwise().sum().transpose();
    const Eigen::MatrixXd dpre =
        dact.cwiseProduct(detail::activate_grad(lt.ffn_pre, cfg.ffn_act));
    lg.ffn_w1 += lt.u1.transpose() * dpre;
    lg.ffn_b1 += dpre.colwise().sum().transpose();
    const Eigen::MatrixXd du1 = dr2 + dpre * lp.ffn_w1.transpose();

    // LN1
    const Eigen::MatrixXd dr1 =
        detail::ln_backward(du1, lt.xhat1, lt.istd1, lp.ln1_gain, &dgain, &dbias_v);
    lg.ln1_gain += dgain;
    lg.ln1_bias += dbias_v;

    // attention output projection
    lg.wo += lt.concat.transpose() * dr1;
    const Eigen::MatrixXd dconcat = dr1 * lp.wo.transpose();

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(t, cfg.d_model);
    Eigen::MatrixXd dkf = Eigen::MatrixXd::Zero(t, cfg.d_model);
    Eigen::MatrixXd dvf = Eigen::MatrixXd::Zero(t, cfg.d_model);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto &a = lt.attn[static_cast<std::size_t>(h)];
      const auto qh = lt.q.middleCols(h * dk, dk);
      const auto kh = lt.k.middleCols(h * dk, dk);
      const auto vh = lt.v.middleCols(h * dk, dk);
      const auto doh = dconcat.middleCols(h * dk, dk);

      const Eigen::MatrixXd da = doh * vh.transpose();
      dvf.middleCols(h * dk, dk) = a.transpose() * doh;

      // softmax backward: ds = a .* (da - rowsum(da .* a))
      const Eigen::VectorXd rowdot = da.cwiseProduct(a).rowwise().sum();
      Eigen::MatrixXd ds = da;
      ds.colwise() -= rowdot;
      ds = ds.cwiseProduct(a);

      if (!dbias.empty()) dbias[static_cast<std::size_t>(h)] += ds;
      dq.middleCols(h * dk, dk) = ds * kh * inv_sqrt_dk;
      dkf.middleCols(h * dk, dk) = ds.transpose() * qh * inv_sqrt_dk;
    }
    lg.wq += lt.u_in.transpose() * dq;
    lg.wk += lt.u_in.transpose() * dkf;
    lg.wv += lt.u_in.transpose() * dvf;
    du = dr1 + dq * lp.wq.transpose() + dkf * lp.wk.transpose() + dvf * lp.wv.transpose();
  }

  // du is now the gradient at Z' (embedding plus APE)
  if (p.pe.kind == PeKind::learned_ape) g.pe.ape_table.topRows(t) += du;

  // input embedding
  const Eigen::MatrixXd de =
      du.cwiseProduct(tape.embed_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  g.in_w = tape.h0.transpose() * de;
  g.in_b = de.colwise().sum().transpose();
  const Eigen::MatrixXd dh0 = de * p.in_w.transpose();
  Eigen::VectorXd dgain_in, dbias_in;
  detail::ln_backward(dh0, tape.in_xhat, tape.in_istd, p.in_ln_gain, &dgain_in, &dbias_in);
  g.in_ln_gain = dgain_in;
  g.in_ln_bias = dbias_in;

  // map accumulated bias gradients onto the RPE parameters; the bias is
  // Toeplitz, so only per-offset diagonal sums are needed
  if (!dbias.empty()) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto &db = dbias[static_cast<std::size_t>(h)];
      if (p.pe.kind == PeKind::t5_rpe) {
        for (Eigen::Index rel = -(t - 1); rel <= t - 1; ++rel) {
          double s = 0.0;
          const Eigen::Index i0 = std::max<Eigen::Index>(0, rel);
          const Eigen::Index i1 = std::min(t - 1, t - 1 + rel);
          for (Eigen::Index i = i0; i <= i1; ++i) s += db(i, i - rel);
          g.pe.t5_buckets(h, posemb::t5_bucket(rel)) += s;
        }
      } else {  // kerple
        const double r1 = p.pe.kerple_r1(h);
        const double r2 = p.pe.kerple_r2(h);
        double g1 = 0.0, g2 = 0.0;
        for (Eigen::Index rel = -(t - 1); rel <= t - 1; ++rel) {
          double s = 0.0;
          const Eigen::Index i0 = std::max<Eigen::Index>(0, rel);
          const Eigen::Index i1 = std::min(t - 1, t - 1 + rel);
          for (Eigen::Index i = i0; i <= i1; ++i) s += db(i, i - rel);
          const double dist = static_cast<double>(rel < 0 ? -rel : rel);
          g1 += s * (-std::log1p(r2 * dist));
          g2 += s * (-r1 * dist / (1.0 + r2 * dist));
        }
        g.pe.kerple_rho1[h] += g1 * posemb::logistic(p.pe.kerple_rho1[h]);
        g.pe.kerple_rho2[h] += g2 * posemb::logistic(p.pe.kerple_rho2[h]);
      }
    }
  }
  return g;
}

// FC weights Xavier-uniform over sqrt(6/(fan_in+fan_out)), biases zero,
// LN gain 1 / bias 0, PE parameters per their scheme defaults.
inline ModelParams init_params(const ModelConfig &cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const auto xavier = [&rng](Eigen::MatrixXd &w, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    w.resize(fan_in, fan_out);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-a, a);
  };

  ModelParams p;
  p.config = cfg;
  p.in_ln_gain = Eigen::VectorXd::Ones(cfg.n_freq);
  p.in_ln_bias = Eigen::VectorXd::Zero(cfg.n_freq);
  xavier(p.in_w, cfg.n_freq, cfg.d_model);
  p.in_b = Eigen::VectorXd::Zero(cfg.d_model);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto &l : p.layers) {
    xavier(l.wq, cfg.d_model, cfg.d_model);
    xavier(l.wk, cfg.d_model, cfg.d_model);
    xavier(l.wv, cfg.d_model, cfg.d_model);
    xavier(l.wo, cfg.d_model, cfg.d_model);
    l.ln1_gain = Eigen::VectorXd::Ones(cfg.d_model);
    l.ln1_bias = Eigen::VectorXd::Zero(cfg.d_model);
    xavier(l.ffn_w1, cfg.d_model, cfg.d_ff);
    l.ffn_b1 = Eigen::VectorXd::Zero(cfg.d_ff);
    xavier(l.ffn_w2, cfg.d_ff, cfg.d_model);
    l.ffn_b2 = Eigen::VectorXd::Zero(cfg.d_model);
    l.ln2_gain = Eigen::VectorXd::Ones(cfg.d_model);
    l.ln2_bias = Eigen::VectorXd::Zero(cfg.d_model);
  }
  xavier(p.out_w, cfg.d_model, cfg.n_freq);
  p.out_b = Eigen::VectorXd::Zero(cfg.n_freq);
  p.pe = posemb::build_scheme(cfg.pe, cfg.n_heads, cfg.d_model, cfg.pe_t_max,
                              mix_seed(seed, 0x9e));
  return p;
}

}  // namespace model
}  // namespace posse
