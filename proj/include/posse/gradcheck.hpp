// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "posse/model.hpp"
#include "posse/train.hpp"

namespace posse {
namespace gradcheck {

struct GroupResult {
  std::string name;
  double max_rel_err = 0.0;
};

struct Report {
  std::vector<GroupResult> groups;
  double worst = 0.0;

  bool passed(double threshold = 1e-4) const { return worst < threshold; }
};

// Central-difference check of every analytic gradient against the loss
// surface, one result per parameter group. Relative error uses
// |fd - g| / max(|fd|, |g|, 1e-6); the floor keeps genuinely-zero gradients
// (e.g. learned-APE rows beyond the batch length) from producing 0/0.
//
// Parameters are jittered away from their symmetric init points first so the
// check does not sit on kinks or exact zeros. `corrupt` deliberately damages
// one analytic gradient; the CLI uses it to prove the checker can fail.
inline Report run(const ModelConfig &cfg, Eigen::Index t_len, std::uint64_t seed,
                  double fd_step = 1e-4, bool corrupt = false) {
  cfg.validate();
  ModelParams params = model::init_params(cfg, seed);
  Rng rng(mix_seed(seed, 42));
  for (auto &view : train::tensor_views(params)) {
    if (view.name.rfind("pe.kerple", 0) == 0) continue;  // keep rho near softplus(1)
    for (Eigen::Index j = 0; j < view.size; ++j) view.data[j] += 0.05 * rng.normal();
  }

  Eigen::MatrixXd mag(t_len, cfg.n_freq);
  for (Eigen::Index r = 0; r < mag.rows(); ++r)
    for (Eigen::Index c = 0; c < mag.cols(); ++c) mag(r, c) = std::abs(rng.normal()) + 0.01;
  Eigen::MatrixXd target(t_len, cfg.n_freq);
  for (Eigen::Index r = 0; r < target.rows(); ++r)
    for (Eigen::Index c = 0; c < target.cols(); ++c) target(r, c) = rng.uniform();

  const auto loss_at = [&](const ModelParams &p) {
    const auto fw = model::forward(mag, p);
    return train::mse_mask_loss(fw.mask, target).value;
  };

  const auto fw = model::forward(mag, params);
  const auto loss = train::mse_mask_loss(fw.mask, target);
  GradStore grads = model::backward(fw.tape, loss.grad, params);
  if (corrupt) {
    auto gv = train::tensor_views(grads);
    gv.front().data[0] = gv.front().data[0] * 1.5 + 1e-2;
  }

  Report report;
  auto pv = train::tensor_views(params);
  const auto gv = train::tensor_views(static_cast<const ModelParams &>(grads));
  for (std::size_t i = 0; i < pv.size(); ++i) {
    GroupResult gr;
    gr.name = pv[i].name;
    for (Eigen::Index j = 0; j < pv[i].size; ++j) {
      const double saved = pv[i].data[j];
      pv[i].data[j] = saved + fd_step;
      const double lp = loss_at(params);
      pv[i].data[j] = saved - fd_step;
      const double lm = loss_at(params);
      pv[i].data[j] = saved;
      const double fd = (lp - lm) / (2.0 * fd_step);
      const double g = gv[i].data[j];
      const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
      gr.max_rel_err = std::max(gr.max_rel_err, rel);
    }
    report.worst = std::max(report.worst, gr.max_rel_err);
    report.groups.push_back(std::move(gr));
  }
  return report;
}

}  // namespace gradcheck
}  // namespace posse
