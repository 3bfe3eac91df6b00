// SPDX-License-Identifier: Apache-2.0
#include "ftlab/train/optimizer.hpp"

#include <cmath>

#include "ftlab/error.hpp"
#include "ftlab/kernels/kernels.hpp"

namespace ftlab::train {

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
  }
  throw ConfigError("unknown optimizer");
}

OptimizerKind optimizer_from_string(std::string_view name) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown optimizer \"" + std::string(name) + "\"");
}

void optimizer_step(std::span<double> param, std::span<const double> grad, ParamState& state,
                    const OptimizerConfig& config, double lr, std::size_t t) {
  if (param.size() != grad.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(param.size()) + " parameters but " +
                     std::to_string(grad.size()) + " gradients");
  }
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  const std::size_t n = param.size();

  if (config.kind == OptimizerKind::sgd) {
    const double wd = config.weight_decay;
    for (std::size_t i = 0; i < n; ++i) param[i] -= lr * (grad[i] + wd * param[i]);
    return;
  }
  if (t == 0) throw ConfigError("optimizer_step: step count is 1-based");
  if (state.m.size() != n) {
    state.m = Buffer(n);
    state.v = Buffer(n);
  }
  const bool decoupled = config.kind == OptimizerKind::adamw;
  const double td = static_cast<double>(t);
  const kernels::AdamStep step{
      .lr = lr,
      .beta1 = config.beta1,
      .beta2 = config.beta2,
      .eps = config.eps,
      .bias_correction1 = 1.0 - std::pow(config.beta1, td),
      .bias_correction2 = 1.0 - std::pow(config.beta2, td),
      .l2 = decoupled ? 0.0 : config.weight_decay,
      .decoupled_decay = decoupled ? config.weight_decay : 0.0,
  };
  kernels::active().adam(param.data(), grad.data(), state.m.data(), state.v.data(), n, step);
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)), state_(params_.size()) {
  if (config_.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

void Optimizer::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    optimizer_step(params_[i].mutable_data(), params_[i].grad(), state_[i], config_, lr, t_);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t Optimizer::state_bytes() const {
  std::size_t total = 0;
  for (const auto& s : state_) total += s.m.bytes() + s.v.bytes();
  return total;
}

}  // namespace ftlab::train
