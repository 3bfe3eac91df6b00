// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ftlab/tensor/buffer.hpp"
#include "ftlab/tensor/tensor.hpp"

namespace ftlab::train {

enum class OptimizerKind { sgd, adam, adamw };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers of one parameter. Empty for sgd.
struct ParamState {
  Buffer m, v;
};

/// One update of a flat parameter in place, with `t` the 1-based step count
/// used for Adam bias correction.
///
///   sgd    p -= lr (g + wd p)
///   adam   g' = g + wd p; Adam moments on g'; p -= lr mhat / (sqrt(vhat) + eps)
///   adamw  Adam moments on g; p -= lr wd p; p -= lr mhat / (sqrt(vhat) + eps)
///
/// ShapeError when the spans disagree in length.
void optimizer_step(std::span<double> param, std::span<const double> grad, ParamState& state,
                    const OptimizerConfig& config, double lr, std::size_t t);

/// Optimizer over a fixed parameter list. Parameters without a gradient are
/// skipped for that step and their state is left untouched.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return t_; }
  /// Bytes held in optimizer state (moments); 0 for sgd.
  std::size_t state_bytes() const;
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<ParamState> state_;
  std::size_t t_ = 0;
};

}  // namespace ftlab::train
