// SPDX-License-Identifier: Apache-2.0
#include "ftlab/train/schedule.hpp"

#include <cmath>
#include <string>

#include "ftlab/error.hpp"

namespace ftlab::train {

std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio) {
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ConfigError("warmup_ratio must be in [0, 1)");
  }
  // The small slack keeps products like 0.1 * 30 from rounding up a step.
  const double raw = warmup_ratio * static_cast<double>(total_steps);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double peak) {
  if (total_steps == 0) throw ConfigError("lr_at: total_steps must be positive");
  if (step > total_steps) {
    throw ConfigError("lr_at: step " + std::to_string(step) + " beyond total " +
                      std::to_string(total_steps));
  }
  const std::size_t warm = warmup_steps(total_steps, warmup_ratio);
  if (step < warm) return peak * static_cast<double>(step) / static_cast<double>(warm);
  return peak * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warm);
}

}  // namespace ftlab::train
