// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace ftlab::train {

/// Number of warmup steps: ceil(warmup_ratio * total_steps).
std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio);

/// Linear warmup from 0 to `peak` over the warmup steps, then linear decay to
/// 0 at `total_steps`. ConfigError when total_steps is 0, step exceeds it, or
/// the ratio is outside [0, 1).
double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double peak);

}  // namespace ftlab::train
