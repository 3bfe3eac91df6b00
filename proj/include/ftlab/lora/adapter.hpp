// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "ftlab/tensor/tensor.hpp"

namespace ftlab {

/// Low-rank pair attached to one projection: delta W = (alpha / rank) * B A.
struct LoraAdapter {
  Tensor a;  // [rank x d_in], trainable
  Tensor b;  // [d_out x rank], trainable, zero at injection
  std::size_t rank = 0;
  double alpha = 0.0;
  double dropout = 0.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
};

}  // namespace ftlab
