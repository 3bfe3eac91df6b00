// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ftlab/tensor/tensor.hpp"

namespace ftlab::detail {

struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }

  // Gradient buffer of a parent, allocated on first use.
  Buffer& grad_buffer() {
    if (grad.empty() && !data.empty()) grad = Buffer(data.size());
    return grad;
  }
};

}  // namespace ftlab::detail
