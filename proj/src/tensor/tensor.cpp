// SPDX-License-Identifier: Apache-2.0
#include "ftlab/tensor/tensor.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>

#include "ftlab/error.hpp"
#include "node.hpp"

namespace ftlab {
namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->data = Buffer(ftlab::numel(shape));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return node;
}

void check_finite_grad(const detail::Node& node) {
  for (double g : node.grad.span()) {
    if (!std::isfinite(g)) {
      throw NonFiniteError(node.op, std::string("non-finite gradient flowing out of '") +
                                        node.op + "'");
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.node_->data.fill(value);
  return t;
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  if (ftlab::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  std::copy(values.begin(), values.end(), t.node_->data.data());
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()),
              requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw ShapeError("axis out of range");
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data.span(); }
std::span<double> Tensor::mutable_data() { return node_->data.span(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = value;
  if (!value) node_->grad.release();
}
bool Tensor::is_leaf() const { return node_->is_leaf(); }
const char* Tensor::op_name() const { return node_->op; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad.span(); }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer().span(); }
void Tensor::zero_grad() { node_->grad.release(); }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  return from(node_->shape, node_->data.span(), requires_grad);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node& node = **it;
    if (node.is_leaf() || node.grad.empty()) continue;
    check_finite_grad(node);
    node.backward(node);
    // Interior gradients are scratch; releasing them keeps a repeated
    // backward() from double counting.
    node.grad.release();
  }
  for (detail::Node* node : order) {
    if (node->is_leaf() && !node->grad.empty()) check_finite_grad(*node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::uint64_t content_hash(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace ftlab
