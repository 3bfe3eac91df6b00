// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ftlab/tensor/buffer.hpp"

namespace ftlab {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Handle to a dense row-major array of doubles that may take part in a
/// reverse-mode autodiff graph. Copies share the underlying node; use
/// clone() for an independent leaf.
///
/// Ops record a backward closure on their output whenever gradient mode is
/// on and at least one input requires a gradient. backward() walks the
/// recorded graph in reverse topological order. The graph is kept, so
/// calling backward() again on the same loss accumulates into the leaves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the values. Only meaningful on leaves: writing into an
  /// op output does not re-run anything downstream.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  const char* op_name() const;

  bool has_grad() const;
  /// Accumulated gradient; empty span when none has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  /// Drops the gradient buffer, returning its memory.
  void zero_grad();

  /// Leaf with a copy of the values and no history.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  void backward() const;

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether new ops record backward closures on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (evaluation, frozen teachers).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// FNV-1a over the raw bytes of the values; used for frozen-weight checks.
std::uint64_t content_hash(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace ftlab
