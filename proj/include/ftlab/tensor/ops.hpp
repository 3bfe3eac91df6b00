// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ftlab/tensor/rng.hpp"
#include "ftlab/tensor/tensor.hpp"

// Differentiable primitives. Every op validates shapes (ShapeError), checks
// its output for NaN/Inf (NonFiniteError naming the op) and, when recording,
// attaches a backward closure that accumulates into the inputs that require
// gradients.
namespace ftlab::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// [m x k] @ [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] @ weight[out x in]^T + bias[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched product over the leading axis: [N x m x k] @ [N x k x n], or
/// [N x m x k] @ [N x n x k]^T when `transpose_b` is set.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);

/// Replaces entries whose mask byte is nonzero with `value`. The mask has
/// one byte per element of x.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value);

/// Softmax of x / temperature over the last axis, max-subtracted.
Tensor softmax(const Tensor& x, double temperature = 1.0);
/// Log-softmax of x / temperature over the last axis, computed directly.
Tensor log_softmax(const Tensor& x, double temperature = 1.0);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

/// Normalizes over the last axis, then applies gamma/beta of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Rows of `table` [V x d] for each id; result [ids.size() x d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

/// Train mode: Bernoulli keep-mask with probability 1-p, survivors scaled by
/// 1/(1-p). Eval mode, or p == 0: returns x itself.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Rows of a [N x d] tensor (leading axes flattened); result [rows.size() x d].
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean over the batch of KL(softmax(p/T) || softmax(q/T)). The p side is
/// treated as a constant: gradients flow only into q_logits.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits, double temperature);

/// x @ W^T + b + scale * (dropout(x) @ A^T) @ B^T as a single node, so the
/// adapter path stores only its rank-r intermediate (and the dropped input
/// when dropout is active). W [out x in], A [r x in], B [out x r].
Tensor low_rank_linear(const Tensor& x, const Tensor& weight, const Tensor& bias,
                       const Tensor& lora_a, const Tensor& lora_b, double scale,
                       double dropout_p, bool train, Rng& rng);

}  // namespace ftlab::ops
