// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftlab/lora/adapter.hpp"
#include "ftlab/model/config.hpp"
#include "ftlab/tensor/rng.hpp"
#include "ftlab/tensor/tensor.hpp"

namespace ftlab {

/// Right-padded token ids, row-major [batch x length]. mask[i] is 1 for a
/// real token, 0 for padding.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  /// Index of the last real token in each row; throws DataError for a row
  /// with no real tokens.
  std::vector<std::size_t> last_positions() const;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;  // trainable iff tensor.requires_grad()
};

/// Dense projection y = x W^T + b, optionally carrying a LoRA adapter.
struct Projection {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  std::optional<LoraAdapter> adapter;

  Tensor apply(const Tensor& x, bool train, Rng& rng) const;
};

struct TransformerBlock {
  Tensor ln1_gamma, ln1_beta;
  Projection q, k, v, o;
  Tensor ln2_gamma, ln2_beta;
  Projection ffn_in, ffn_out;
};

/// Pre-LN causal transformer with a classification head read from the last
/// real token of each row.
class TransformerClassifier {
 public:
  /// Initialization: N(0, 0.02) for embeddings, projections and the head;
  /// zero biases; layer norms at gamma = 1, beta = 0. Everything trainable.
  static TransformerClassifier build(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  /// Registry of every tensor, each exactly once, in a stable order.
  std::vector<NamedParameter> parameters() const;
  /// Registry entries whose tensors require gradients, same order.
  std::vector<NamedParameter> trainable_parameters() const;
  std::size_t parameter_count() const;

  /// Logits [batch x n_classes] read at the last real token of each row.
  Tensor forward(const TokenBatch& batch, bool train, Rng& rng) const;
  /// Logits read at explicit positions, one per row.
  Tensor forward_at(const TokenBatch& batch, std::span<const std::size_t> read_positions,
                    bool train, Rng& rng) const;

  /// Deep copy; trainable flags and adapters are preserved.
  TransformerClassifier clone() const;

  void set_all_trainable(bool trainable);

  /// Replaces the hidden and attention dropout rates; ConfigError outside [0, 1).
  void set_dropout(double hidden, double attention);

  std::vector<TransformerBlock>& blocks() { return blocks_; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }
  bool has_adapters() const;

  /// Combined content hash of the named tensors' values.
  std::uint64_t hash_of(const std::vector<std::string>& names) const;
  /// Hash over every non-adapter, non-head tensor.
  std::uint64_t base_hash() const;

  /// Looks a registry entry up by name; throws Error when absent.
  Tensor parameter(const std::string& name) const;

 private:
  TransformerClassifier() = default;

  ModelConfig config_;
  Tensor token_embedding_;     // [V x d]
  Tensor position_embedding_;  // [L x d]
  std::vector<TransformerBlock> blocks_;
  Tensor final_gamma_, final_beta_;
  Tensor head_weight_;  // [C x d]
  Tensor head_bias_;    // [C]
};

bool is_head_parameter(const std::string& name);
bool is_adapter_parameter(const std::string& name);

}  // namespace ftlab
