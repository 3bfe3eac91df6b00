// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "json.hpp"

namespace ftlab {

struct ModelConfig {
  std::size_t vocab_size = 1000;
  std::size_t max_seq_len = 64;  // 256 for the full-length setting
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 256;
  double hidden_dropout = 0.1;
  double attention_dropout = 0.1;
  std::size_t n_classes = 2;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Parameter count of a model without adapters:
  ///   (V + L) d                                   token + position embeddings
  ///   + n_layers * (4 d^2 + 4 d                    Q, K, V, O with biases
  ///                 + 2 d f + f + d                FFN in/out with biases
  ///                 + 4 d)                         two layer norms
  ///   + 2 d                                        final layer norm
  ///   + C d + C                                    classification head
  std::size_t parameter_count() const;

  static ModelConfig toy() { return {}; }
  static ModelConfig full_length() {
    ModelConfig c;
    c.max_seq_len = 256;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace ftlab
