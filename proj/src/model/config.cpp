// SPDX-License-Identifier: Apache-2.0
#include "ftlab/model/config.hpp"

#include <string>

#include "ftlab/error.hpp"

namespace ftlab {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (vocab_size < 3) fail("vocab_size must be at least 3 (PAD, UNK and one token)");
  if (max_seq_len < 1) fail("max_seq_len must be >= 1");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ffn < 1) {
    fail("d_model, n_layers, n_heads and d_ffn must be positive");
  }
  if (d_model % n_heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") is not divisible by n_heads (" +
         std::to_string(n_heads) + ")");
  }
  if (!(hidden_dropout >= 0.0 && hidden_dropout < 1.0)) fail("hidden_dropout must be in [0, 1)");
  if (!(attention_dropout >= 0.0 && attention_dropout < 1.0)) {
    fail("attention_dropout must be in [0, 1)");
  }
  if (n_classes < 2) fail("n_classes must be >= 2");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t d = d_model, f = d_ffn;
  const std::size_t per_layer = 4 * d * d + 4 * d + 2 * d * f + f + d + 4 * d;
  return (vocab_size + max_seq_len) * d + n_layers * per_layer + 2 * d + n_classes * d + n_classes;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"max_seq_len", c.max_seq_len},
                     {"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"d_ffn", c.d_ffn},
                     {"hidden_dropout", c.hidden_dropout},
                     {"attention_dropout", c.attention_dropout},
                     {"n_classes", c.n_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_ffn = j.value("d_ffn", d.d_ffn);
  c.hidden_dropout = j.value("hidden_dropout", d.hidden_dropout);
  c.attention_dropout = j.value("attention_dropout", d.attention_dropout);
  c.n_classes = j.value("n_classes", d.n_classes);
}

}  // namespace ftlab
