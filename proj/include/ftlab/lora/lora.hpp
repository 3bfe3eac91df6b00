// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "ftlab/model/transformer.hpp"
#include "json.hpp"

namespace ftlab::lora {

enum class Target { Q, K, V, O };

std::string to_string(Target t);
Target target_from_string(const std::string& name);

struct LoraConfig {
  std::size_t rank = 16;
  double alpha = 64.0;
  double dropout = 0.2;
  std::set<Target> targets{Target::Q, Target::V};

  double scaling() const { return alpha / static_cast<double>(rank); }
  void validate(std::size_t d_model) const;

  bool operator==(const LoraConfig&) const = default;
};

void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);

/// Attaches an adapter (A ~ N(0, 0.02), B = 0) to every targeted attention
/// projection of every layer, then freezes everything except the adapters
/// and the classification head.
void inject(TransformerClassifier& model, const LoraConfig& config, Rng& rng);

/// Folds each adapter into its weight (W += scale * B A) and detaches it.
/// Throws Error when no adapters are attached.
void merge(TransformerClassifier& model);

/// Config of the adapters currently attached (taken from the first layer),
/// or nullopt when the model has none.
std::optional<LoraConfig> attached_config(const TransformerClassifier& model);

/// Sets the dropout rate of every attached adapter; ConfigError outside [0, 1).
void set_dropout(TransformerClassifier& model, double p);

/// Number of scalars in the adapters alone.
std::size_t adapter_parameter_count(const TransformerClassifier& model);

/// Adapter-only checkpoint: the A/B pair of every adapted projection, the
/// classification head, and the LoRA config. See checkpoint.hpp for layout.
void save_adapters(const TransformerClassifier& model, const std::filesystem::path& path);

/// Loads an adapter checkpoint onto a base model with the same architecture.
/// Adapters are injected first if the model has none. Any shape mismatch is
/// a ShapeError.
void load_adapters(TransformerClassifier& model, const std::filesystem::path& path);

}  // namespace ftlab::lora
