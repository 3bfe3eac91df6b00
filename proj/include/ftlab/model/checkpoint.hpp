// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ftlab/model/transformer.hpp"
#include "json.hpp"

// Checkpoint container (all integers little-endian):
//
//   bytes 0..7   magic "FTLABCK1"
//   u64          header length H
//   H bytes      UTF-8 JSON header: {"kind": "model" | "adapters",
//                "model": ModelConfig, "lora": LoraConfig or null,
//                "meta": free-form object}
//   u64          tensor count N
//   N times:     u32 name length, name bytes, u8 trainable flag,
//                u32 rank, rank x u64 dims, numel x f64 values
//
// Values are stored as raw IEEE-754 doubles, so save -> load is bit-exact.
namespace ftlab::checkpoint {

struct StoredTensor {
  std::string name;
  bool trainable = false;
  Shape shape;
  std::vector<double> values;
};

struct Container {
  nlohmann::json header;
  std::vector<StoredTensor> tensors;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

/// Whole model, including any attached adapters. `meta` is stored verbatim.
void save(const TransformerClassifier& model, const std::filesystem::path& path,
          const nlohmann::json& meta = nlohmann::json::object());

struct Loaded {
  TransformerClassifier model;
  nlohmann::json meta;
};

Loaded load(const std::filesystem::path& path);

}  // namespace ftlab::checkpoint
