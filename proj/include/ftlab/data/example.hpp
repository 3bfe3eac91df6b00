// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ftlab/tensor/rng.hpp"
#include "json.hpp"

namespace ftlab::data {

/// One labeled sentence. label 1 = acceptable, 0 = unacceptable.
struct Example {
  std::string sentence;
  int label = 0;
  std::string source;

  bool operator==(const Example&) const = default;
};

/// Throws DataError unless label is 0 or 1 and the sentence is non-empty.
void validate(const Example& e);

void to_json(nlohmann::json& j, const Example& e);
void from_json(const nlohmann::json& j, Example& e);

/// Canonical dataset file: one {"sentence", "label", "source"} object per
/// line, keys in that order.
void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples);
/// Reads a canonical dataset file. ParseError carries the 1-based line.
std::vector<Example> read_jsonl(const std::filesystem::path& path);

struct LabelCounts {
  std::size_t unacceptable = 0;
  std::size_t acceptable = 0;

  std::size_t total() const { return unacceptable + acceptable; }
  /// Fraction labeled acceptable; 0 for an empty set.
  double acceptable_fraction() const;
};

LabelCounts label_counts(std::span<const Example> examples);

/// Down-samples the majority class to the minority size. Kept examples stay
/// in their original relative order.
std::vector<Example> balance(std::span<const Example> examples, Rng& rng);

/// The three canonical splits of a prepared dataset directory.
struct Splits {
  std::vector<Example> train;
  std::vector<Example> id_eval;
  std::vector<Example> ood_eval;
};

inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kIdEvalFile = "id_eval.jsonl";
inline constexpr const char* kOodEvalFile = "ood_eval.jsonl";

void write_splits(const std::filesystem::path& dir, const Splits& splits);
Splits read_splits(const std::filesystem::path& dir);

}  // namespace ftlab::data
