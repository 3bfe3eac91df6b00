// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/tensor/rng.hpp"
#include "json.hpp"

namespace ftlab::hpo {

/// name -> value, in search-space order. Values are JSON numbers (integers
/// for quantized_int) or, for categoricals, the chosen entry verbatim.
using Assignment = nlohmann::ordered_json;

enum class ParamKind { uniform, loguniform, quantized_int, categorical };

std::string to_string(ParamKind k);

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t step = 1;  // quantized_int only
  std::vector<nlohmann::json> choices;  // categorical only

  static ParamSpec uniform(std::string name, double lo, double hi);
  static ParamSpec loguniform(std::string name, double lo, double hi);
  static ParamSpec quantized_int(std::string name, std::int64_t lo, std::int64_t hi,
                                 std::int64_t step = 1);
  static ParamSpec categorical(std::string name, std::vector<nlohmann::json> choices);

  /// ConfigError unless lo < hi, lo > 0 for loguniform, step >= 1, and
  /// choices are non-empty and distinct.
  void validate() const;
  bool contains(const nlohmann::json& value) const;
  /// Index of `value` among the choices; nullopt when absent.
  std::optional<std::size_t> choice_index(const nlohmann::json& value) const;

  bool operator==(const ParamSpec&) const = default;
};

void to_json(nlohmann::json& j, const ParamSpec& p);

struct SearchSpace {
  std::string name;
  std::vector<ParamSpec> params;

  void validate() const;
  const ParamSpec* find(const std::string& param) const;
  /// ConfigError naming the first parameter that is missing, unknown, or
  /// out of bounds.
  void check(const Assignment& a) const;
  bool contains(const Assignment& a) const;
};

/// Concatenation of two spaces, named "a+b". Duplicate parameter names are
/// a ConfigError.
SearchSpace combine(const SearchSpace& a, const SearchSpace& b);

SearchSpace vft_space();
SearchSpace pbft_space();
SearchSpace lora_space();
SearchSpace cd_space();

/// The four built-ins keyed by name.
std::map<std::string, SearchSpace> builtin_spaces();

/// A built-in name or several joined with '+', e.g. "vft+lora".
SearchSpace space_by_name(const std::string& name);

/// Independent prior draw of every parameter; loguniform is
/// exp(uniform(ln lo, ln hi)), quantized_int is uniform over the grid.
Assignment sample_prior(const SearchSpace& space, Rng& rng);

}  // namespace ftlab::hpo
