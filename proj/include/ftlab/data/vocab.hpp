// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ftlab/data/example.hpp"
#include "ftlab/model/transformer.hpp"
#include "json.hpp"

namespace ftlab::data {

/// Lowercases ASCII letters, splits on whitespace, and emits each ASCII
/// punctuation character as its own token. Other bytes are word characters.
std::vector<std::string> tokenize(std::string_view text);

struct Encoded {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;  // 1 for every real token
};

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  Vocab();

  /// Keeps tokens seen at least `min_freq` times. Ids after the reserved two
  /// follow descending frequency, ties broken by token text. When `max_size`
  /// is non-zero the vocabulary, reserved ids included, is cut to that size.
  static Vocab build(std::span<const std::string> texts, std::size_t min_freq = 1,
                     std::size_t max_size = 0);

  std::size_t size() const { return tokens_.size(); }
  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  bool contains(std::string_view token) const;

  /// Token ids truncated to the first `max_len`; no padding. ConfigError
  /// when max_len < 1.
  Encoded encode(std::string_view text, std::size_t max_len) const;
  /// Space-joined tokens; padding ids are skipped.
  std::string decode(std::span<const std::int32_t> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;

  friend void from_json(const nlohmann::json& j, Vocab& v);
};

void to_json(nlohmann::json& j, const Vocab& v);
void from_json(const nlohmann::json& j, Vocab& v);

/// Vocabulary over the training sentences, both raw and rendered through
/// every template, so prompt words are known whichever template a run uses.
Vocab build_vocab(std::span<const Example> train, std::size_t min_freq = 1,
                  std::size_t max_size = 0);

/// Right-pads a set of encodings to the longest one. DataError if any row
/// is empty.
TokenBatch collate(std::span<const Encoded> rows);

}  // namespace ftlab::data
