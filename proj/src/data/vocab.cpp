// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "ftlab/data/templates.hpp"
#include "ftlab/error.hpp"

namespace ftlab::data {
namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocab::Vocab() : tokens_{"<pad>", "<unk>"} {
  index_.emplace(tokens_[0], kPad);
  index_.emplace(tokens_[1], kUnk);
}

Vocab Vocab::build(std::span<const std::string> texts, std::size_t min_freq,
                   std::size_t max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) ++freq[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    if (n >= std::max<std::size_t>(min_freq, 1) && tok != "<pad>" && tok != "<unk>") {
      ranked.emplace_back(tok, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size && max_size < 3) throw ConfigError("vocabulary max_size must be at least 3");
  if (max_size && ranked.size() > max_size - 2) ranked.resize(max_size - 2);
  Vocab v;
  for (auto& [tok, n] : ranked) {
    v.index_.emplace(tok, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

std::int32_t Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("token id " + std::to_string(id) + " outside vocabulary of " +
                std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

Encoded Vocab::encode(std::string_view text, std::size_t max_len) const {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  Encoded e;
  for (const auto& tok : tokenize(text)) {
    if (e.ids.size() == max_len) break;
    e.ids.push_back(id(tok));
  }
  e.mask.assign(e.ids.size(), 1);
  return e;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto i : ids) {
    if (i == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(i);
  }
  return out;
}

void to_json(nlohmann::json& j, const Vocab& v) { j = v.tokens(); }

void from_json(const nlohmann::json& j, Vocab& v) {
  auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw ParseError(0, "vocabulary must start with <pad>, <unk>");
  }
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw ParseError(0, "duplicate vocabulary token \"" + v.tokens_[i] + "\"");
    }
  }
}

Vocab build_vocab(std::span<const Example> train, std::size_t min_freq, std::size_t max_size) {
  std::vector<std::string> texts;
  texts.reserve(train.size() * (kAllTemplates.size() + 1));
  for (const auto& e : train) {
    texts.push_back(e.sentence);
    for (Template t : kAllTemplates) texts.push_back(apply_template(e.sentence, t));
  }
  return Vocab::build(texts, min_freq, max_size);
}

TokenBatch collate(std::span<const Encoded> rows) {
  TokenBatch b;
  b.batch = rows.size();
  for (const auto& r : rows) {
    if (r.ids.empty()) throw DataError("cannot batch an empty token sequence");
    b.length = std::max(b.length, r.ids.size());
  }
  b.ids.assign(b.batch * b.length, Vocab::kPad);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].ids.begin(), rows[i].ids.end(), b.ids.begin() + i * b.length);
    std::copy(rows[i].mask.begin(), rows[i].mask.end(), b.mask.begin() + i * b.length);
  }
  return b;
}

}  // namespace ftlab::data
