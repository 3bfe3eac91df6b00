// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/example.hpp"

#include <fstream>

#include "ftlab/error.hpp"

namespace ftlab::data {

void validate(const Example& e) {
  if (e.label != 0 && e.label != 1) {
    throw DataError("label must be 0 or 1, got " + std::to_string(e.label));
  }
  if (e.sentence.empty()) throw DataError("empty sentence");
}

void to_json(nlohmann::json& j, const Example& e) {
  j = {{"sentence", e.sentence}, {"label", e.label}, {"source", e.source}};
}

void from_json(const nlohmann::json& j, Example& e) {
  e.sentence = j.at("sentence").get<std::string>();
  e.label = j.at("label").get<int>();
  e.source = j.value("source", std::string{});
}

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : examples) {
    nlohmann::ordered_json j;
    j["sentence"] = e.sentence;
    j["label"] = e.label;
    j["source"] = e.source;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      Example e = nlohmann::json::parse(line).get<Example>();
      validate(e);
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw ParseError(lineno, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

double LabelCounts::acceptable_fraction() const {
  return total() == 0 ? 0.0 : static_cast<double>(acceptable) / static_cast<double>(total());
}

LabelCounts label_counts(std::span<const Example> examples) {
  LabelCounts c;
  for (const auto& e : examples) (e.label == 1 ? c.acceptable : c.unacceptable) += 1;
  return c;
}

std::vector<Example> balance(std::span<const Example> examples, Rng& rng) {
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    validate(examples[i]);
    by_label[examples[i].label].push_back(i);
  }
  const std::size_t keep = std::min(by_label[0].size(), by_label[1].size());
  std::vector<std::uint8_t> kept(examples.size(), 0);
  for (auto& idx : by_label) {
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < keep; ++i) kept[idx[i]] = 1;
  }
  std::vector<Example> out;
  out.reserve(2 * keep);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (kept[i]) out.push_back(examples[i]);
  }
  return out;
}

void write_splits(const std::filesystem::path& dir, const Splits& splits) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir / kTrainFile, splits.train);
  write_jsonl(dir / kIdEvalFile, splits.id_eval);
  write_jsonl(dir / kOodEvalFile, splits.ood_eval);
}

Splits read_splits(const std::filesystem::path& dir) {
  Splits s;
  s.train = read_jsonl(dir / kTrainFile);
  s.id_eval = read_jsonl(dir / kIdEvalFile);
  s.ood_eval = read_jsonl(dir / kOodEvalFile);
  return s;
}

}  // namespace ftlab::data
