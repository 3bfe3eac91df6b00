// SPDX-License-Identifier: Apache-2.0
#include "ftlab/hpo/space.hpp"

#include <cmath>
#include <set>

#include "ftlab/error.hpp"

namespace ftlab::hpo {

std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::uniform: return "uniform";
    case ParamKind::loguniform: return "loguniform";
    case ParamKind::quantized_int: return "quantized_int";
    case ParamKind::categorical: return "categorical";
  }
  throw ConfigError("unknown parameter kind");
}

ParamSpec ParamSpec::uniform(std::string name, double lo, double hi) {
  return {std::move(name), ParamKind::uniform, lo, hi, 1, {}};
}

ParamSpec ParamSpec::loguniform(std::string name, double lo, double hi) {
  return {std::move(name), ParamKind::loguniform, lo, hi, 1, {}};
}

ParamSpec ParamSpec::quantized_int(std::string name, std::int64_t lo, std::int64_t hi,
                                   std::int64_t step) {
  return {std::move(name), ParamKind::quantized_int, static_cast<double>(lo),
          static_cast<double>(hi), step, {}};
}

ParamSpec ParamSpec::categorical(std::string name, std::vector<nlohmann::json> choices) {
  return {std::move(name), ParamKind::categorical, 0.0, 0.0, 1, std::move(choices)};
}

void ParamSpec::validate() const {
  auto fail = [&](const std::string& msg) { throw ConfigError("parameter " + name + ": " + msg); };
  if (name.empty()) throw ConfigError("parameter with an empty name");
  switch (kind) {
    case ParamKind::categorical: {
      if (choices.empty()) fail("categorical needs at least one choice");
      std::set<std::string> seen;
      for (const auto& c : choices) {
        if (!seen.insert(c.dump()).second) fail("duplicate choice " + c.dump());
      }
      return;
    }
    case ParamKind::loguniform:
      if (!(lo > 0.0)) fail("loguniform needs lo > 0");
      [[fallthrough]];
    case ParamKind::uniform:
      if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) fail("needs finite lo < hi");
      return;
    case ParamKind::quantized_int:
      if (!(lo < hi)) fail("needs lo < hi");
      if (step < 1) fail("step must be >= 1");
      if (lo != std::floor(lo) || hi != std::floor(hi)) fail("bounds must be integers");
      return;
  }
}

std::optional<std::size_t> ParamSpec::choice_index(const nlohmann::json& value) const {
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i] == value) return i;
  }
  return std::nullopt;
}

bool ParamSpec::contains(const nlohmann::json& value) const {
  if (kind == ParamKind::categorical) return choice_index(value).has_value();
  if (!value.is_number()) return false;
  const double x = value.get<double>();
  if (!(x >= lo && x <= hi)) return false;
  if (kind == ParamKind::quantized_int) {
    if (!value.is_number_integer()) return false;
    const auto k = value.get<std::int64_t>() - static_cast<std::int64_t>(lo);
    return k % step == 0;
  }
  return true;
}

void to_json(nlohmann::json& j, const ParamSpec& p) {
  j = {{"name", p.name}, {"kind", to_string(p.kind)}};
  if (p.kind == ParamKind::categorical) {
    j["choices"] = p.choices;
  } else {
    j["lo"] = p.lo;
    j["hi"] = p.hi;
    if (p.kind == ParamKind::quantized_int) j["step"] = p.step;
  }
}

void SearchSpace::validate() const {
  std::set<std::string> names;
  for (const auto& p : params) {
    p.validate();
    if (!names.insert(p.name).second) {
      throw ConfigError("space " + name + ": duplicate parameter " + p.name);
    }
  }
}

const ParamSpec* SearchSpace::find(const std::string& param) const {
  for (const auto& p : params) {
    if (p.name == param) return &p;
  }
  return nullptr;
}

void SearchSpace::check(const Assignment& a) const {
  if (!a.is_object()) throw ConfigError("assignment must be an object");
  for (const auto& p : params) {
    if (!a.contains(p.name)) throw ConfigError("assignment lacks " + p.name);
    if (!p.contains(a.at(p.name))) {
      throw ConfigError(p.name + " = " + a.at(p.name).dump() + " is outside space " + name);
    }
  }
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!find(it.key())) throw ConfigError(it.key() + " is not a parameter of space " + name);
  }
}

bool SearchSpace::contains(const Assignment& a) const {
  try {
    check(a);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

SearchSpace combine(const SearchSpace& a, const SearchSpace& b) {
  SearchSpace s{a.name + "+" + b.name, a.params};
  s.params.insert(s.params.end(), b.params.begin(), b.params.end());
  s.validate();
  return s;
}

SearchSpace vft_space() {
  using P = ParamSpec;
  return {"vft",
          {P::quantized_int("epochs", 2, 50),
           P::categorical("batch_size", {16, 32, 64, 128}),
           P::loguniform("learning_rate", 1e-6, 1e-3),
           P::uniform("hidden_dropout", 0.0001, 0.3),
           P::uniform("attention_dropout", 0.0001, 0.3),
           P::categorical("optimizer", {"adam", "adamw", "sgd"})}};
}

SearchSpace pbft_space() {
  using P = ParamSpec;
  return {"pbft",
          {P::loguniform("learning_rate", 1e-6, 1e-4),
           P::quantized_int("batch_size", 2, 16),
           P::uniform("dropout", 0.0, 0.5),
           P::uniform("warmup_ratio", 0.0, 0.2),
           P::quantized_int("k_per_class", 2, 32),
           P::quantized_int("epochs", 5, 20),
           P::categorical("template", {"minimal", "gpt3", "eval_harness"})}};
}

SearchSpace lora_space() {
  using P = ParamSpec;
  return {"lora",
          {P::categorical("rank", {4, 8, 16, 32}),
           P::categorical("alpha", {16, 32, 64, 128}),
           P::uniform("lora_dropout", 0.0, 0.5)}};
}

SearchSpace cd_space() {
  SearchSpace s = pbft_space();
  s.name = "cd";
  s.params.push_back(ParamSpec::uniform("temperature", 0.5, 4.0));
  s.params.push_back(ParamSpec::uniform("distill_weight", 0.0, 1.0));
  return s;
}

std::map<std::string, SearchSpace> builtin_spaces() {
  std::map<std::string, SearchSpace> out;
  for (auto s : {vft_space(), pbft_space(), lora_space(), cd_space()}) out.emplace(s.name, s);
  return out;
}

SearchSpace space_by_name(const std::string& name) {
  const auto builtins = builtin_spaces();
  std::optional<SearchSpace> out;
  std::size_t start = 0;
  for (;;) {
    const auto plus = name.find('+', start);
    const auto part = name.substr(start, plus - start);
    const auto it = builtins.find(part);
    if (it == builtins.end()) throw ConfigError("unknown search space \"" + part + "\"");
    out = out ? combine(*out, it->second) : it->second;
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return *out;
}

Assignment sample_prior(const SearchSpace& space, Rng& rng) {
  Assignment a = Assignment::object();
  for (const auto& p : space.params) {
    switch (p.kind) {
      case ParamKind::uniform: a[p.name] = rng.uniform(p.lo, p.hi); break;
      case ParamKind::loguniform:
        a[p.name] = std::clamp(std::exp(rng.uniform(std::log(p.lo), std::log(p.hi))), p.lo, p.hi);
        break;
      case ParamKind::quantized_int: {
        const auto lo = static_cast<std::int64_t>(p.lo);
        const auto cells = (static_cast<std::int64_t>(p.hi) - lo) / p.step + 1;
        a[p.name] = lo + p.step * static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cells)));
        break;
      }
      case ParamKind::categorical: a[p.name] = p.choices[rng.below(p.choices.size())]; break;
    }
  }
  return a;
}

}  // namespace ftlab::hpo
