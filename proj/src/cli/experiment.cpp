// SPDX-License-Identifier: Apache-2.0
#include "ftlab/cli/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ftlab/data/example.hpp"
#include "ftlab/data/templates.hpp"
#include "ftlab/error.hpp"

namespace ftlab::cli {
namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const DataSource& d) {
  j = {{"synthetic", d.synthetic},
       {"n", d.n},
       {"n_eval", d.n_eval},
       {"seed", d.seed ? json(*d.seed) : json(nullptr)},
       {"dir", d.dir ? json(d.dir->string()) : json(nullptr)}};
}

void from_json(const json& j, DataSource& d) {
  const DataSource def;
  d.synthetic = j.value("synthetic", def.synthetic);
  d.n = j.value("n", def.n);
  d.n_eval = j.value("n_eval", def.n_eval);
  d.seed.reset();
  d.dir.reset();
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) d.seed = it->get<std::uint64_t>();
  if (auto it = j.find("dir"); it != j.end() && !it->is_null()) d.dir = fs::path(it->get<std::string>());
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

namespace {

const std::set<std::string> kTopLevelKeys{"strategy", "seed",  "model",    "train",   "distill",
                                          "lora",     "data",  "space",    "n_trials", "sampler",
                                          "output_dir"};

/// Throws for the first key of `given` that the parsed config does not
/// serialize back, i.e. a field no section knows.
void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  for (const auto& [key, v] : given.items()) {
    const auto it = known.find(key);
    if (it == known.end()) throw ConfigError("unknown config key \"" + prefix + key + "\"");
    if (v.is_object() && it->is_object()) reject_unknown(v, *it, prefix + key + ".");
  }
}

bool integral(double v) { return std::isfinite(v) && v == std::floor(v); }

// Categorical entries such as alpha are written as integers in the spaces.
json number(double v) {
  if (integral(v) && std::fabs(v) < 9.0e15) return json(static_cast<std::int64_t>(v));
  return json(v);
}

template <class T>
T get_as(const json& v, const std::string& name) {
  try {
    if constexpr (std::is_same_v<T, std::size_t>) {
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (!integral(d) || d < 0) throw ConfigError(name + " must be a non-negative integer");
        return static_cast<std::size_t>(d);
      }
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("value " + v.dump() + " has the wrong type for " + name);
  }
}

template <class C>
auto& need_distill(C& c, const std::string& name) {
  if (!c.distill) throw ConfigError("parameter " + name + " needs a distill section");
  return *c.distill;
}

template <class C>
auto& need_lora(C& c, const std::string& name) {
  if (!c.lora) throw ConfigError("parameter " + name + " needs a lora section");
  return *c.lora;
}

json get_param(const ExperimentConfig& c, const std::string& name) {
  const auto& t = c.train;
  if (name == "epochs") return t.epochs;
  if (name == "batch_size") return t.batch_size;
  if (name == "learning_rate") return t.learning_rate;
  if (name == "optimizer") return train::to_string(t.optimizer);
  if (name == "weight_decay") return t.weight_decay;
  if (name == "warmup_ratio") return t.warmup_ratio;
  if (name == "hidden_dropout" || name == "dropout") return t.hidden_dropout.value_or(c.model.hidden_dropout);
  if (name == "attention_dropout") return t.attention_dropout.value_or(c.model.attention_dropout);
  if (name == "k_per_class") return t.k_per_class ? json(*t.k_per_class) : json(nullptr);
  if (name == "template") return t.prompt ? json(data::to_string(*t.prompt)) : json(nullptr);
  if (name == "temperature") return need_distill(c, name).temperature;
  if (name == "distill_weight") return need_distill(c, name).weight;
  if (name == "rank") return need_lora(c, name).rank;
  if (name == "alpha") return number(need_lora(c, name).alpha);
  if (name == "lora_dropout") return t.lora_dropout.value_or(need_lora(c, name).dropout);
  throw ConfigError("no config field for parameter \"" + name + "\"");
}

void set_param(ExperimentConfig& c, const std::string& name, const json& v) {
  auto& t = c.train;
  if (name == "epochs") t.epochs = get_as<std::size_t>(v, name);
  else if (name == "batch_size") t.batch_size = get_as<std::size_t>(v, name);
  else if (name == "learning_rate") t.learning_rate = get_as<double>(v, name);
  else if (name == "optimizer") t.optimizer = train::optimizer_from_string(get_as<std::string>(v, name));
  else if (name == "weight_decay") t.weight_decay = get_as<double>(v, name);
  else if (name == "warmup_ratio") t.warmup_ratio = get_as<double>(v, name);
  else if (name == "hidden_dropout") t.hidden_dropout = get_as<double>(v, name);
  else if (name == "attention_dropout") t.attention_dropout = get_as<double>(v, name);
  else if (name == "dropout") t.hidden_dropout = t.attention_dropout = get_as<double>(v, name);
  else if (name == "k_per_class") t.k_per_class = get_as<std::size_t>(v, name);
  else if (name == "template") t.prompt = data::template_from_string(get_as<std::string>(v, name));
  else if (name == "temperature") need_distill(c, name).temperature = get_as<double>(v, name);
  else if (name == "distill_weight") need_distill(c, name).weight = get_as<double>(v, name);
  else if (name == "rank") need_lora(c, name).rank = get_as<std::size_t>(v, name);
  else if (name == "alpha") need_lora(c, name).alpha = get_as<double>(v, name);
  else if (name == "lora_dropout") {
    need_lora(c, name).dropout = get_as<double>(v, name);
    t.lora_dropout.reset();
  } else {
    throw ConfigError("no config field for parameter \"" + name + "\"");
  }
}

}  // namespace

hpo::Assignment extract_assignment(const ExperimentConfig& c, const hpo::SearchSpace& space) {
  hpo::Assignment a = hpo::Assignment::object();
  for (const auto& p : space.params) a[p.name] = get_param(c, p.name);
  return a;
}

ExperimentConfig apply_assignment(ExperimentConfig c, const hpo::Assignment& a) {
  for (const auto& [name, value] : a.items()) set_param(c, name, value);
  return c;
}

void ExperimentConfig::validate() const {
  using train::Strategy;
  model.validate();
  train.validate();
  if (train.seed != seed) throw ConfigError("train.seed must equal the experiment seed");
  if (train.max_seq_len && *train.max_seq_len > model.max_seq_len)
    throw ConfigError("train.max_seq_len exceeds model.max_seq_len");

  const std::string s = train::to_string(strategy);
  if (strategy == Strategy::cd && !distill) throw ConfigError("strategy cd needs a distill section");
  if (strategy != Strategy::cd && distill) throw ConfigError("distill section given for strategy " + s);
  if (distill) distill->validate();
  if (train::uses_lora(strategy) && !lora) throw ConfigError("strategy " + s + " needs a lora section");
  if (!train::uses_lora(strategy) && lora) throw ConfigError("lora section given for strategy " + s);
  if (lora) lora->validate(model.d_model);
  const bool pbft = strategy == Strategy::pbft || strategy == Strategy::pbft_lora;
  if (pbft && !train.prompt) throw ConfigError("strategy " + s + " needs train.template");
  if (!train::uses_template(strategy) && train.prompt)
    throw ConfigError("strategy " + s + " does not take a template");

  if (data.synthetic) {
    if (data.dir) throw ConfigError("data: give either synthetic or dir, not both");
    if (data.n < 2 || data.n_eval < 2) throw ConfigError("data: synthetic split sizes must be at least 2");
  } else {
    if (!data.dir) throw ConfigError("data: dir is required when synthetic is false");
    for (const char* f : {data::kTrainFile, data::kIdEvalFile, data::kOodEvalFile}) {
      const fs::path p = *data.dir / f;
      if (!fs::is_regular_file(p)) throw ConfigError("data file not found: " + p.string());
    }
  }

  if (n_trials < 1) throw ConfigError("n_trials must be at least 1");
  if (space) {
    const hpo::SearchSpace sp = hpo::space_by_name(*space);
    const hpo::Assignment a = extract_assignment(*this, sp);
    for (const auto& p : sp.params) {
      const json& v = a.at(p.name);
      if (v.is_null()) continue;
      if (!p.contains(v))
        throw ConfigError(p.name + " = " + v.dump() + " lies outside space " + sp.name);
    }
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  json tr = c.train;
  tr.erase("seed");
  j = {{"strategy", train::to_string(c.strategy)},
       {"seed", c.seed},
       {"model", c.model},
       {"train", tr},
       {"distill", c.distill ? json(*c.distill) : json(nullptr)},
       {"lora", c.lora ? json(*c.lora) : json(nullptr)},
       {"data", c.data},
       {"space", c.space ? json(*c.space) : json(nullptr)},
       {"n_trials", c.n_trials},
       {"sampler", hpo::to_string(c.sampler)},
       {"output_dir", c.output_dir.string()}};
}

void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kTopLevelKeys.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
  const ExperimentConfig d;
  try {
    c.strategy = train::strategy_from_string(j.value("strategy", train::to_string(d.strategy)));
    c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
    c.train = j.contains("train") ? j.at("train").get<train::TrainConfig>() : d.train;
    c.distill.reset();
    c.lora.reset();
    if (auto it = j.find("distill"); it != j.end() && !it->is_null()) c.distill = it->get<train::DistillConfig>();
    if (auto it = j.find("lora"); it != j.end() && !it->is_null()) c.lora = it->get<lora::LoraConfig>();
    c.data = j.contains("data") ? j.at("data").get<DataSource>() : d.data;
    c.space.reset();
    if (auto it = j.find("space"); it != j.end() && !it->is_null()) c.space = it->get<std::string>();
    c.n_trials = j.value("n_trials", d.n_trials);
    c.sampler = hpo::sampler_from_string(j.value("sampler", hpo::to_string(d.sampler)));
    c.set_seed(j.value("seed", d.seed));
    c.output_dir = j.value("output_dir", d.output_dir.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  reject_unknown(j, json(c), "");
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

void save_config(const fs::path& path, const ExperimentConfig& c) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << json(c).dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

json run_identity(const ExperimentConfig& c) {
  json j = c;
  for (const char* k : {"output_dir", "space", "n_trials", "sampler"}) j.erase(k);
  return j;
}

}  // namespace ftlab::cli
