// SPDX-License-Identifier: Apache-2.0
#include "ftlab/lora/lora.hpp"

#include <map>

#include "ftlab/error.hpp"
#include "ftlab/kernels/kernels.hpp"
#include "ftlab/model/checkpoint.hpp"

namespace ftlab::lora {
namespace {

constexpr double kInitStd = 0.02;

Projection& projection(TransformerBlock& blk, Target t) {
  switch (t) {
    case Target::Q: return blk.q;
    case Target::K: return blk.k;
    case Target::V: return blk.v;
    case Target::O: return blk.o;
  }
  throw Error("unknown LoRA target");
}

const Projection& projection(const TransformerBlock& blk, Target t) {
  return projection(const_cast<TransformerBlock&>(blk), t);
}

}  // namespace

std::optional<LoraConfig> attached_config(const TransformerClassifier& model) {
  if (model.blocks().empty()) return std::nullopt;
  LoraConfig cfg;
  cfg.targets.clear();
  for (Target t : {Target::Q, Target::K, Target::V, Target::O}) {
    const Projection& p = projection(model.blocks().front(), t);
    if (p.adapter) {
      cfg.rank = p.adapter->rank;
      cfg.alpha = p.adapter->alpha;
      cfg.dropout = p.adapter->dropout;
      cfg.targets.insert(t);
    }
  }
  if (cfg.targets.empty()) return std::nullopt;
  return cfg;
}

std::string to_string(Target t) {
  switch (t) {
    case Target::Q: return "q";
    case Target::K: return "k";
    case Target::V: return "v";
    case Target::O: return "o";
  }
  return "?";
}

Target target_from_string(const std::string& name) {
  if (name == "q" || name == "Q") return Target::Q;
  if (name == "k" || name == "K") return Target::K;
  if (name == "v" || name == "V") return Target::V;
  if (name == "o" || name == "O") return Target::O;
  throw ConfigError("unknown LoRA target '" + name + "' (expected q, k, v or o)");
}

void LoraConfig::validate(std::size_t d_model) const {
  if (rank < 1) throw ConfigError("lora rank must be positive");
  if (rank > d_model) {
    throw ConfigError("lora rank " + std::to_string(rank) + " exceeds d_model " +
                      std::to_string(d_model));
  }
  if (!(alpha > 0.0)) throw ConfigError("lora alpha must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("lora dropout must be in [0, 1)");
  if (targets.empty()) throw ConfigError("lora target set is empty");
}

void to_json(nlohmann::json& j, const LoraConfig& c) {
  std::vector<std::string> names;
  for (Target t : c.targets) names.push_back(to_string(t));
  j = nlohmann::json{{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}, {"targets", names}};
}

void from_json(const nlohmann::json& j, LoraConfig& c) {
  LoraConfig d;
  c.rank = j.value("rank", d.rank);
  c.alpha = j.value("alpha", d.alpha);
  c.dropout = j.value("dropout", d.dropout);
  if (j.contains("targets")) {
    c.targets.clear();
    for (const auto& name : j.at("targets")) c.targets.insert(target_from_string(name.get<std::string>()));
  } else {
    c.targets = d.targets;
  }
}

void inject(TransformerClassifier& model, const LoraConfig& config, Rng& rng) {
  config.validate(model.config().d_model);
  if (model.has_adapters()) throw Error("model already carries LoRA adapters");
  model.set_all_trainable(false);
  for (auto& blk : model.blocks()) {
    for (Target t : config.targets) {
      Projection& p = projection(blk, t);
      const std::size_t out = p.weight.dim(0), in = p.weight.dim(1);
      LoraAdapter a;
      a.rank = config.rank;
      a.alpha = config.alpha;
      a.dropout = config.dropout;
      a.a = Tensor::zeros({config.rank, in}, true);
      for (double& v : a.a.mutable_data()) v = rng.normal(0.0, kInitStd);
      a.b = Tensor::zeros({out, config.rank}, true);
      p.adapter = std::move(a);
    }
  }
  model.parameter("head.weight").set_requires_grad(true);
  model.parameter("head.bias").set_requires_grad(true);
}

void merge(TransformerClassifier& model) {
  if (!model.has_adapters()) throw Error("merge: no LoRA adapters attached");
  const auto& k = kernels::active();
  for (auto& blk : model.blocks()) {
    for (Target t : {Target::Q, Target::K, Target::V, Target::O}) {
      Projection& p = projection(blk, t);
      if (!p.adapter) continue;
      const LoraAdapter& a = *p.adapter;
      const std::size_t out = p.weight.dim(0), in = p.weight.dim(1), r = a.rank;
      const double s = a.scaling();
      auto w = p.weight.mutable_data();
      const auto A = a.a.data();
      const auto B = a.b.data();
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t j = 0; j < r; ++j) k.axpy(s * B[o * r + j], A.data() + j * in, w.data() + o * in, in);
      }
      p.adapter.reset();
    }
  }
}

void set_dropout(TransformerClassifier& model, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("lora dropout must be in [0, 1)");
  for (auto& b : model.blocks()) {
    for (Projection* proj : {&b.q, &b.k, &b.v, &b.o}) {
      if (proj->adapter) proj->adapter->dropout = p;
    }
  }
}

std::size_t adapter_parameter_count(const TransformerClassifier& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) {
    if (is_adapter_parameter(p.name)) n += p.tensor.numel();
  }
  return n;
}

void save_adapters(const TransformerClassifier& model, const std::filesystem::path& path) {
  if (!model.has_adapters()) throw Error("save_adapters: no LoRA adapters attached");
  checkpoint::Container c;
  c.header["kind"] = "adapters";
  c.header["model"] = model.config();
  c.header["lora"] = *attached_config(model);
  c.header["meta"] = nlohmann::json::object();
  for (const auto& p : model.parameters()) {
    if (!is_adapter_parameter(p.name) && !is_head_parameter(p.name)) continue;
    c.tensors.push_back({p.name, p.tensor.requires_grad(), p.tensor.shape(),
                         std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  checkpoint::write_container(path, c);
}

void load_adapters(TransformerClassifier& model, const std::filesystem::path& path) {
  checkpoint::Container c = checkpoint::read_container(path);
  if (c.header.value("kind", "") != "adapters") {
    throw ParseError(0, "not an adapter checkpoint: " + path.string());
  }
  const auto cfg = c.header.at("lora").get<LoraConfig>();
  if (!model.has_adapters()) {
    Rng scratch(0);
    inject(model, cfg, scratch);
  }
  std::map<std::string, Tensor> targets;
  for (auto& p : model.parameters()) targets[p.name] = p.tensor;
  for (const auto& t : c.tensors) {
    auto it = targets.find(t.name);
    if (it == targets.end()) throw ShapeError("adapter checkpoint tensor '" + t.name + "' has no counterpart in the model");
    if (it->second.shape() != t.shape) {
      throw ShapeError("adapter tensor '" + t.name + "' has shape " + ftlab::to_string(t.shape) +
                       ", model expects " + ftlab::to_string(it->second.shape()));
    }
    std::copy(t.values.begin(), t.values.end(), it->second.mutable_data().begin());
  }
}

}  // namespace ftlab::lora
