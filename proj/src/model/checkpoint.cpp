// SPDX-License-Identifier: Apache-2.0
#include "ftlab/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ftlab/error.hpp"
#include "ftlab/lora/lora.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host byte order and assumes little-endian");

namespace ftlab::checkpoint {
namespace {

constexpr char kMagic[8] = {'F', 'T', 'L', 'A', 'B', 'C', 'K', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw ParseError(0, "truncated checkpoint: " + path.string());
  return value;
}

}  // namespace

void write_container(const std::filesystem::path& path, const Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::string header = c.header.dump();
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(out, c.tensors.size());
  for (const auto& t : c.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, t.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError(0, "not a checkpoint file: " + path.string());
  }
  Container c;
  const auto header_len = get<std::uint64_t>(in, path);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError(0, "truncated checkpoint header: " + path.string());
  c.header = nlohmann::json::parse(header);
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name.resize(get<std::uint32_t>(in, path));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    t.trainable = get<std::uint8_t>(in, path) != 0;
    const auto rank = get<std::uint32_t>(in, path);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(in, path));
    t.values.resize(numel(t.shape));
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw ParseError(0, "truncated tensor '" + t.name + "' in " + path.string());
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save(const TransformerClassifier& model, const std::filesystem::path& path,
          const nlohmann::json& meta) {
  Container c;
  c.header["kind"] = "model";
  c.header["model"] = model.config();
  c.header["lora"] = nullptr;
  if (auto cfg = lora::attached_config(model)) c.header["lora"] = *cfg;
  c.header["meta"] = meta;
  for (const auto& p : model.parameters()) {
    c.tensors.push_back({p.name, p.tensor.requires_grad(), p.tensor.shape(),
                         std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  write_container(path, c);
}

Loaded load(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.header.value("kind", "") != "model") {
    throw ParseError(0, "checkpoint is not a full model: " + path.string());
  }
  const ModelConfig config = c.header.at("model").get<ModelConfig>();
  Rng scratch(0);
  TransformerClassifier model = TransformerClassifier::build(config, scratch);
  if (!c.header.at("lora").is_null()) {
    lora::inject(model, c.header.at("lora").get<lora::LoraConfig>(), scratch);
  }
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : c.tensors) by_name[t.name] = &t;
  auto params = model.parameters();
  if (params.size() != c.tensors.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(c.tensors.size()) +
                     " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ShapeError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw ShapeError("tensor '" + p.name + "' has shape " + to_string(it->second->shape) +
                       ", model expects " + to_string(p.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.mutable_data().begin());
    p.tensor.set_requires_grad(it->second->trainable);
  }
  return {std::move(model), c.header.value("meta", nlohmann::json::object())};
}

}  // namespace ftlab::checkpoint
