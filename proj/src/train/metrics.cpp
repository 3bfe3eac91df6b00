// SPDX-License-Identifier: Apache-2.0
#include "ftlab/train/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "ftlab/error.hpp"
#include "ftlab/tensor/memory.hpp"

namespace ftlab::train {

double MetricsTrace::max_id_acc() const {
  double m = 0.0;
  for (const auto& e : epochs) m = std::max(m, e.id_acc);
  return m;
}

double MetricsTrace::max_ood_acc() const {
  double m = 0.0;
  for (const auto& e : epochs) m = std::max(m, e.ood_acc);
  return m;
}

std::optional<double> MetricsTrace::max_iter_time() const {
  std::optional<double> m;
  for (const auto& e : epochs) {
    if (e.iter_time_s) m = std::max(m.value_or(*e.iter_time_s), *e.iter_time_s);
  }
  return m;
}

std::int64_t MetricsTrace::max_mem_bytes() const {
  std::int64_t m = 0;
  for (const auto& e : epochs) m = std::max(m, e.mem_bytes);
  return m;
}

const EpochRecord& MetricsTrace::final_epoch() const {
  if (epochs.empty()) throw DataError("trace has no epochs");
  return epochs.back();
}

void write_trace(const std::filesystem::path& path, const MetricsTrace& trace, bool inline_timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  bool first = true;
  for (const auto& e : trace.epochs) {
    nlohmann::ordered_json j;
    j["run_id"] = trace.run_id;
    j["strategy"] = trace.strategy;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["id_acc"] = e.id_acc;
    j["ood_acc"] = e.ood_acc;
    if (inline_timing && e.iter_time_s) {
      j["iter_time_s"] = *e.iter_time_s;
    } else {
      j["iter_time_s"] = nullptr;
    }
    j["mem_bytes"] = e.mem_bytes;
    if (first) j["hyperparameters"] = trace.hyperparameters;
    first = false;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_timing(const std::filesystem::path& path, const MetricsTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : trace.epochs) {
    nlohmann::ordered_json j;
    j["run_id"] = trace.run_id;
    j["epoch"] = e.epoch;
    j["iter_time_s"] = e.iter_time_s ? nlohmann::ordered_json(*e.iter_time_s) : nullptr;
    out << j.dump() << '\n';
  }
}

namespace {

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const std::exception& ex) {
      throw ParseError(lineno, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
}

}  // namespace

MetricsTrace read_trace(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& timing) {
  MetricsTrace t;
  bool first = true;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    if (first) {
      t.run_id = j.at("run_id").get<std::string>();
      t.strategy = j.at("strategy").get<std::string>();
      if (j.contains("hyperparameters")) t.hyperparameters = j.at("hyperparameters");
      first = false;
    }
    EpochRecord e;
    e.epoch = j.at("epoch").get<std::size_t>();
    e.loss = j.at("loss").get<double>();
    e.id_acc = j.at("id_acc").get<double>();
    e.ood_acc = j.at("ood_acc").get<double>();
    if (!j.at("iter_time_s").is_null()) e.iter_time_s = j.at("iter_time_s").get<double>();
    e.mem_bytes = j.at("mem_bytes").get<std::int64_t>();
    t.epochs.push_back(e);
  });
  if (timing && std::filesystem::exists(*timing)) {
    for_each_json_line(*timing, [&](const nlohmann::json& j) {
      const auto epoch = j.at("epoch").get<std::size_t>();
      if (j.at("iter_time_s").is_null()) return;
      for (auto& e : t.epochs) {
        if (e.epoch == epoch && !e.iter_time_s) e.iter_time_s = j.at("iter_time_s").get<double>();
      }
    });
  }
  return t;
}

std::int64_t memory_proxy() { return memory::peak_bytes(); }
void reset_memory_proxy() { memory::reset_peak(); }

std::string make_run_id(const nlohmann::json& identity) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : identity.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ftlab::train
