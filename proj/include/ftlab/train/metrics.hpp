// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ftlab::train {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch's examples
  double id_acc = 0.0;
  double ood_acc = 0.0;
  std::optional<double> iter_time_s;  // wall clock for train + eval
  // Peak tensor bytes of the run during the epoch: its weights (and the
  // teacher's) plus everything allocated since training began.
  std::int64_t mem_bytes = 0;
  std::optional<double> kl;           // cd only: mean KL term, kept in memory
};

struct MetricsTrace {
  std::string run_id;
  std::string strategy;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<EpochRecord> epochs;

  double max_id_acc() const;
  double max_ood_acc() const;
  /// Largest recorded epoch time; nullopt when no epoch carries one.
  std::optional<double> max_iter_time() const;
  std::int64_t max_mem_bytes() const;
  const EpochRecord& final_epoch() const;
};

/// Writes one JSON object per epoch with exactly the keys run_id, strategy,
/// epoch, loss, id_acc, ood_acc, iter_time_s, mem_bytes; the first line also
/// carries "hyperparameters". iter_time_s is written as null unless
/// `inline_timing` is set, so reruns produce byte-identical files; measured
/// times go to the timing sidecar instead.
void write_trace(const std::filesystem::path& path, const MetricsTrace& trace,
                 bool inline_timing = false);

/// Sidecar with one {"run_id", "epoch", "iter_time_s"} object per epoch.
void write_timing(const std::filesystem::path& path, const MetricsTrace& trace);

/// Reads a trace file. When `timing` names an existing sidecar, its times
/// fill epochs whose iter_time_s is null. ParseError on malformed lines.
MetricsTrace read_trace(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& timing = std::nullopt);

/// Peak concurrently-live tensor bytes since the last reset.
std::int64_t memory_proxy();
void reset_memory_proxy();

/// 16 hex digits of a FNV-1a hash over the compact JSON dump of `identity`.
std::string make_run_id(const nlohmann::json& identity);

}  // namespace ftlab::train
