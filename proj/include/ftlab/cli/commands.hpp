// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ftlab/cli/experiment.hpp"
#include "ftlab/data/example.hpp"
#include "ftlab/data/vocab.hpp"
#include "ftlab/model/transformer.hpp"
#include "ftlab/train/metrics.hpp"
#include "json.hpp"

namespace ftlab::cli {

/// Run-directory file names.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kTraceFile = "trace.jsonl";
inline constexpr const char* kTimingFile = "timing.jsonl";
inline constexpr const char* kTeacherTraceFile = "teacher_trace.jsonl";
inline constexpr const char* kTeacherTimingFile = "teacher_timing.jsonl";
inline constexpr const char* kLogFile = "run.log";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kAdapterFile = "adapters.ckpt";
inline constexpr const char* kVocabFile = "vocab.json";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kStatsFile = "stats.json";
inline constexpr const char* kTrialsFile = "trials.jsonl";
inline constexpr const char* kBestConfigFile = "best_config.json";

/// Splits named by the config's data source.
data::Splits load_splits(const ExperimentConfig& c);

/// Training-split vocabulary capped at the model's embedding table size.
data::Vocab make_vocab(const ExperimentConfig& c, const data::Splits& splits);

struct RunResult {
  train::MetricsTrace trace;
  TransformerClassifier model;
  std::optional<train::MetricsTrace> teacher_trace;
  /// Base-weight hash taken right after adapter injection (lora strategies).
  std::optional<std::uint64_t> base_hash_init;
  /// Teacher hash before and after student training (cd).
  std::optional<std::uint64_t> teacher_hash_before, teacher_hash_after;
};

/// One complete run in memory. Stream 1 of Rng(seed) initializes the model
/// and the adapters; the trainer forks its own streams from the same seed.
/// For cd with a finetuned teacher, a copy of the initial model is first
/// trained as pbft on the cd_teacher prompt for teacher_epochs and frozen.
RunResult run_experiment(const ExperimentConfig& c, const data::Splits& splits,
                         const data::Vocab& vocab);

struct PrepareOptions {
  bool synthetic = false;
  std::size_t n = 2000;  // synthetic train size; eval splits get n / 4
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> cola_train, cola_id_eval, cola_ood_eval;
  bool balance = true;  // CoLA train and id_eval only
  std::filesystem::path out = "data";
};

/// Writes train / id_eval / ood_eval JSONL files and stats.json into
/// `out`; returns the stats object.
nlohmann::json cmd_prepare(const PrepareOptions& o);

struct TrainOptions {
  bool inline_timing = false;
};

/// Runs one experiment into c.output_dir: resolved config, trace, timing
/// sidecar, checkpoint(s), vocabulary, summary, and run.log.
RunResult cmd_train(const ExperimentConfig& c, const TrainOptions& o = {});

/// Sweeps c.space for c.n_trials trials. Every trial trains with the
/// experiment seed and scores the final-epoch ID accuracy. Writes
/// trials.jsonl, per-trial traces under trials/, best_config.json (the base
/// config with the best assignment applied), and run.log.
hpo::OptimizeResult cmd_optimize(const ExperimentConfig& c);

struct ReportRow {
  std::string method;
  double max_id_acc = 0.0;
  double max_ood_acc = 0.0;
  std::optional<double> max_iter_time_s;
  double max_mem_mb = 0.0;  // bytes / 2^20
  std::size_t runs = 0;
};

/// Trace files under the given paths: a file is taken as is, a directory is
/// searched recursively for trace.jsonl. Inputs keep their order, the hits
/// within one directory are sorted; duplicates are dropped.
std::vector<std::filesystem::path> find_traces(const std::vector<std::filesystem::path>& inputs);

/// Per-method maxima over every epoch of every trace, methods in order of
/// first appearance. With `timing_sidecars`, a timing.jsonl next to a trace
/// fills its null times; otherwise only the trace is read, so the result is
/// reproducible. DataError when `traces` is empty.
std::vector<ReportRow> summarize(const std::vector<std::filesystem::path>& traces,
                                 bool timing_sidecars = false);

/// The accuracy and efficiency tables, values to 4 decimals.
std::string format_report(const std::vector<ReportRow>& rows);

/// Per-epoch CSV of every trace for plotting; sidecars as in summarize().
void write_curves(const std::filesystem::path& path, const std::vector<std::filesystem::path>& traces,
                  bool timing_sidecars = false);

}  // namespace ftlab::cli
