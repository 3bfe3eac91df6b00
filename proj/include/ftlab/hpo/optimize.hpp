// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ftlab/hpo/tpe.hpp"

namespace ftlab::hpo {

enum class Sampler { tpe, random };

std::string to_string(Sampler s);
Sampler sampler_from_string(std::string_view name);

struct Evaluation {
  double objective = 0.0;
  nlohmann::json aux = nlohmann::json::object();
};

/// Scores one assignment. Throwing, or returning a non-finite objective,
/// marks the trial failed.
using Objective = std::function<Evaluation(const Assignment&, std::size_t trial_id)>;

/// Append-only JSONL trial log, one record per trial, flushed per record.
class TrialStore {
 public:
  /// Truncates any existing file at `path`.
  explicit TrialStore(const std::filesystem::path& path);
  void append(const Trial& t);
  static std::vector<Trial> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct OptimizeOptions {
  Sampler sampler = Sampler::tpe;
  TpeKnobs knobs;
  /// Recorded as Trial::seed; the seed the objective trains with.
  std::uint64_t trial_seed = 0;
  TrialStore* store = nullptr;
};

struct OptimizeResult {
  Trial best;
  std::vector<Trial> trials;
};

/// Sequential ask / evaluate / tell loop. Best is the highest objective
/// among ok trials, ties to the earliest. Error when every trial failed;
/// ConfigError when n_trials is 0.
OptimizeResult optimize(const SearchSpace& space, const Objective& objective, std::size_t n_trials,
                        Rng& rng, const OptimizeOptions& options = {});

}  // namespace ftlab::hpo
