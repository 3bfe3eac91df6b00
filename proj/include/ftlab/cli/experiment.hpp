// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ftlab/hpo/optimize.hpp"
#include "ftlab/hpo/space.hpp"
#include "ftlab/lora/lora.hpp"
#include "ftlab/model/config.hpp"
#include "ftlab/train/distill.hpp"
#include "ftlab/train/trainer.hpp"
#include "json.hpp"

namespace ftlab::cli {

/// Where a run's splits come from: generated in memory, or a directory
/// written by `prepare`.
struct DataSource {
  bool synthetic = true;
  std::size_t n = 2000;      // synthetic train size
  std::size_t n_eval = 500;  // synthetic size of each eval split
  // Generator seed; unset follows the experiment seed.
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> dir;

  bool operator==(const DataSource&) const = default;
};

void to_json(nlohmann::json& j, const DataSource& d);
void from_json(const nlohmann::json& j, DataSource& d);

struct ExperimentConfig {
  train::Strategy strategy = train::Strategy::vft;
  ModelConfig model;
  train::TrainConfig train;  // train.seed mirrors `seed`
  std::optional<train::DistillConfig> distill;
  std::optional<lora::LoraConfig> lora;
  DataSource data;
  std::optional<std::string> space;
  std::size_t n_trials = 50;
  hpo::Sampler sampler = hpo::Sampler::tpe;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";

  /// Sets the experiment seed and the training seed together.
  void set_seed(std::uint64_t s);

  /// ConfigError on: invalid model / train / distill / lora sections; a
  /// distill section without strategy cd (or cd without one); a lora section
  /// without a *_lora strategy (or the reverse); a template missing for pbft
  /// or present for vft; a data directory lacking any split file; a space
  /// whose parameters the strategy cannot take, or any configured value
  /// outside the declared space; train.seed differing from seed.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Reads and validates a config file. ConfigError names the path when the
/// file is missing or is not valid JSON.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Pretty-printed JSON with every default written out.
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

/// The space's parameters as currently set in the config, in space order.
/// Unset optional fields (k_per_class, template) come out as null.
hpo::Assignment extract_assignment(const ExperimentConfig& c, const hpo::SearchSpace& space);

/// Copy of `c` with every entry of `a` written into its field. "dropout"
/// sets both the hidden and attention overrides; "lora_dropout" the adapter
/// rate. ConfigError on a name the config has no field for.
ExperimentConfig apply_assignment(ExperimentConfig c, const hpo::Assignment& a);

/// The part of a config that determines a run's results: everything except
/// the output directory and the sweep settings (space, n_trials, sampler).
nlohmann::json run_identity(const ExperimentConfig& c);

}  // namespace ftlab::cli
