// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ftlab/data/example.hpp"
#include "ftlab/data/templates.hpp"
#include "ftlab/data/vocab.hpp"
#include "ftlab/error.hpp"
#include "ftlab/model/transformer.hpp"
#include "ftlab/train/distill.hpp"
#include "ftlab/train/metrics.hpp"
#include "ftlab/train/optimizer.hpp"
#include "json.hpp"

namespace ftlab::train {

enum class Strategy { vft, pbft, vft_lora, pbft_lora, cd };

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);
bool uses_lora(Strategy s);
bool uses_template(Strategy s);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double weight_decay = 0.0;
  double warmup_ratio = 0.0;
  // Overrides of the model / LoRA dropout rates; unset keeps the model's.
  std::optional<double> hidden_dropout;
  std::optional<double> attention_dropout;
  std::optional<double> lora_dropout;
  // Truncation length for encoding; unset uses the model's max_seq_len.
  std::optional<std::size_t> max_seq_len;
  std::optional<std::size_t> k_per_class;
  std::optional<data::Template> prompt;
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 64;

  /// ConfigError on E < 1, B < 1, lr <= 0, wd < 0, warmup outside [0, 0.2],
  /// dropout overrides outside [0, 1), or max_seq_len / k_per_class of 0.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Training aborted on a non-finite value; carries where it happened.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, std::size_t step, const std::string& what)
      : Error(what), epoch_(epoch), step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_, step_;
};

/// Sentences rendered through an optional template and encoded.
struct EncodedSet {
  std::vector<data::Encoded> rows;
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
};

EncodedSet encode_set(std::span<const data::Example> examples, const data::Vocab& vocab,
                      std::optional<data::Template> prompt, std::size_t max_len);

using Predictor = std::function<Tensor(const TokenBatch&)>;

/// Fraction of rows whose argmax logit equals the label, computed over
/// consecutive batches. DataError on an empty set.
double accuracy(const Predictor& predict, const EncodedSet& set, std::size_t batch_size);

/// Eval-mode accuracy of a model.
double evaluate(const TransformerClassifier& model, const EncodedSet& set, std::size_t batch_size);

struct TrainInputs {
  const data::Vocab* vocab = nullptr;
  const data::Splits* splits = nullptr;
  /// Required for cd: a frozen teacher (no trainable parameters).
  const TransformerClassifier* teacher = nullptr;
  std::optional<DistillConfig> distill;
  /// Identity echoed into the trace; defaults to an empty object.
  std::string run_id;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

/// Prompt the strategy trains and evaluates on: none for vft and vft_lora,
/// the configured template for pbft and pbft_lora, and the configured
/// template or cd_student for cd.
std::optional<data::Template> student_prompt(Strategy s, const TrainConfig& config);

/// Runs `config.epochs` epochs of shuffled minibatch training on the trainable
/// parameters of `model`, evaluating ID and OOD accuracy after each epoch.
/// Strategy preconditions (ConfigError): *_lora needs attached adapters and
/// the others must have none; pbft* needs a template; cd needs a distill
/// config and a frozen teacher. A non-finite value raises TrainingError.
MetricsTrace train(TransformerClassifier& model, const TrainInputs& inputs,
                   const TrainConfig& config, Strategy strategy);

}  // namespace ftlab::train
