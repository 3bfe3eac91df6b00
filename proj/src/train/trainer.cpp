// SPDX-License-Identifier: Apache-2.0
#include "ftlab/train/trainer.hpp"

#include <chrono>
#include <numeric>

#include "ftlab/data/sampling.hpp"
#include "ftlab/lora/lora.hpp"
#include "ftlab/tensor/memory.hpp"
#include "ftlab/tensor/ops.hpp"
#include "ftlab/train/schedule.hpp"

namespace ftlab::train {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::vft: return "vft";
    case Strategy::pbft: return "pbft";
    case Strategy::vft_lora: return "vft_lora";
    case Strategy::pbft_lora: return "pbft_lora";
    case Strategy::cd: return "cd";
  }
  throw ConfigError("unknown strategy");
}

Strategy strategy_from_string(std::string_view name) {
  for (auto s : {Strategy::vft, Strategy::pbft, Strategy::vft_lora, Strategy::pbft_lora,
                 Strategy::cd}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy \"" + std::string(name) + "\"");
}

bool uses_lora(Strategy s) { return s == Strategy::vft_lora || s == Strategy::pbft_lora; }

bool uses_template(Strategy s) {
  return s == Strategy::pbft || s == Strategy::pbft_lora || s == Strategy::cd;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  auto rate = [&](const std::optional<double>& p, const char* name) {
    if (p && !(*p >= 0.0 && *p < 1.0)) fail(std::string(name) + " must be in [0, 1)");
  };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (eval_batch_size < 1) fail("eval_batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 0.2)) fail("warmup_ratio must be in [0, 0.2]");
  rate(hidden_dropout, "hidden_dropout");
  rate(attention_dropout, "attention_dropout");
  rate(lora_dropout, "lora_dropout");
  if (max_seq_len && *max_seq_len < 1) fail("max_seq_len must be >= 1");
  if (k_per_class && *k_per_class < 1) fail("k_per_class must be >= 1");
}

namespace {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"optimizer", to_string(c.optimizer)},
       {"weight_decay", c.weight_decay},
       {"warmup_ratio", c.warmup_ratio},
       {"hidden_dropout", optional_json(c.hidden_dropout)},
       {"attention_dropout", optional_json(c.attention_dropout)},
       {"lora_dropout", optional_json(c.lora_dropout)},
       {"max_seq_len", optional_json(c.max_seq_len)},
       {"k_per_class", optional_json(c.k_per_class)},
       {"template", c.prompt ? nlohmann::json(data::to_string(*c.prompt)) : nlohmann::json(nullptr)},
       {"seed", c.seed},
       {"eval_batch_size", c.eval_batch_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.optimizer = optimizer_from_string(j.value("optimizer", to_string(d.optimizer)));
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.warmup_ratio = j.value("warmup_ratio", d.warmup_ratio);
  c.hidden_dropout = optional_from<double>(j, "hidden_dropout");
  c.attention_dropout = optional_from<double>(j, "attention_dropout");
  c.lora_dropout = optional_from<double>(j, "lora_dropout");
  c.max_seq_len = optional_from<std::size_t>(j, "max_seq_len");
  c.k_per_class = optional_from<std::size_t>(j, "k_per_class");
  const auto t = optional_from<std::string>(j, "template");
  c.prompt = t ? std::optional(data::template_from_string(*t)) : std::nullopt;
  c.seed = j.value("seed", d.seed);
  c.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
}

EncodedSet encode_set(std::span<const data::Example> examples, const data::Vocab& vocab,
                      std::optional<data::Template> prompt, std::size_t max_len) {
  EncodedSet s;
  s.rows.reserve(examples.size());
  s.labels.reserve(examples.size());
  for (const auto& e : examples) {
    data::validate(e);
    s.rows.push_back(vocab.encode(prompt ? data::apply_template(e.sentence, *prompt) : e.sentence,
                                  max_len));
    s.labels.push_back(e.label);
  }
  return s;
}

namespace {

TokenBatch gather(const EncodedSet& set, std::span<const std::size_t> idx) {
  std::vector<data::Encoded> rows;
  rows.reserve(idx.size());
  for (auto i : idx) rows.push_back(set.rows[i]);
  return data::collate(rows);
}

std::size_t argmax_row(std::span<const double> logits, std::size_t row, std::size_t classes) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (logits[row * classes + c] > logits[row * classes + best]) best = c;
  }
  return best;
}

}  // namespace

double accuracy(const Predictor& predict, const EncodedSet& set, std::size_t batch_size) {
  if (set.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = predict(gather(set, idx));
    const std::size_t classes = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (static_cast<int>(argmax_row(logits.data(), r, classes)) == set.labels[idx[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double evaluate(const TransformerClassifier& model, const EncodedSet& set, std::size_t batch_size) {
  Rng unused(0);
  return accuracy([&](const TokenBatch& b) { return model.forward(b, false, unused); }, set,
                  batch_size);
}

std::optional<data::Template> student_prompt(Strategy s, const TrainConfig& config) {
  switch (s) {
    case Strategy::vft:
    case Strategy::vft_lora: return std::nullopt;
    case Strategy::pbft:
    case Strategy::pbft_lora: return config.prompt;
    case Strategy::cd: return config.prompt.value_or(data::Template::cd_student);
  }
  return std::nullopt;
}

namespace {

void check_preconditions(const TransformerClassifier& model, const TrainInputs& in,
                         const TrainConfig& config, Strategy strategy) {
  const std::string name = to_string(strategy);
  if (!in.vocab || !in.splits) throw ConfigError("train: vocab and splits are required");
  if (in.splits->train.empty()) throw DataError("train: training split is empty");
  if (uses_lora(strategy) && !model.has_adapters()) {
    throw ConfigError(name + " requires LoRA adapters to be injected");
  }
  if (!uses_lora(strategy) && model.has_adapters()) {
    throw ConfigError(name + " does not train LoRA adapters, but the model has them");
  }
  if ((strategy == Strategy::pbft || strategy == Strategy::pbft_lora) && !config.prompt) {
    throw ConfigError(name + " requires a template");
  }
  if ((strategy == Strategy::vft || strategy == Strategy::vft_lora) && config.prompt) {
    throw ConfigError(name + " trains on raw sentences; remove the template");
  }
  if (strategy == Strategy::cd) {
    if (!in.distill) throw ConfigError("cd requires a distill config");
    in.distill->validate();
    if (!in.teacher) throw ConfigError("cd requires a teacher model");
    if (!in.teacher->trainable_parameters().empty()) {
      throw ConfigError("cd teacher must be frozen");
    }
  }
  if (in.vocab->size() > model.config().vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(in.vocab->size()) +
                      " tokens but the model only embeds " +
                      std::to_string(model.config().vocab_size));
  }
  if (config.max_seq_len && *config.max_seq_len > model.config().max_seq_len) {
    throw ConfigError("max_seq_len exceeds the model's positional table");
  }
}

std::int64_t parameter_bytes(const TransformerClassifier& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += static_cast<std::int64_t>(p.tensor.numel() * sizeof(double));
  return n;
}

/// Eval-mode teacher logits for every training row, [N x C] row-major.
std::vector<double> teacher_logits(const TransformerClassifier& teacher, const EncodedSet& set,
                                   std::size_t batch_size) {
  NoGradGuard no_grad;
  Rng unused(0);
  std::vector<double> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.resize(std::min(set.size(), start + batch_size) - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = teacher.forward(gather(set, idx), false, unused);
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return out;
}

}  // namespace

MetricsTrace train(TransformerClassifier& model, const TrainInputs& in, const TrainConfig& config,
                   Strategy strategy) {
  config.validate();
  check_preconditions(model, in, config, strategy);
  // Peaks are taken relative to this point so tensors owned by anything
  // other than this run do not count; the run's own weights are added back.
  const std::int64_t entry_bytes = memory::live_bytes();
  std::int64_t resident_bytes = parameter_bytes(model);
  if (strategy == Strategy::cd) resident_bytes += parameter_bytes(*in.teacher);

  if (config.hidden_dropout || config.attention_dropout) {
    model.set_dropout(config.hidden_dropout.value_or(model.config().hidden_dropout),
                      config.attention_dropout.value_or(model.config().attention_dropout));
  }
  if (config.lora_dropout && model.has_adapters()) lora::set_dropout(model, *config.lora_dropout);

  const Rng root(config.seed);
  Rng order_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);
  Rng sample_rng = root.fork(3);

  const std::size_t max_len = config.max_seq_len.value_or(model.config().max_seq_len);
  const auto prompt = student_prompt(strategy, config);
  std::vector<data::Example> train_examples =
      config.k_per_class ? data::few_shot_sample(in.splits->train, *config.k_per_class, sample_rng)
                         : in.splits->train;
  const EncodedSet train_set = encode_set(train_examples, *in.vocab, prompt, max_len);
  const EncodedSet id_set = encode_set(in.splits->id_eval, *in.vocab, prompt, max_len);
  const EncodedSet ood_set = encode_set(in.splits->ood_eval, *in.vocab, prompt, max_len);

  std::vector<double> teacher_out;
  std::size_t classes = model.config().n_classes;
  if (strategy == Strategy::cd) {
    const EncodedSet teacher_set =
        encode_set(train_examples, *in.vocab, data::Template::cd_teacher, max_len);
    teacher_out = teacher_logits(*in.teacher, teacher_set, config.eval_batch_size);
  }

  std::vector<Tensor> params;
  for (auto& p : model.trainable_parameters()) params.push_back(p.tensor);
  Optimizer optimizer({.kind = config.optimizer, .weight_decay = config.weight_decay}, params);

  const std::size_t n = train_set.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches;

  MetricsTrace trace;
  trace.run_id = in.run_id;
  trace.strategy = to_string(strategy);
  trace.hyperparameters = in.hyperparameters;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    reset_memory_proxy();
    const auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double kl_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          b * config.batch_size, std::min(config.batch_size, n - b * config.batch_size));
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(train_set.labels[i]);
      try {
        const Tensor logits = model.forward(gather(train_set, idx), true, dropout_rng);
        Tensor loss;
        if (strategy == Strategy::cd) {
          std::vector<double> rows;
          rows.reserve(idx.size() * classes);
          for (auto i : idx) {
            rows.insert(rows.end(), teacher_out.begin() + i * classes,
                        teacher_out.begin() + (i + 1) * classes);
          }
          const auto terms =
              distill_terms(logits, Tensor::from({idx.size(), classes}, rows), labels, *in.distill);
          loss = terms.total;
          kl_sum += terms.kl.item() * static_cast<double>(idx.size());
        } else {
          loss = ops::cross_entropy(logits, labels);
        }
        loss_sum += loss.item() * static_cast<double>(idx.size());
        loss.backward();
        optimizer.step(lr_at(step, total_steps, config.warmup_ratio, config.learning_rate));
        optimizer.zero_grad();
      } catch (const NonFiniteError& e) {
        throw TrainingError(epoch, step,
                            "non-finite value in " + e.op() + " at epoch " +
                                std::to_string(epoch) + ", step " + std::to_string(step) + ": " +
                                e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.id_acc = evaluate(model, id_set, config.eval_batch_size);
    rec.ood_acc = evaluate(model, ood_set, config.eval_batch_size);
    rec.iter_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.mem_bytes = memory_proxy() - entry_bytes + resident_bytes;
    if (strategy == Strategy::cd) rec.kl = kl_sum / static_cast<double>(n);
    trace.epochs.push_back(rec);
  }
  return trace;
}

}  // namespace ftlab::train
