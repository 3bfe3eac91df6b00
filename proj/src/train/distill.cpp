// SPDX-License-Identifier: Apache-2.0
#include "ftlab/train/distill.hpp"

#include "ftlab/error.hpp"
#include "ftlab/tensor/ops.hpp"

namespace ftlab::train {

std::string to_string(TeacherInit t) {
  return t == TeacherInit::finetuned ? "finetuned" : "random_twin";
}

TeacherInit teacher_init_from_string(std::string_view name) {
  if (name == "finetuned") return TeacherInit::finetuned;
  if (name == "random_twin") return TeacherInit::random_twin;
  throw ConfigError("unknown teacher_init \"" + std::string(name) + "\"");
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("distill temperature must be positive");
  if (!(weight >= 0.0 && weight <= 1.0)) throw ConfigError("distill weight must be in [0, 1]");
  if (teacher_learning_rate && !(*teacher_learning_rate > 0.0))
    throw ConfigError("distill teacher_learning_rate must be positive");
}

void to_json(nlohmann::json& j, const DistillConfig& c) {
  j = {{"temperature", c.temperature},
       {"weight", c.weight},
       {"teacher_epochs", c.teacher_epochs},
       {"teacher_init", to_string(c.teacher_init)},
       {"teacher_learning_rate", nullptr}};
  if (c.teacher_learning_rate) j["teacher_learning_rate"] = *c.teacher_learning_rate;
}

void from_json(const nlohmann::json& j, DistillConfig& c) {
  const DistillConfig d;
  c.temperature = j.value("temperature", d.temperature);
  c.weight = j.value("weight", d.weight);
  c.teacher_epochs = j.value("teacher_epochs", d.teacher_epochs);
  c.teacher_init = teacher_init_from_string(j.value("teacher_init", to_string(d.teacher_init)));
  c.teacher_learning_rate.reset();
  if (auto it = j.find("teacher_learning_rate"); it != j.end() && !it->is_null())
    c.teacher_learning_rate = it->get<double>();
}

DistillTerms distill_terms(const Tensor& student_logits, const Tensor& teacher_logits,
                           std::span<const int> labels, const DistillConfig& config) {
  config.validate();
  const double w = config.weight;
  const double t = config.temperature;
  Tensor ce = ops::cross_entropy(student_logits, labels);
  Tensor kl = ops::kl_divergence(teacher_logits.detach(), student_logits, t);
  Tensor total = ops::add(ops::scale(ce, 1.0 - w), ops::scale(kl, w * t * t));
  return {total, ce, kl};
}

}  // namespace ftlab::train
