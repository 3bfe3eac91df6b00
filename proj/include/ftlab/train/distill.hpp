// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ftlab/tensor/tensor.hpp"
#include "json.hpp"

namespace ftlab::train {

enum class TeacherInit {
  finetuned,    // vft on the teacher prompt, then frozen
  random_twin,  // frozen copy of the student's initialization
};

std::string to_string(TeacherInit t);
TeacherInit teacher_init_from_string(std::string_view name);

struct DistillConfig {
  double temperature = 2.0;
  double weight = 0.5;
  std::size_t teacher_epochs = 5;
  TeacherInit teacher_init = TeacherInit::finetuned;
  // Learning rate of the teacher's own fine-tuning; unset uses the student's.
  std::optional<double> teacher_learning_rate;

  void validate() const;
  bool operator==(const DistillConfig&) const = default;
};

void to_json(nlohmann::json& j, const DistillConfig& c);
void from_json(const nlohmann::json& j, DistillConfig& c);

struct DistillTerms {
  Tensor total;
  Tensor ce;
  Tensor kl;  // KL(teacher || student) at temperature T, without the T^2 factor
};

/// L = (1 - w) CE(student, labels) + w T^2 KL(softmax(teacher/T) || softmax(student/T)).
/// The teacher logits are detached. ConfigError for w outside [0, 1] or T <= 0.
DistillTerms distill_terms(const Tensor& student_logits, const Tensor& teacher_logits,
                           std::span<const int> labels, const DistillConfig& config);

inline Tensor distill_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                           std::span<const int> labels, const DistillConfig& config) {
  return distill_terms(student_logits, teacher_logits, labels, config).total;
}

}  // namespace ftlab::train
