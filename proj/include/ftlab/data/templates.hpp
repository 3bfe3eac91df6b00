// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace ftlab::data {

enum class Template { minimal, gpt3, eval_harness, cd_student, cd_teacher };

inline constexpr std::array<Template, 5> kAllTemplates{
    Template::minimal, Template::gpt3, Template::eval_harness, Template::cd_student,
    Template::cd_teacher};

std::string to_string(Template t);
/// Throws ConfigError for an unknown name.
Template template_from_string(std::string_view name);

/// Renders a sentence into its prompt:
///
///   minimal       sentence + "?"
///   gpt3          "Is this sentence grammatically correct? " + sentence
///   eval_harness  "Sentence: " + sentence +
///                 "\nQuestion: Is this sentence grammatically acceptable?\nAnswer:"
///   cd_student    same as gpt3
///   cd_teacher    gpt3 + " Let me think about this step by step:"
std::string apply_template(std::string_view sentence, Template t);

/// Inverse of apply_template; nullopt when `prompt` was not rendered by `t`.
std::optional<std::string> strip_template(std::string_view prompt, Template t);

}  // namespace ftlab::data
