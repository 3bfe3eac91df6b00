// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/templates.hpp"

#include "ftlab/error.hpp"

namespace ftlab::data {
namespace {

constexpr std::string_view kGpt3Prefix = "Is this sentence grammatically correct? ";
constexpr std::string_view kHarnessPrefix = "Sentence: ";
constexpr std::string_view kHarnessSuffix =
    "\nQuestion: Is this sentence grammatically acceptable?\nAnswer:";
constexpr std::string_view kScratchpad = " Let me think about this step by step:";

struct Frame {
  std::string_view prefix, suffix;
};

Frame frame(Template t) {
  switch (t) {
    case Template::minimal: return {"", "?"};
    case Template::gpt3:
    case Template::cd_student: return {kGpt3Prefix, ""};
    case Template::eval_harness: return {kHarnessPrefix, kHarnessSuffix};
    case Template::cd_teacher: return {kGpt3Prefix, kScratchpad};
  }
  throw ConfigError("unknown template");
}

}  // namespace

std::string to_string(Template t) {
  switch (t) {
    case Template::minimal: return "minimal";
    case Template::gpt3: return "gpt3";
    case Template::eval_harness: return "eval_harness";
    case Template::cd_student: return "cd_student";
    case Template::cd_teacher: return "cd_teacher";
  }
  throw ConfigError("unknown template");
}

Template template_from_string(std::string_view name) {
  for (Template t : kAllTemplates) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown template \"" + std::string(name) + "\"");
}

std::string apply_template(std::string_view sentence, Template t) {
  const Frame f = frame(t);
  std::string out;
  out.reserve(f.prefix.size() + sentence.size() + f.suffix.size());
  out.append(f.prefix).append(sentence).append(f.suffix);
  return out;
}

std::optional<std::string> strip_template(std::string_view prompt, Template t) {
  const Frame f = frame(t);
  if (prompt.size() < f.prefix.size() + f.suffix.size() || !prompt.starts_with(f.prefix) ||
      !prompt.ends_with(f.suffix)) {
    return std::nullopt;
  }
  prompt.remove_prefix(f.prefix.size());
  prompt.remove_suffix(f.suffix.size());
  return std::string(prompt);
}

}  // namespace ftlab::data
