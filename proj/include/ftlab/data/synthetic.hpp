// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ftlab/data/example.hpp"
#include "ftlab/tensor/rng.hpp"

namespace ftlab::data {

enum class Split { train, id_eval, ood_eval };

std::string to_string(Split s);
Split split_from_string(std::string_view name);

struct Noun {
  std::string singular, plural;
};

/// Present 3sg, present plural, present participle, past participle.
struct Verb {
  std::string third, plain, ing, past;
};

/// Content words of one side of the corpus. Function words (determiners,
/// auxiliaries, prepositions) are shared between sides.
struct Lexicon {
  std::vector<Noun> nouns;
  std::vector<Verb> verbs;
  std::vector<std::string> adjectives;

  std::set<std::string> words() const;
};

/// Lexicon used by train and id_eval.
const Lexicon& in_domain_lexicon();
/// Lexicon used by ood_eval; shares no content word with the in-domain one.
const Lexicon& out_of_domain_lexicon();

/// Label-balanced agreement corpus: n/2 acceptable sentences (subject and
/// verb agree in number) and the rest with the verb number flipped. About a
/// third of subjects are plural. Order is
/// shuffled. ConfigError when n < 2.
std::vector<Example> generate_synthetic(std::size_t n, Rng& rng, Split split);

/// All three splits from one seed; streams 1, 2, 3 of Rng(seed) feed train,
/// id_eval and ood_eval.
Splits synthetic_splits(std::size_t n_train, std::size_t n_eval, std::uint64_t seed);

}  // namespace ftlab::data
