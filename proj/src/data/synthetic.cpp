// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/synthetic.hpp"

#include <array>
#include <cctype>

#include "ftlab/error.hpp"

namespace ftlab::data {
namespace {

constexpr std::array<const char*, 6> kSingularDets{"this", "that", "a", "every", "one", "each"};
constexpr std::array<const char*, 6> kPluralDets{"these", "those", "many", "two", "several", "few"};
constexpr std::array<const char*, 4> kPrepositions{"near", "with", "behind", "beside"};

// Singular subjects dominate, so surface verb number alone is weakly
// predictive of the label; agreement is still needed to reach 100%.
constexpr double kPluralSubjectRate = 0.35;

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.below(items.size())];
}

template <typename T, std::size_t N>
T pick(const std::array<T, N>& items, Rng& rng) {
  return items[rng.below(N)];
}

/// Verb group agreeing with `plural`; the form for the opposite number when
/// `agree` is false.
std::string verb_group(const Verb& v, bool plural, bool agree, Rng& rng) {
  const bool pl = agree ? plural : !plural;
  const double u = rng.uniform();
  if (u < 0.30) return std::string(pl ? "are " : "is ") + v.ing;
  if (u < 0.50) return std::string(pl ? "were " : "was ") + v.ing;
  if (u < 0.70) return std::string(pl ? "have " : "has ") + v.past;
  return pl ? v.plain : v.third;
}

std::string sentence(const Lexicon& lex, bool acceptable, Rng& rng) {
  const bool plural = rng.bernoulli(kPluralSubjectRate);
  std::string s;
  if (rng.bernoulli(0.2)) {
    s = "the";
  } else {
    s = plural ? pick(kPluralDets, rng) : pick(kSingularDets, rng);
  }
  if (rng.bernoulli(0.3)) s += " " + pick(lex.adjectives, rng);
  const Noun& subject = pick(lex.nouns, rng);
  s += " " + (plural ? subject.plural : subject.singular);
  s += " " + verb_group(pick(lex.verbs, rng), plural, acceptable, rng);

  const double tail = rng.uniform();
  if (tail < 0.3) {
    const Noun& obj = pick(lex.nouns, rng);
    s += " the " + (rng.bernoulli(0.5) ? obj.plural : obj.singular);
  } else if (tail < 0.6) {
    const Noun& obj = pick(lex.nouns, rng);
    s += std::string(" ") + pick(kPrepositions, rng) + " the " +
         (rng.bernoulli(0.5) ? obj.plural : obj.singular);
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += ".";
  return s;
}

Lexicon make_in_domain() {
  Lexicon lex;
  lex.nouns = {{"dog", "dogs"},         {"cat", "cats"},           {"teacher", "teachers"},
               {"student", "students"}, {"farmer", "farmers"},     {"child", "children"},
               {"bird", "birds"},       {"horse", "horses"},       {"doctor", "doctors"},
               {"artist", "artists"},   {"baker", "bakers"},       {"pilot", "pilots"},
               {"singer", "singers"},   {"writer", "writers"},     {"driver", "drivers"},
               {"lawyer", "lawyers"},   {"player", "players"},     {"nurse", "nurses"},
               {"friend", "friends"},   {"neighbor", "neighbors"}, {"king", "kings"},
               {"girl", "girls"},       {"boy", "boys"},           {"chef", "chefs"}};
  lex.verbs = {{"runs", "run", "running", "run"},         {"sleeps", "sleep", "sleeping", "slept"},
               {"eats", "eat", "eating", "eaten"},         {"sings", "sing", "singing", "sung"},
               {"walks", "walk", "walking", "walked"},     {"reads", "read", "reading", "read"},
               {"writes", "write", "writing", "written"},  {"plays", "play", "playing", "played"},
               {"jumps", "jump", "jumping", "jumped"},     {"cooks", "cook", "cooking", "cooked"},
               {"swims", "swim", "swimming", "swum"},      {"laughs", "laugh", "laughing", "laughed"},
               {"talks", "talk", "talking", "talked"},     {"studies", "study", "studying", "studied"},
               {"waits", "wait", "waiting", "waited"},     {"listens", "listen", "listening", "listened"}};
  lex.adjectives = {"big", "small", "happy", "old", "young", "tall", "quiet", "busy"};
  return lex;
}

Lexicon make_out_of_domain() {
  Lexicon lex;
  lex.nouns = {{"poet", "poets"},     {"sailor", "sailors"},   {"miner", "miners"},
               {"judge", "judges"},   {"dancer", "dancers"},   {"tailor", "tailors"},
               {"monk", "monks"},     {"knight", "knights"},   {"clerk", "clerks"},
               {"fox", "foxes"},      {"wolf", "wolves"},      {"goat", "goats"},
               {"duck", "ducks"},     {"owl", "owls"},         {"frog", "frogs"},
               {"lion", "lions"},     {"tiger", "tigers"},     {"rabbit", "rabbits"},
               {"mouse", "mice"},     {"hunter", "hunters"},   {"butcher", "butchers"},
               {"guard", "guards"},   {"priest", "priests"},   {"scholar", "scholars"}};
  lex.verbs = {{"climbs", "climb", "climbing", "climbed"},    {"shouts", "shout", "shouting", "shouted"},
               {"whispers", "whisper", "whispering", "whispered"},
               {"paints", "paint", "painting", "painted"},    {"builds", "build", "building", "built"},
               {"flies", "fly", "flying", "flown"},           {"drinks", "drink", "drinking", "drunk"},
               {"rides", "ride", "riding", "ridden"},         {"smiles", "smile", "smiling", "smiled"},
               {"wanders", "wander", "wandering", "wandered"}, {"hides", "hide", "hiding", "hidden"},
               {"digs", "dig", "digging", "dug"},             {"knits", "knit", "knitting", "knitted"},
               {"sews", "sew", "sewing", "sewn"},             {"prays", "pray", "praying", "prayed"},
               {"rests", "rest", "resting", "rested"}};
  lex.adjectives = {"brave", "clever", "gentle", "proud", "angry", "lazy", "calm", "shy"};
  return lex;
}

}  // namespace

std::set<std::string> Lexicon::words() const {
  std::set<std::string> out(adjectives.begin(), adjectives.end());
  for (const auto& n : nouns) out.insert({n.singular, n.plural});
  for (const auto& v : verbs) out.insert({v.third, v.plain, v.ing, v.past});
  return out;
}

const Lexicon& in_domain_lexicon() {
  static const Lexicon lex = make_in_domain();
  return lex;
}

const Lexicon& out_of_domain_lexicon() {
  static const Lexicon lex = make_out_of_domain();
  return lex;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::id_eval: return "id_eval";
    case Split::ood_eval: return "ood_eval";
  }
  throw ConfigError("unknown split");
}

Split split_from_string(std::string_view name) {
  for (Split s : {Split::train, Split::id_eval, Split::ood_eval}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown split \"" + std::string(name) + "\"");
}

std::vector<Example> generate_synthetic(std::size_t n, Rng& rng, Split split) {
  if (n < 2) throw ConfigError("synthetic corpus needs n >= 2");
  const Lexicon& lex = split == Split::ood_eval ? out_of_domain_lexicon() : in_domain_lexicon();
  const std::string source = "synthetic-" + to_string(split);
  const std::size_t n_acceptable = (n + 1) / 2;
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool acceptable = i < n_acceptable;
    out.push_back(Example{sentence(lex, acceptable, rng), acceptable ? 1 : 0, source});
  }
  rng.shuffle(std::span<Example>(out));
  return out;
}

Splits synthetic_splits(std::size_t n_train, std::size_t n_eval, std::uint64_t seed) {
  Rng root(seed);
  Rng a = root.fork(1), b = root.fork(2), c = root.fork(3);
  return {generate_synthetic(n_train, a, Split::train), generate_synthetic(n_eval, b, Split::id_eval),
          generate_synthetic(n_eval, c, Split::ood_eval)};
}

}  // namespace ftlab::data
