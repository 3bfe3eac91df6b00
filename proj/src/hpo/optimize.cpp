// SPDX-License-Identifier: Apache-2.0
#include "ftlab/hpo/optimize.hpp"

#include <cmath>

#include "ftlab/error.hpp"

namespace ftlab::hpo {

std::string to_string(Sampler s) { return s == Sampler::tpe ? "tpe" : "random"; }

Sampler sampler_from_string(std::string_view name) {
  if (name == "tpe") return Sampler::tpe;
  if (name == "random") return Sampler::random;
  throw ConfigError("unknown sampler \"" + std::string(name) + "\"");
}

TrialStore::TrialStore(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot write " + path.string());
}

void TrialStore::append(const Trial& t) {
  out_ << nlohmann::ordered_json(t).dump() << '\n';
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
}

std::vector<Trial> TrialStore::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<Trial> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::ordered_json::parse(line).get<Trial>());
    } catch (const std::exception& e) {
      throw ParseError(lineno, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

OptimizeResult optimize(const SearchSpace& space, const Objective& objective, std::size_t n_trials,
                        Rng& rng, const OptimizeOptions& options) {
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  space.validate();
  OptimizeResult result;
  const Trial* best = nullptr;
  for (std::size_t id = 0; id < n_trials; ++id) {
    Trial t;
    t.id = id;
    t.seed = options.trial_seed;
    t.assignment = options.sampler == Sampler::tpe
                       ? tpe_suggest(space, result.trials, rng, options.knobs)
                       : sample_prior(space, rng);
    try {
      Evaluation e = objective(t.assignment, id);
      t.aux = std::move(e.aux);
      if (std::isfinite(e.objective)) {
        t.objective = e.objective;
      } else {
        t.status = TrialStatus::failed;
        t.aux["error"] = "non-finite objective";
      }
    } catch (const std::exception& e) {
      t.status = TrialStatus::failed;
      t.aux["error"] = e.what();
    }
    if (options.store) options.store->append(t);
    result.trials.push_back(std::move(t));
  }
  for (const auto& t : result.trials) {
    if (t.status == TrialStatus::ok && (!best || *t.objective > *best->objective)) best = &t;
  }
  if (!best) throw Error("all " + std::to_string(n_trials) + " trials failed");
  result.best = *best;
  return result;
}

}  // namespace ftlab::hpo
