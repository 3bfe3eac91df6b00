// SPDX-License-Identifier: Apache-2.0
#include "ftlab/hpo/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ftlab/error.hpp"

namespace ftlab::hpo {

void to_json(nlohmann::ordered_json& j, const Trial& t) {
  j = nlohmann::ordered_json::object();
  j["id"] = t.id;
  j["status"] = t.status == TrialStatus::ok ? "ok" : "failed";
  j["objective"] = t.objective ? nlohmann::ordered_json(*t.objective) : nullptr;
  j["assignment"] = t.assignment;
  j["aux"] = t.aux;
  j["seed"] = t.seed;
}

void from_json(const nlohmann::ordered_json& j, Trial& t) {
  t.id = j.at("id").get<std::size_t>();
  const auto status = j.at("status").get<std::string>();
  if (status != "ok" && status != "failed") throw ParseError(0, "unknown trial status " + status);
  t.status = status == "ok" ? TrialStatus::ok : TrialStatus::failed;
  t.objective.reset();
  if (!j.at("objective").is_null()) t.objective = j.at("objective").get<double>();
  t.assignment = j.at("assignment");
  t.aux = j.contains("aux") ? nlohmann::json(j.at("aux")) : nlohmann::json::object();
  t.seed = j.value("seed", std::uint64_t{0});
}

GoodBad split_good_bad(std::span<const Trial> history, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  std::vector<const Trial*> ok;
  for (const auto& t : history) {
    if (t.status == TrialStatus::ok && t.objective) ok.push_back(&t);
  }
  std::stable_sort(ok.begin(), ok.end(), [](const Trial* a, const Trial* b) {
    if (*a->objective != *b->objective) return *a->objective > *b->objective;
    return a->id < b->id;
  });
  const double raw = gamma * static_cast<double>(ok.size());
  const auto n_good = std::min(ok.size(), static_cast<std::size_t>(std::ceil(raw - 1e-12)));
  GoodBad out;
  out.good.assign(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(n_good));
  out.bad.assign(ok.begin() + static_cast<std::ptrdiff_t>(n_good), ok.end());
  return out;
}

namespace {

constexpr double kLogFloor = -745.0;  // log of the smallest subnormal

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double log_sum_exp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

ParzenEstimator::ParzenEstimator(std::vector<double> observations, double lo, double hi)
    : lo_(lo), hi_(hi) {
  if (!(lo < hi)) throw ConfigError("ParzenEstimator needs lo < hi");
  const double range = hi - lo;
  std::sort(observations.begin(), observations.end());
  const std::size_t n = observations.size();
  const double min_sigma = n ? range / static_cast<double>(std::min<std::size_t>(100, n)) : range;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::clamp(observations[i], lo, hi);
    const double left = i == 0 ? lo : observations[i - 1];
    const double right = i + 1 == n ? hi : observations[i + 1];
    const double gap = std::max(x - left, right - x);
    mus_.push_back(x);
    sigmas_.push_back(std::clamp(gap, min_sigma, range));
  }
  mus_.push_back(0.5 * (lo + hi));
  sigmas_.push_back(range);
  for (std::size_t k = 0; k < mus_.size(); ++k) {
    norms_.push_back(normal_cdf((hi - mus_[k]) / sigmas_[k]) -
                     normal_cdf((lo - mus_[k]) / sigmas_[k]));
  }
}

double ParzenEstimator::log_pdf(double x) const {
  if (!(x >= lo_ && x <= hi_)) return -std::numeric_limits<double>::infinity();
  const double log_w = -std::log(static_cast<double>(mus_.size()));
  std::vector<double> terms(mus_.size());
  for (std::size_t k = 0; k < mus_.size(); ++k) {
    const double z = (x - mus_[k]) / sigmas_[k];
    terms[k] = log_w - 0.5 * z * z - std::log(sigmas_[k] * std::sqrt(2.0 * M_PI) * norms_[k]);
  }
  return log_sum_exp(terms);
}

double ParzenEstimator::log_mass(double a, double b) const {
  a = std::max(a, lo_);
  b = std::min(b, hi_);
  if (!(a < b)) return kLogFloor;
  double mass = 0.0;
  for (std::size_t k = 0; k < mus_.size(); ++k) {
    mass += (normal_cdf((b - mus_[k]) / sigmas_[k]) - normal_cdf((a - mus_[k]) / sigmas_[k])) /
            norms_[k];
  }
  mass /= static_cast<double>(mus_.size());
  return mass > 0.0 ? std::log(mass) : kLogFloor;
}

double ParzenEstimator::sample(Rng& rng) const {
  const std::size_t k = rng.below(mus_.size());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = rng.normal(mus_[k], sigmas_[k]);
    if (x >= lo_ && x <= hi_) return x;
  }
  return std::clamp(mus_[k], lo_, hi_);
}

std::vector<double> categorical_probs(std::span<const std::size_t> observed, std::size_t k) {
  if (k == 0) throw ConfigError("categorical with no choices");
  std::vector<double> p(k, 1.0);
  for (auto i : observed) {
    if (i >= k) throw ConfigError("categorical observation out of range");
    p[i] += 1.0;
  }
  const double denom = static_cast<double>(observed.size() + k);
  for (auto& x : p) x /= denom;
  return p;
}

namespace {

struct Bounds {
  double lo, hi;
};

/// Continuous working interval of a numeric parameter.
Bounds working_bounds(const ParamSpec& p) {
  switch (p.kind) {
    case ParamKind::loguniform: return {std::log(p.lo), std::log(p.hi)};
    case ParamKind::quantized_int: {
      const double half = 0.5 * static_cast<double>(p.step);
      return {p.lo - half, p.hi + half};
    }
    default: return {p.lo, p.hi};
  }
}

double to_working(const ParamSpec& p, const nlohmann::json& v) {
  const double x = v.get<double>();
  return p.kind == ParamKind::loguniform ? std::log(x) : x;
}

nlohmann::json from_working(const ParamSpec& p, double x) {
  switch (p.kind) {
    case ParamKind::loguniform: return std::clamp(std::exp(x), p.lo, p.hi);
    case ParamKind::quantized_int: {
      const auto lo = static_cast<std::int64_t>(p.lo);
      const auto cells = (static_cast<std::int64_t>(p.hi) - lo) / p.step + 1;
      const auto k = std::clamp<std::int64_t>(
          std::llround((x - p.lo) / static_cast<double>(p.step)), 0, cells - 1);
      return lo + k * p.step;
    }
    default: return std::clamp(x, p.lo, p.hi);
  }
}

/// Density of one parameter built from a set of trials.
struct ParamDensity {
  const ParamSpec* spec;
  std::optional<ParzenEstimator> parzen;
  std::vector<double> probs;

  ParamDensity(const ParamSpec& p, std::span<const Trial* const> trials) : spec(&p) {
    if (p.kind == ParamKind::categorical) {
      std::vector<std::size_t> idx;
      for (const Trial* t : trials) {
        if (auto i = p.choice_index(t->assignment.at(p.name))) idx.push_back(*i);
      }
      probs = categorical_probs(idx, p.choices.size());
    } else {
      std::vector<double> obs;
      for (const Trial* t : trials) obs.push_back(to_working(p, t->assignment.at(p.name)));
      const Bounds b = working_bounds(p);
      parzen.emplace(std::move(obs), b.lo, b.hi);
    }
  }

  double log_density(const nlohmann::json& v) const {
    switch (spec->kind) {
      case ParamKind::categorical: {
        const auto i = spec->choice_index(v);
        return i ? std::log(probs[*i]) : kLogFloor;
      }
      case ParamKind::quantized_int: {
        const double x = v.get<double>();
        const double half = 0.5 * static_cast<double>(spec->step);
        return parzen->log_mass(x - half, x + half);
      }
      default: return std::max(parzen->log_pdf(to_working(*spec, v)), kLogFloor);
    }
  }

  nlohmann::json sample(Rng& rng) const {
    if (spec->kind == ParamKind::categorical) {
      const double u = rng.uniform();
      double acc = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return spec->choices[i];
      }
      return spec->choices.back();
    }
    return from_working(*spec, parzen->sample(rng));
  }
};

std::vector<ParamDensity> densities(const SearchSpace& space, std::span<const Trial* const> set) {
  std::vector<ParamDensity> out;
  out.reserve(space.params.size());
  for (const auto& p : space.params) out.emplace_back(p, set);
  return out;
}

double score(const std::vector<ParamDensity>& l, const std::vector<ParamDensity>& g,
             const Assignment& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const auto& v = a.at(l[i].spec->name);
    s += l[i].log_density(v) - g[i].log_density(v);
  }
  return s;
}

}  // namespace

double tpe_score(const SearchSpace& space, std::span<const Trial* const> good,
                 std::span<const Trial* const> bad, const Assignment& candidate) {
  return score(densities(space, good), densities(space, bad), candidate);
}

Assignment tpe_suggest(const SearchSpace& space, std::span<const Trial> history, Rng& rng,
                       const TpeKnobs& knobs, std::vector<Assignment>* candidates) {
  space.validate();
  if (knobs.n_candidates < 1) throw ConfigError("n_candidates must be >= 1");
  const GoodBad split = split_good_bad(history, knobs.gamma);
  const std::size_t n_ok = split.good.size() + split.bad.size();
  if (n_ok < knobs.n_startup || n_ok == 0) return sample_prior(space, rng);

  const auto l = densities(space, split.good);
  const auto g = densities(space, split.bad);
  Assignment best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < knobs.n_candidates; ++c) {
    Assignment a = Assignment::object();
    for (const auto& d : l) a[d.spec->name] = d.sample(rng);
    const double s = score(l, g, a);
    if (candidates) candidates->push_back(a);
    if (best.is_null() || s > best_score) {
      best = a;
      best_score = s;
    }
  }
  if (!space.contains(best)) throw Error("tpe_suggest produced an out-of-bounds assignment");
  return best;
}

}  // namespace ftlab::hpo
