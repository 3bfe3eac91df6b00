// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftlab/hpo/space.hpp"

namespace ftlab::hpo {

enum class TrialStatus { ok, failed };

struct Trial {
  std::size_t id = 0;
  Assignment assignment = Assignment::object();
  std::optional<double> objective;  // maximized; absent for failed trials
  nlohmann::json aux = nlohmann::json::object();
  TrialStatus status = TrialStatus::ok;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::ordered_json& j, const Trial& t);
void from_json(const nlohmann::ordered_json& j, Trial& t);

struct TpeKnobs {
  std::size_t n_startup = 10;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
};

/// Splits the ok trials of `history` into the best ceil(gamma * n) by
/// objective (ties to the earlier id) and the rest. Failed trials are dropped.
struct GoodBad {
  std::vector<const Trial*> good;
  std::vector<const Trial*> bad;
};
GoodBad split_good_bad(std::span<const Trial> history, double gamma);

/// One-dimensional Parzen mixture over [lo, hi]: a kernel per observation
/// plus a prior kernel at the midpoint with sigma = hi - lo, all weighted
/// 1 / (n + 1). Observation bandwidths are the larger gap to a neighbor
/// (the bounds count as neighbors), clipped to [(hi - lo) / min(100, n),
/// hi - lo]. Kernels are normals truncated to [lo, hi].
class ParzenEstimator {
 public:
  ParzenEstimator(std::vector<double> observations, double lo, double hi);

  double log_pdf(double x) const;
  /// Log of the mixture mass on [a, b] intersected with the bounds.
  double log_mass(double a, double b) const;
  double sample(Rng& rng) const;

  std::span<const double> mus() const { return mus_; }
  std::span<const double> sigmas() const { return sigmas_; }

 private:
  double lo_, hi_;
  std::vector<double> mus_, sigmas_;
  std::vector<double> norms_;  // truncation mass of each kernel
};

/// Smoothed categorical: p_j = (count_j + 1) / (n + K).
std::vector<double> categorical_probs(std::span<const std::size_t> observed, std::size_t k);

/// Sum over parameters of log l(x) - log g(x) for the densities built from
/// `good` and `bad`.
double tpe_score(const SearchSpace& space, std::span<const Trial* const> good,
                 std::span<const Trial* const> bad, const Assignment& candidate);

/// Prior sample while fewer than n_startup ok trials exist; otherwise the
/// best of n_candidates draws from l by tpe_score. `candidates`, when given,
/// receives the draws in order.
Assignment tpe_suggest(const SearchSpace& space, std::span<const Trial> history, Rng& rng,
                       const TpeKnobs& knobs = {}, std::vector<Assignment>* candidates = nullptr);

}  // namespace ftlab::hpo
