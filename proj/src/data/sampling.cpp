// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/sampling.hpp"

#include "ftlab/error.hpp"

namespace ftlab::data {

std::vector<Example> few_shot_sample(std::span<const Example> examples, std::size_t k_per_class,
                                     Rng& rng) {
  if (k_per_class == 0) throw DataError("k_per_class must be positive");
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    validate(examples[i]);
    by_label[examples[i].label].push_back(i);
  }
  std::vector<Example> out;
  out.reserve(2 * k_per_class);
  for (int label = 0; label < 2; ++label) {
    auto& idx = by_label[label];
    if (idx.size() < k_per_class) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                      " examples, fewer than k_per_class = " + std::to_string(k_per_class));
    }
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < k_per_class; ++i) out.push_back(examples[idx[i]]);
  }
  rng.shuffle(std::span<Example>(out));
  return out;
}

}  // namespace ftlab::data
