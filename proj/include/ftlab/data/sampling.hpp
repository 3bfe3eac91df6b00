// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ftlab/data/example.hpp"
#include "ftlab/tensor/rng.hpp"

namespace ftlab::data {

/// Exactly `k_per_class` examples of each label drawn uniformly without
/// replacement, returned in a seed-determined shuffled order. DataError when
/// a class has fewer than k members or k is 0.
std::vector<Example> few_shot_sample(std::span<const Example> examples, std::size_t k_per_class,
                                     Rng& rng);

}  // namespace ftlab::data
