// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include "ftlab/data/synthetic.hpp"
#include "ftlab/model/transformer.hpp"

namespace ftlab::testing {

/// Random right-padded batch: row lengths drawn from [1, length].
inline TokenBatch random_batch(std::size_t batch, std::size_t length, std::size_t vocab, Rng& rng) {
  TokenBatch b;
  b.batch = batch;
  b.length = length;
  b.ids.assign(batch * length, 0);
  b.mask.assign(batch * length, 0);
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t len = 1 + rng.below(length);
    for (std::size_t t = 0; t < len; ++t) {
      b.ids[r * length + t] = static_cast<std::int32_t>(2 + rng.below(vocab - 2));
      b.mask[r * length + t] = 1;
    }
  }
  return b;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ftlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 40;
  c.max_seq_len = 12;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_ffn = 32;
  return c;
}

/// Synthetic train / id_eval / ood_eval splits; eval splits get n_eval each.
inline data::Splits synthetic_splits(std::size_t n_train, std::size_t n_eval, std::uint64_t seed) {
  return data::synthetic_splits(n_train, n_eval, seed);
}

}  // namespace ftlab::testing
