// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fixtures.hpp"
#include "ftlab/error.hpp"
#include "ftlab/lora/lora.hpp"
#include "ftlab/model/checkpoint.hpp"
#include "ftlab/tensor/ops.hpp"
#include "gradcheck.hpp"

using namespace ftlab;
using namespace ftlab::testing;

TEST_CASE("LoraConfig defaults and scaling") {
  lora::LoraConfig cfg;
  CHECK(cfg.rank == 16);
  CHECK(cfg.alpha == 64.0);
  CHECK(cfg.dropout == 0.2);
  CHECK(cfg.targets == std::set<lora::Target>{lora::Target::Q, lora::Target::V});
  CHECK(cfg.scaling() == 4.0);
}

TEST_CASE("inject") {
  Rng rng(1);
  auto model = TransformerClassifier::build(ModelConfig::toy(), rng);
  auto base = model.clone();
  lora::inject(model, {}, rng);

  SUBCASE("toy trainable count") {
    std::size_t trainable = 0;
    for (const auto& p : model.trainable_parameters()) trainable += p.tensor.numel();
    CHECK(trainable == 2 * 2 * (2 * 16 * 64) + 130);
    CHECK(trainable == 8322);
    for (const auto& p : model.trainable_parameters()) {
      CHECK((is_adapter_parameter(p.name) || is_head_parameter(p.name)));
    }
    CHECK(static_cast<double>(trainable) / static_cast<double>(model.parameter_count()) < 0.10);
  }
  SUBCASE("identity at init, bitwise, eval mode") {
    for (int i = 0; i < 10; ++i) {
      auto batch = random_batch(4, 9, 1000, rng);
      Rng r1(0), r2(0);
      CHECK(bitwise_equal(base.forward(batch, false, r1), model.forward(batch, false, r2)));
    }
  }
  SUBCASE("errors") {
    auto fresh = base.clone();
    lora::LoraConfig too_big;
    too_big.rank = 65;
    CHECK_THROWS_AS(lora::inject(fresh, too_big, rng), ConfigError);
    lora::LoraConfig none;
    none.targets.clear();
    CHECK_THROWS_AS(lora::inject(fresh, none, rng), ConfigError);
    CHECK_THROWS_AS(lora::inject(model, {}, rng), Error);
  }
}

TEST_CASE("frozen base stays bitwise unchanged under gradient steps") {
  Rng rng(2);
  auto model = TransformerClassifier::build(small_config(), rng);
  lora::LoraConfig cfg;
  cfg.rank = 4;
  lora::inject(model, cfg, rng);
  const auto before = model.base_hash();
  for (int step = 0; step < 5; ++step) {
    auto batch = random_batch(4, 6, small_config().vocab_size, rng);
    Rng fwd(step);
    ops::cross_entropy(model.forward(batch, true, fwd), std::vector<int>{0, 1, 0, 1}).backward();
    for (auto& p : model.trainable_parameters()) {
      auto g = p.tensor.grad();
      auto w = p.tensor.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.1 * g[i];
      p.tensor.zero_grad();
    }
  }
  CHECK(model.base_hash() == before);
  for (const auto& p : model.parameters()) {
    if (!is_adapter_parameter(p.name) && !is_head_parameter(p.name)) CHECK_FALSE(p.tensor.has_grad());
  }
}

TEST_CASE("adapted model gradients match finite differences") {
  Rng rng(3);
  auto model = TransformerClassifier::build(small_config(), rng);
  lora::LoraConfig cfg;
  cfg.rank = 4;
  cfg.targets = {lora::Target::Q, lora::Target::K, lora::Target::V, lora::Target::O};
  lora::inject(model, cfg, rng);
  // Move B off zero so the A gradients are not trivially zero.
  for (auto& p : model.trainable_parameters()) {
    if (p.name.ends_with("lora_b")) for (double& v : p.tensor.mutable_data()) v = rng.normal(0, 0.1);
  }
  auto batch = random_batch(3, 6, small_config().vocab_size, rng);
  auto loss_fn = [&] {
    Rng fwd(4);
    return ops::cross_entropy(model.forward(batch, true, fwd), std::vector<int>{1, 1, 0});
  };
  loss_fn().backward();
  std::vector<Tensor> params;
  for (const auto& p : model.trainable_parameters()) params.push_back(p.tensor);
  auto result = check_gradients(params, [&] { NoGradGuard g; return loss_fn().item(); }, 80, rng);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("merge") {
  Rng rng(4);
  auto model = TransformerClassifier::build(small_config(), rng);
  SUBCASE("untrained adapters leave weights bitwise unchanged") {
    const auto before = model.base_hash();
    lora::inject(model, {.rank = 4}, rng);
    lora::merge(model);
    CHECK(model.base_hash() == before);
    CHECK(lora::adapter_parameter_count(model) == 0);
    for (const auto& p : model.parameters()) CHECK_FALSE(is_adapter_parameter(p.name));
    CHECK_THROWS_AS(lora::merge(model), Error);
  }
  SUBCASE("trained adapters: merged and adapted logits agree") {
    lora::inject(model, {.rank = 4, .targets = {lora::Target::Q, lora::Target::V, lora::Target::O}}, rng);
    for (auto& p : model.trainable_parameters()) {
      for (double& v : p.tensor.mutable_data()) v += rng.normal(0, 0.05);
    }
    auto adapted = model.clone();
    lora::merge(model);
    for (int i = 0; i < 10; ++i) {
      auto batch = random_batch(4, 8, small_config().vocab_size, rng);
      Rng r1(0), r2(0);
      CHECK(max_abs_diff(adapted.forward(batch, false, r1), model.forward(batch, false, r2)) < 1e-9);
    }
  }
}

TEST_CASE("adapter checkpoint") {
  const auto dir = scratch_dir("lora_ckpt");
  Rng rng(5);
  auto base = TransformerClassifier::build(small_config(), rng);
  auto model = base.clone();
  lora::inject(model, {.rank = 4}, rng);
  for (auto& p : model.trainable_parameters()) {
    for (double& v : p.tensor.mutable_data()) v += rng.normal(0, 0.05);
  }
  lora::save_adapters(model, dir / "a.bin");

  auto restored = base.clone();
  lora::load_adapters(restored, dir / "a.bin");
  auto batch = random_batch(3, 5, small_config().vocab_size, rng);
  Rng r1(0), r2(0);
  CHECK(bitwise_equal(model.forward(batch, false, r1), restored.forward(batch, false, r2)));

  SUBCASE("whole-model checkpoint keeps adapters and flags") {
    checkpoint::save(model, dir / "full.bin");
    auto loaded = checkpoint::load(dir / "full.bin");
    CHECK(loaded.model.has_adapters());
    CHECK(loaded.model.trainable_parameters().size() == model.trainable_parameters().size());
    Rng r3(0);
    CHECK(bitwise_equal(model.forward(batch, false, r1), loaded.model.forward(batch, false, r3)));
  }
  SUBCASE("shape mismatch is a hard error") {
    ModelConfig other = small_config();
    other.d_model = 24;
    other.n_heads = 4;
    Rng r(0);
    auto wrong = TransformerClassifier::build(other, r);
    CHECK_THROWS_AS(lora::load_adapters(wrong, dir / "a.bin"), ShapeError);
  }
}
