// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "ftlab/error.hpp"
#include "ftlab/lora/lora.hpp"
#include "ftlab/tensor/ops.hpp"
#include "ftlab/train/distill.hpp"
#include "ftlab/train/metrics.hpp"
#include "ftlab/train/optimizer.hpp"
#include "ftlab/train/schedule.hpp"
#include "ftlab/train/trainer.hpp"
#include "gradcheck.hpp"

using namespace ftlab;
using namespace ftlab::train;
using namespace ftlab::testing;

namespace {

/// Independent Adam reference, one scalar at a time.
struct RefAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g, double lr, double wd, bool decoupled) {
    ++t;
    if (!decoupled) g += wd * p;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    if (decoupled) p -= lr * wd * p;
    return p - lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
};

}  // namespace

TEST_CASE("optimizer_step") {
  SUBCASE("sgd") {
    std::vector<double> p{1.0};
    const std::vector<double> g{0.5};
    ParamState st;
    optimizer_step(p, g, st, {.kind = OptimizerKind::sgd}, 0.1, 1);
    CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(st.m.empty());
  }
  SUBCASE("adam first step is lr * sign(g)") {
    for (double g0 : {3.0, -0.01, 1e-3, -250.0}) {
      std::vector<double> p{0.5};
      const std::vector<double> g{g0};
      ParamState st;
      optimizer_step(p, g, st, {.kind = OptimizerKind::adam}, 1e-3, 1);
      CHECK(std::abs((p[0] - 0.5) - (-1e-3 * (g0 > 0 ? 1 : -1))) < 1e-6);
    }
  }
  SUBCASE("adam and adamw against a scalar reference") {
    for (auto kind : {OptimizerKind::adam, OptimizerKind::adamw}) {
      Rng rng(1);
      std::vector<double> p(7);
      for (auto& x : p) x = rng.normal();
      std::vector<RefAdam> ref(p.size());
      std::vector<double> expect = p;
      ParamState st;
      for (std::size_t t = 1; t <= 6; ++t) {
        std::vector<double> g(p.size());
        for (auto& x : g) x = rng.normal();
        optimizer_step(p, g, st, {.kind = kind, .weight_decay = 0.1}, 0.01, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          expect[i] = ref[i].step(expect[i], g[i], 0.01, 0.1, kind == OptimizerKind::adamw);
        }
      }
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - expect[i]) < 1e-14);
    }
  }
  SUBCASE("adamw with zero decay matches adam bitwise over 10 steps") {
    Rng rng(2);
    std::vector<double> a(33), b;
    for (auto& x : a) x = rng.normal();
    b = a;
    ParamState sa, sb;
    for (std::size_t t = 1; t <= 10; ++t) {
      std::vector<double> g(a.size());
      for (auto& x : g) x = rng.normal();
      optimizer_step(a, g, sa, {.kind = OptimizerKind::adam}, 1e-2, t);
      optimizer_step(b, g, sb, {.kind = OptimizerKind::adamw}, 1e-2, t);
    }
    CHECK(a == b);
  }
  SUBCASE("errors") {
    std::vector<double> p(3);
    const std::vector<double> g(2);
    ParamState st;
    CHECK_THROWS_AS(optimizer_step(p, g, st, {}, 0.1, 1), ShapeError);
    CHECK_THROWS_AS(optimizer_from_string("rmsprop"), ConfigError);
  }
}

TEST_CASE("Optimizer over tensors") {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  auto b = Tensor::from({3}, {1.0, 1.0, 1.0}, true);
  Optimizer opt({.kind = OptimizerKind::adam}, {a, b});
  ops::sum(ops::mul(a, a)).backward();
  opt.step(0.1);
  CHECK(a.at(0) == doctest::Approx(0.9));
  CHECK(b.at(0) == 1.0);  // no gradient, untouched
  CHECK(opt.state_bytes() == 2 * 2 * sizeof(double));
  opt.zero_grad();
  CHECK_FALSE(a.has_grad());
  Optimizer sgd({.kind = OptimizerKind::sgd}, {a});
  CHECK(sgd.state_bytes() == 0);
}

TEST_CASE("lr_at") {
  CHECK(lr_at(0, 100, 0.1, 1e-3) == 0.0);
  CHECK(lr_at(10, 100, 0.1, 1e-3) == 1e-3);
  CHECK(lr_at(5, 100, 0.1, 1e-3) == doctest::Approx(5e-4));
  CHECK(lr_at(100, 100, 0.1, 1e-3) == 0.0);
  CHECK(lr_at(55, 100, 0.1, 1e-3) == doctest::Approx(5e-4));
  CHECK(lr_at(0, 100, 0.0, 1e-3) == 1e-3);
  CHECK(warmup_steps(30, 0.1) == 3);
  CHECK(warmup_steps(7, 0.2) == 2);
  CHECK_THROWS_AS(lr_at(0, 0, 0.1, 1e-3), ConfigError);
  CHECK_THROWS_AS(lr_at(101, 100, 0.1, 1e-3), ConfigError);
  double prev = -1;
  for (std::size_t s = 0; s <= 10; ++s) {
    const double lr = lr_at(s, 50, 0.2, 1.0);
    CHECK(lr > prev);
    prev = lr;
  }
}

TEST_CASE("distill_loss") {
  SUBCASE("closed-form two-class example") {
    auto student = Tensor::from({1, 2}, {0.0, 0.0});
    auto teacher = Tensor::from({1, 2}, {2 * std::log(3.0), 0.0});
    const std::vector<int> label{1};
    const double kl = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
    const double expected = 0.5 * std::log(2.0) + 0.5 * 4.0 * kl;
    const double got = distill_loss(student, teacher, label, {.temperature = 2.0, .weight = 0.5}).item();
    CHECK(std::abs(got - expected) < 1e-12);
    CHECK(std::abs(got - 0.60820) < 1e-4);
  }
  Rng rng(3);
  auto s = random_tensor({4, 2}, rng, true, 2.0);
  auto t = random_tensor({4, 2}, rng, true, 2.0);
  const std::vector<int> labels{0, 1, 1, 0};
  const double ce = ops::cross_entropy(s, labels).item();
  SUBCASE("teacher equal to student leaves only the CE term") {
    CHECK(std::abs(distill_loss(s, s, labels, {.weight = 0.3}).item() - 0.7 * ce) < 1e-15);
  }
  SUBCASE("w = 0 is plain CE") {
    CHECK(distill_loss(s, t, labels, {.weight = 0.0}).item() == ce);
  }
  SUBCASE("gradient matches finite differences; teacher gets none") {
    const DistillConfig dc{.temperature = 1.7, .weight = 0.6};
    distill_loss(s, t, labels, dc).backward();
    CHECK_FALSE(t.has_grad());
    auto r = check_gradients({s}, [&] { NoGradGuard g; return distill_loss(s, t, labels, dc).item(); }, 8, rng);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(distill_loss(s, t, labels, {.weight = 1.5}), ConfigError);
    CHECK_THROWS_AS(distill_loss(s, t, labels, {.temperature = 0.0}), ConfigError);
    CHECK_THROWS_AS(distill_loss(s, Tensor::zeros({3, 2}), labels, {}), ShapeError);
  }
}

TEST_CASE("logistic head: one small gradient step lowers a convex loss") {
  Rng rng(4);
  auto x = random_tensor({32, 8}, rng, false);
  std::vector<int> labels(32);
  for (auto& l : labels) l = static_cast<int>(rng.below(2));
  auto w = random_tensor({2, 8}, rng, true, 0.1);
  auto bias = Tensor::zeros({2}, true);
  auto loss = [&] { return ops::cross_entropy(ops::linear(x, w, bias), labels); };
  const auto before = loss();
  before.backward();
  Optimizer sgd({.kind = OptimizerKind::sgd}, {w, bias});
  sgd.step(0.05);
  CHECK(loss().item() < before.item());
}

TEST_CASE("evaluate") {
  data::Vocab vocab = data::Vocab::build(std::vector<std::string>{"a b c d e"});
  EncodedSet set;
  for (int i = 0; i < 40; ++i) {
    const int label = i % 2;
    set.rows.push_back(vocab.encode(label ? "a b c" : "d e", 8));
    set.labels.push_back(label);
  }
  SUBCASE("constant predictor on a balanced set") {
    auto constant = [](const TokenBatch& b) {
      std::vector<double> v;
      for (std::size_t i = 0; i < b.batch; ++i) v.insert(v.end(), {1.0, 0.0});
      return Tensor::from({b.batch, 2}, v);
    };
    CHECK(accuracy(constant, set, 7) == 0.5);
  }
  SUBCASE("perfect predictor") {
    auto perfect = [&](const TokenBatch& b) {
      std::vector<double> v;
      for (std::size_t i = 0; i < b.batch; ++i) {
        const bool positive = b.ids[i * b.length] == vocab.id("a");
        v.insert(v.end(), {positive ? 0.0 : 1.0, positive ? 1.0 : 0.0});
      }
      return Tensor::from({b.batch, 2}, v);
    };
    CHECK(accuracy(perfect, set, 5) == 1.0);
  }
  SUBCASE("empty set") {
    CHECK_THROWS_AS(accuracy([](const TokenBatch&) { return Tensor(); }, EncodedSet{}, 4), DataError);
  }
  SUBCASE("invariant under batch size") {
    const auto splits = synthetic_splits(200, 120, 5);
    const auto v = data::build_vocab(splits.train);
    ModelConfig cfg = ModelConfig::toy();
    Rng rng(6);
    auto model = TransformerClassifier::build(cfg, rng);
    const auto enc = encode_set(splits.id_eval, v, std::nullopt, cfg.max_seq_len);
    const double a1 = evaluate(model, enc, 1);
    CHECK(evaluate(model, enc, 7) == a1);
    CHECK(evaluate(model, enc, 64) == a1);
  }
}

namespace {

struct SmallRun {
  data::Splits splits = synthetic_splits(160, 60, 11);
  data::Vocab vocab = data::build_vocab(splits.train);
  ModelConfig model_config = [] {
    ModelConfig c = small_config();
    c.vocab_size = 200;
    c.max_seq_len = 32;
    return c;
  }();
  TransformerClassifier build(std::uint64_t seed) const {
    Rng rng(seed);
    return TransformerClassifier::build(model_config, rng);
  }
  TrainInputs inputs() const {
    TrainInputs in;
    in.vocab = &vocab;
    in.splits = &splits;
    return in;
  }
};

bool same_records(const MetricsTrace& a, const MetricsTrace& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto &x = a.epochs[i], &y = b.epochs[i];
    if (x.loss != y.loss || x.id_acc != y.id_acc || x.ood_acc != y.ood_acc ||
        x.mem_bytes != y.mem_bytes || x.kl != y.kl) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("train: preconditions") {
  SmallRun run;
  auto model = run.build(1);
  auto in = run.inputs();
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(ftlab::train::train(model, in, tc, Strategy::pbft), ConfigError);
  CHECK_THROWS_AS(ftlab::train::train(model, in, tc, Strategy::vft_lora), ConfigError);
  CHECK_THROWS_AS(ftlab::train::train(model, in, tc, Strategy::cd), ConfigError);
  in.distill = DistillConfig{};
  auto teacher = run.build(1);
  in.teacher = &teacher;
  CHECK_THROWS_AS(ftlab::train::train(model, in, tc, Strategy::cd), ConfigError);  // teacher not frozen
  TrainConfig templated = tc;
  templated.prompt = data::Template::minimal;
  CHECK_THROWS_AS(ftlab::train::train(model, in, templated, Strategy::vft), ConfigError);
  TrainConfig bad = tc;
  bad.warmup_ratio = 0.3;
  CHECK_THROWS_AS(ftlab::train::train(model, in, bad, Strategy::vft), ConfigError);
  data::Splits empty;
  in.splits = &empty;
  CHECK_THROWS_AS(ftlab::train::train(model, in, tc, Strategy::vft), DataError);
}

TEST_CASE("train: determinism and trace contents") {
  SmallRun run;
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.seed = 4;
  auto m1 = run.build(2);
  auto m2 = run.build(2);
  const auto t1 = ftlab::train::train(m1, run.inputs(), tc, Strategy::vft);
  const auto t2 = ftlab::train::train(m2, run.inputs(), tc, Strategy::vft);
  REQUIRE(t1.epochs.size() == 3);
  CHECK(same_records(t1, t2));
  CHECK(m1.hash_of({"head.weight", "layers.0.attn.q.weight"}) ==
        m2.hash_of({"head.weight", "layers.0.attn.q.weight"}));
  for (const auto& e : t1.epochs) {
    CHECK(e.id_acc >= 0.0);
    CHECK(e.id_acc <= 1.0);
    CHECK(e.mem_bytes > 0);
    CHECK(e.iter_time_s.has_value());
    CHECK_FALSE(e.kl.has_value());
  }
  TrainConfig other = tc;
  other.seed = 5;
  auto m3 = run.build(2);
  CHECK_FALSE(same_records(t1, ftlab::train::train(m3, run.inputs(), other, Strategy::vft)));
}

TEST_CASE("train: pbft with few-shot sampling and warmup") {
  SmallRun run;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.k_per_class = 8;
  tc.warmup_ratio = 0.2;
  tc.prompt = data::Template::eval_harness;
  tc.hidden_dropout = 0.3;
  auto model = run.build(3);
  const auto t = ftlab::train::train(model, run.inputs(), tc, Strategy::pbft);
  CHECK(t.epochs.size() == 2);
  CHECK(model.config().hidden_dropout == 0.3);
  TrainConfig too_many = tc;
  too_many.k_per_class = 81;
  CHECK_THROWS_AS(ftlab::train::train(model, run.inputs(), too_many, Strategy::pbft), DataError);
}

TEST_CASE("train: lora changes only adapters and head") {
  SmallRun run;
  auto model = run.build(4);
  Rng rng(4);
  lora::inject(model, {.rank = 4}, rng);
  const auto base = model.base_hash();
  std::vector<std::string> adapter_names;
  for (const auto& p : model.trainable_parameters()) adapter_names.push_back(p.name);
  const auto adapters_before = model.hash_of(adapter_names);
  TrainConfig tc;
  tc.epochs = 2;
  tc.lora_dropout = 0.1;
  ftlab::train::train(model, run.inputs(), tc, Strategy::vft_lora);
  CHECK(model.base_hash() == base);
  CHECK(model.hash_of(adapter_names) != adapters_before);
  CHECK(lora::attached_config(model)->dropout == 0.1);
}

TEST_CASE("train: cd keeps the teacher frozen and records KL") {
  SmallRun run;
  auto teacher = run.build(5);
  teacher.set_all_trainable(false);
  std::vector<std::string> names;
  for (const auto& p : teacher.parameters()) names.push_back(p.name);
  const auto before = teacher.hash_of(names);
  auto student = run.build(5);
  auto in = run.inputs();
  in.teacher = &teacher;
  in.distill = DistillConfig{};
  TrainConfig tc;
  tc.epochs = 2;
  const auto t = ftlab::train::train(student, in, tc, Strategy::cd);
  CHECK(teacher.hash_of(names) == before);
  for (const auto& e : t.epochs) {
    REQUIRE(e.kl.has_value());
    CHECK(*e.kl >= 0.0);
  }
}

TEST_CASE("train: non-finite values abort with context") {
  SmallRun run;
  auto model = run.build(6);
  model.parameter("layers.1.ffn.in.weight").mutable_data()[0] = std::nan("");
  TrainConfig tc;
  tc.epochs = 1;
  try {
    ftlab::train::train(model, run.inputs(), tc, Strategy::vft);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.step() == 0);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("memory proxy: lora peak below vft peak") {
  SmallRun run;
  TrainConfig tc;
  tc.epochs = 1;
  auto full = run.build(7);
  const auto vft = ftlab::train::train(full, run.inputs(), tc, Strategy::vft);
  auto adapted = run.build(7);
  Rng rng(7);
  lora::inject(adapted, {.rank = 4}, rng);
  const auto lo = ftlab::train::train(adapted, run.inputs(), tc, Strategy::vft_lora);
  CHECK(lo.max_mem_bytes() < vft.max_mem_bytes());

  reset_memory_proxy();
  const auto base = memory_proxy();
  {
    auto t = Tensor::zeros({10, 10});
    CHECK(memory_proxy() - base == 800);
  }
  reset_memory_proxy();
  CHECK(memory_proxy() == base);
}

TEST_CASE("trace files") {
  const auto dir = scratch_dir("trace");
  MetricsTrace t;
  t.run_id = make_run_id({{"a", 1}});
  t.strategy = "vft";
  t.hyperparameters = {{"learning_rate", 1e-3}, {"optimizer", "adamw"}};
  t.epochs = {{1, 0.7, 0.3, 0.25, 1.5, 1000, std::nullopt},
              {2, 0.5, 0.8169, 0.8120, 2.5, 1200, std::nullopt},
              {3, 0.4, 0.5, 0.6, 1.0, 900, std::nullopt}};
  write_trace(dir / "trace.jsonl", t);
  write_timing(dir / "timing.jsonl", t);

  std::ifstream in(dir / "trace.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::vector<std::string> expected{"epoch", "id_acc", "iter_time_s", "loss", "mem_bytes",
                                      "ood_acc", "run_id", "strategy"};
    if (n == 0) expected.insert(expected.begin() + 1, "hyperparameters");
    CHECK(keys == expected);
    CHECK(j.at("iter_time_s").is_null());
    ++n;
  }
  CHECK(n == 3);

  const auto back = read_trace(dir / "trace.jsonl");
  CHECK(back.run_id == t.run_id);
  CHECK(back.hyperparameters == t.hyperparameters);
  CHECK(back.max_id_acc() == 0.8169);
  CHECK(back.max_ood_acc() == 0.8120);
  CHECK(back.max_mem_bytes() == 1200);
  CHECK_FALSE(back.max_iter_time().has_value());
  const auto timed = read_trace(dir / "trace.jsonl", dir / "timing.jsonl");
  CHECK(timed.max_iter_time() == 2.5);

  write_trace(dir / "inline.jsonl", t, true);
  CHECK(read_trace(dir / "inline.jsonl").max_iter_time() == 2.5);
  CHECK(make_run_id({{"a", 1}}) != make_run_id({{"a", 2}}));
  CHECK(make_run_id({{"a", 1}}).size() == 16);
}

TEST_CASE("TrainConfig json round trip") {
  TrainConfig c;
  c.k_per_class = 16;
  c.prompt = data::Template::gpt3;
  c.attention_dropout = 0.14;
  c.optimizer = OptimizerKind::sgd;
  nlohmann::json j = c;
  CHECK(j.get<TrainConfig>() == c);
  CHECK(nlohmann::json::object().get<TrainConfig>() == TrainConfig{});
  CHECK_THROWS_AS((nlohmann::json{{"optimizer", "lion"}}.get<TrainConfig>()), ConfigError);
}

TEST_CASE("vft loss falls over the first five epochs (seeds 0-4)") {
  const auto splits = synthetic_splits(2000, 500, 7);
  const auto vocab = data::build_vocab(splits.train);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto model = TransformerClassifier::build(ModelConfig::toy(), rng);
    TrainConfig tc;
    tc.epochs = 5;
    tc.learning_rate = 1e-3;
    tc.seed = seed;
    TrainInputs in;
    in.vocab = &vocab;
    in.splits = &splits;
    const auto t = ftlab::train::train(model, in, tc, Strategy::vft);
    for (std::size_t e = 1; e < t.epochs.size(); ++e) {
      CHECK_MESSAGE(t.epochs[e].loss < t.epochs[e - 1].loss, "seed " << seed << " epoch " << e + 1);
    }
  }
}
