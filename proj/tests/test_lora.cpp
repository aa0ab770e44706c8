// SPDX-License-Identifier: Apache-2.0

#include "adarank/kernels.hpp"
#include "adarank/lora.hpp"
#include "adarank/train.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adarank;
using adarank::testing::GradientCheck;
using adarank::testing::random_tensor;

namespace {

ModelConfig tiny(std::size_t d_model = 16) {
  ModelConfig c;
  c.num_layers = 2;
  c.d_model = d_model;
  c.num_heads = 2;
  c.d_ff = 24;
  c.vocab_size = 40;
  c.max_seq_len = 8;
  c.num_classes = 3;
  c.init_seed = 11;
  return c;
}

InputBatch batch_of(std::size_t rows, std::size_t seq_len, std::uint64_t seed, std::size_t vocab = 40) {
  InputBatch x;
  x.batch = rows;
  x.seq_len = seq_len;
  RngStream rng(seed, 3);
  for (std::size_t i = 0; i < rows * seq_len; ++i) x.ids.push_back(static_cast<std::int32_t>(2 + rng.below(vocab - 2)));
  for (std::size_t i = 0; i < rows; ++i) x.labels.push_back(static_cast<int>(i % 3));
  return x;
}

RankPlan mixed_plan(const ModelConfig& c) {
  RankPlan p;
  int r = 0;
  for (const ModulePath& path : list_modules(c, {kAllKinds.begin(), kAllKinds.end()})) p.ranks[path] = (r++ % 4);
  p.target_avg_rank = 2;
  return p;
}

void randomize_b(AdaptedModel& m, std::uint64_t seed) {
  for (auto& [path, ad] : m.adapters()) ad.b = random_tensor(ad.b.shape(), seed++, 0.3);
}

}  // namespace

TEST_CASE("parameter arithmetic") {
  ModelConfig c;
  c.d_model = 64;
  RankPlan p;
  p.ranks[{ModuleKind::Query, 0}] = 2;
  CHECK(trainable_param_count(p, c) == 256);
  CHECK(trainable_param_count(RankPlan{}, c) == 0);

  ModelConfig bert;
  bert.num_layers = 12;
  bert.d_model = 768;
  bert.d_ff = 3072;
  CHECK(trainable_param_count(uniform_plan(bert, {ModuleKind::Query}, 8), bert) == 147456);
  CHECK(trainable_param_count(uniform_plan(bert, {ModuleKind::Value}, 16), bert) == 294912);
  CHECK(trainable_param_count(uniform_plan(bert, {ModuleKind::Dense}, 1), bert) == 12 * (768 + 3072));

  // Embeddings (28996 + 512 + 2) x 768 plus a norm, 12 layers, pooler.
  const std::size_t embeddings = (28996 + 512 + 2) * 768 + 2 * 768;
  const std::size_t per_layer = 4 * (768 * 768 + 768) + 768 * 3072 + 3072 + 3072 * 768 + 768 + 4 * 768;
  CHECK(reference_non_head_params(12, 768, 3072, 28996, 512, 2) == embeddings + 12 * per_layer + 768 * 768 + 768);
  CHECK(reference_non_head_params(12, 768, 3072, 28996, 512, 2) == 108310272);
}

TEST_CASE("attach") {
  const TransformerModel base = TransformerModel::initialize(tiny());
  const RankPlan p = mixed_plan(base.config());
  const AdaptedModel m = AdaptedModel::attach(base, p, RngStream(1, 2));
  std::size_t adapters = 0;
  for (const auto& [path, r] : p.ranks) adapters += r > 0;
  CHECK(m.adapters().size() == adapters);
  for (const auto& [path, ad] : m.adapters()) {
    CHECK(ad.rank() == static_cast<std::size_t>(p.ranks.at(path)));
    CHECK(ad.b == Tensor(ad.b.shape()));
    CHECK(ad.delta() == Tensor(base.get_weights(path).shape()));
  }

  RankPlan zero = uniform_plan(base.config(), {kAllKinds.begin(), kAllKinds.end()}, 0);
  const AdaptedModel frozen = AdaptedModel::attach(base, zero, RngStream(1, 2));
  CHECK(frozen.adapters().empty());
  CHECK(frozen.trainable_parameter_count() == base.head_weight().size() + base.head_bias().size());

  RankPlan bad;
  bad.ranks[{ModuleKind::Key, 5}] = 2;
  CHECK_THROWS(AdaptedModel::attach(base, bad, RngStream(1, 2)));
}

TEST_CASE("adapter init does not depend on the rest of the plan") {
  const TransformerModel base = TransformerModel::initialize(tiny());
  RankPlan one, two;
  one.ranks[{ModuleKind::Value, 1}] = 3;
  two = one;
  two.ranks[{ModuleKind::Query, 0}] = 2;
  const AdaptedModel a = AdaptedModel::attach(base, one, RngStream(4, 9));
  const AdaptedModel b = AdaptedModel::attach(base, two, RngStream(4, 9));
  CHECK(a.adapters().at({ModuleKind::Value, 1}).a == b.adapters().at({ModuleKind::Value, 1}).a);
}

TEST_CASE("transparency at init is exact") {
  const TransformerModel base = TransformerModel::initialize(tiny());
  const InputBatch x = batch_of(4, 6, 1);
  const Tensor expected = base.forward(x);
  for (int r : {0, 1, 4}) {
    const AdaptedModel m =
        AdaptedModel::attach(base, uniform_plan(base.config(), {kAllKinds.begin(), kAllKinds.end()}, r), RngStream(r, 0));
    CHECK(m.forward(x) == expected);
  }
  CHECK(AdaptedModel::attach(base, mixed_plan(base.config()), RngStream(3, 3)).forward(x) == expected);
}

TEST_CASE("merge") {
  const TransformerModel base = TransformerModel::initialize(tiny());
  AdaptedModel fresh = AdaptedModel::attach(base, mixed_plan(base.config()), RngStream(1, 1));
  const TransformerModel merged_fresh = fresh.merge();
  for (const ModulePath& p : list_modules(base.config(), {kAllKinds.begin(), kAllKinds.end()})) {
    CHECK(merged_fresh.get_weights(p) == base.get_weights(p));
  }
  CHECK_THROWS_WITH(fresh.merge(), "already merged");

  AdaptedModel m = AdaptedModel::attach(base, mixed_plan(base.config()), RngStream(1, 1));
  randomize_b(m, 50);
  const Tensor hw = random_tensor(m.head_weight().shape(), 60, 0.5);
  *m.trainable_tensors()[m.trainable_tensors().size() - 2] = hw;
  std::vector<Tensor> adapted;
  for (std::uint64_t s = 0; s < 10; ++s) adapted.push_back(m.forward(batch_of(3, 5, 100 + s)));
  const TransformerModel merged = m.merge();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor y = merged.forward(batch_of(3, 5, 100 + s));
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - adapted[s][i]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("one training step changes only adapters and head") {
  const TransformerModel base = TransformerModel::initialize(tiny());
  const InputBatch x = batch_of(6, 5, 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 6;
  cfg.learning_rate = 1e-2;
  AdaptedModel trained;
  const RankPlan p = mixed_plan(base.config());
  finetune(base, p, x, x, cfg, &trained);
  CHECK(encoder_checksum(trained.base()) == encoder_checksum(base));
  CHECK(weights_checksum(trained.base()) == weights_checksum(base));

  CHECK_FALSE(trained.head_weight() == base.head_weight());
  bool some_b_changed = false;
  for (const auto& [path, ad] : trained.adapters()) some_b_changed = some_b_changed || !(ad.b == Tensor(ad.b.shape()));
  CHECK(some_b_changed);
}

TEST_CASE("autodiff matches central differences for every trainable tensor") {
  const TransformerModel base = TransformerModel::initialize(tiny(16));
  AdaptedModel m = AdaptedModel::attach(base, mixed_plan(base.config()), RngStream(8, 8));
  randomize_b(m, 70);
  const InputBatch x = batch_of(3, 4, 9);

  std::vector<ModulePath> paths;
  for (const auto& [path, ad] : m.adapters()) paths.push_back(path);
  GradientCheck check(
      [&](Tape& tape, const std::vector<Var>& v) {
        GraphHooks hooks;
        for (std::size_t i = 0; i < paths.size(); ++i) hooks.lora[paths[i]] = LoraBinding{v[2 * i], v[2 * i + 1], 1.0};
        hooks.head_weight = v[v.size() - 2];
        hooks.head_bias = v[v.size() - 1];
        return ops::cross_entropy(tape, build_forward(tape, base, x, hooks), x.labels);
      },
      21);
  std::vector<Tensor> inputs;
  for (const Tensor* t : std::as_const(m).trainable_tensors()) inputs.push_back(*t);
  CHECK(check.worst_error(inputs) < 1e-6);
}
