// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <set>

#include "adarank/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adarank;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.d_model = 16;
  c.num_heads = 2;
  c.d_ff = 24;
  c.vocab_size = 50;
  c.max_seq_len = 8;
  c.num_classes = 3;
  c.init_seed = 5;
  return c;
}

InputBatch batch_of(std::size_t rows, std::size_t seq_len, std::uint64_t seed, std::size_t vocab = 50) {
  InputBatch x;
  x.batch = rows;
  x.seq_len = seq_len;
  RngStream rng(seed, 1);
  for (std::size_t i = 0; i < rows * seq_len; ++i) x.ids.push_back(static_cast<std::int32_t>(2 + rng.below(vocab - 2)));
  return x;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.num_heads = 3;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.num_layers = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("module registry") {
  ModelConfig c;
  c.num_layers = 12;
  const auto q = list_modules(c, {ModuleKind::Query});
  REQUIRE(q.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(q[i] == ModulePath{ModuleKind::Query, i});

  c.num_layers = 2;
  const auto all = list_modules(c, {ModuleKind::Dense, ModuleKind::Query, ModuleKind::Value, ModuleKind::Key});
  REQUIRE(all.size() == 8);
  CHECK(all.front() == ModulePath{ModuleKind::Query, 0});
  CHECK(all[2] == ModulePath{ModuleKind::Key, 0});
  CHECK(all.back() == ModulePath{ModuleKind::Dense, 1});
  CHECK_THROWS(list_modules(c, {}));

  CHECK(module_name({ModuleKind::Query, 3}) == "layer.3.query");
  CHECK(parse_kind("d") == ModuleKind::Dense);
  CHECK(parse_kind("value") == ModuleKind::Value);
  CHECK_THROWS(parse_kind("attn"));
  CHECK(parse_kind_list("q,k,v,d").size() == 4);
}

TEST_CASE("every path resolves to a distinct tensor") {
  const TransformerModel m = TransformerModel::initialize(small_config());
  std::set<const Tensor*> seen;
  for (const ModulePath& p : list_modules(m.config(), {kAllKinds.begin(), kAllKinds.end()})) {
    seen.insert(&m.get_weights(p));
  }
  CHECK(seen.size() == 4 * m.config().num_layers);
  const auto [din, dout] = module_dims(ModuleKind::Dense, 16, 24);
  CHECK(m.get_weights({ModuleKind::Dense, 1}).shape() == Shape{din, dout});
}

TEST_CASE("forward") {
  const TransformerModel m = TransformerModel::initialize(small_config());
  const InputBatch x = batch_of(3, 6, 1);
  const Tensor a = m.forward(x);
  CHECK(a.shape() == Shape{3, 3});
  CHECK(a == m.forward(x));

  const std::uint64_t before = weights_checksum(m);
  m.forward(x);
  CHECK(weights_checksum(m) == before);

  InputBatch bad = x;
  bad.ids[4] = 50;
  CHECK_THROWS(m.forward(bad));
  bad.ids[4] = -1;
  CHECK_THROWS(m.forward(bad));
}

TEST_CASE("zero encoder leaves only the head bias") {
  TransformerModel m = TransformerModel::initialize(small_config());
  m.zero_encoder();
  const Tensor bias = Tensor::vector({0.25, -1.5, 3.0});
  m.set_head(m.head_weight(), bias);
  const Tensor logits = m.forward(batch_of(4, 5, 2));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(logits.at(r, c) == bias[c]);
  }
}

TEST_CASE("padding does not change the result") {
  const TransformerModel m = TransformerModel::initialize(small_config());
  InputBatch x = batch_of(2, 4, 3);
  x.ids[3] = 0;  // row 0 has three tokens
  InputBatch wide;
  wide.batch = 2;
  wide.seq_len = 7;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t s = 0; s < 7; ++s) wide.ids.push_back(s < 4 ? x.at(b, s) : 0);
  }
  const Tensor a = m.forward(x), b = m.forward(wide);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("get and set weights") {
  TransformerModel m = TransformerModel::initialize(small_config());
  const InputBatch x = batch_of(2, 5, 4);
  const Tensor base = m.forward(x);
  const ModulePath p{ModuleKind::Value, 1};
  m.set_weights(p, m.get_weights(p));
  CHECK(m.forward(x) == base);

  CHECK_THROWS(m.set_weights({ModuleKind::Dense, 0}, transpose(m.get_weights({ModuleKind::Dense, 0}))));

  Tensor w = m.get_weights(p);
  const Tensor d = adarank::testing::random_tensor(w.shape(), 9);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += d[i];
  m.set_weights(p, w);
  CHECK(m.get_weights(p) == w);
  CHECK_FALSE(m.forward(x) == base);
}

TEST_CASE("initialization is seeded") {
  const ModelConfig c = small_config();
  CHECK(TransformerModel::initialize(c) == TransformerModel::initialize(c));
  ModelConfig other = c;
  other.init_seed = 6;
  CHECK_FALSE(TransformerModel::initialize(c) == TransformerModel::initialize(other));
}

TEST_CASE("checkpoint round trip") {
  const TransformerModel m = TransformerModel::initialize(small_config());
  const auto file = std::filesystem::temp_directory_path() / "adarank_model_test.bin";
  m.save(file);
  CHECK(TransformerModel::is_checkpoint(file));
  const TransformerModel back = TransformerModel::load(file);
  CHECK(back == m);
  CHECK(tensor_checksums(back) == tensor_checksums(m));
  std::filesystem::remove(file);
}
