// SPDX-License-Identifier: Apache-2.0

#include "adarank/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "adarank/kernels.hpp"
#include "adarank/rng.hpp"

namespace adarank {

std::string_view kind_name(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Query:
      return "query";
    case ModuleKind::Key:
      return "key";
    case ModuleKind::Value:
      return "value";
    case ModuleKind::Dense:
      return "dense";
  }
  throw std::invalid_argument("unknown module kind");
}

ModuleKind parse_kind(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "q" || t == "query") return ModuleKind::Query;
  if (t == "k" || t == "key") return ModuleKind::Key;
  if (t == "v" || t == "value") return ModuleKind::Value;
  if (t == "d" || t == "dense") return ModuleKind::Dense;
  throw std::invalid_argument("unknown module kind '" + std::string(text) + "'");
}

std::vector<ModuleKind> parse_kind_list(std::string_view text) {
  std::vector<ModuleKind> kinds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, comma - start);
    if (!item.empty()) kinds.push_back(parse_kind(item));
    start = comma + 1;
  }
  if (kinds.empty()) throw std::invalid_argument("empty module kind list");
  return kinds;
}

std::string module_name(const ModulePath& path) {
  return "layer." + std::to_string(path.layer) + "." + std::string(kind_name(path.kind));
}

void ModelConfig::validate() const {
  if (num_layers == 0 || d_model == 0 || num_heads == 0 || d_ff == 0 || max_seq_len == 0 || num_classes == 0) {
    throw std::invalid_argument("model config fields must all be >= 1");
  }
  if (vocab_size < 3) throw std::invalid_argument("vocab_size must be >= 3 (ids 0 and 1 are reserved)");
  if (d_model % num_heads != 0) throw std::invalid_argument("d_model must be divisible by num_heads");
}

std::pair<std::size_t, std::size_t> module_dims(ModuleKind kind, std::size_t d_model, std::size_t d_ff) {
  if (kind == ModuleKind::Dense) return {d_model, d_ff};
  return {d_model, d_model};
}

std::vector<ModulePath> list_modules(const ModelConfig& config, const std::vector<ModuleKind>& kinds) {
  if (kinds.empty()) throw std::invalid_argument("list_modules: kinds must be nonempty");
  std::vector<ModulePath> out;
  for (ModuleKind kind : kAllKinds) {
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) continue;
    for (std::size_t layer = 0; layer < config.num_layers; ++layer) out.push_back({kind, layer});
  }
  return out;
}

std::size_t canonical_index(const ModelConfig& config, const ModulePath& path) {
  return static_cast<std::size_t>(path.kind) * config.num_layers + path.layer;
}

// ---------------------------------------------------------------------------

TransformerModel TransformerModel::initialize(const ModelConfig& config) {
  config.validate();
  TransformerModel m;
  m.config_ = config;
  const std::size_t d = config.d_model, ff = config.d_ff;
  std::uint64_t stream = 0;
  auto draw = [&](Shape shape, double std) {
    RngStream rng(config.init_seed, RngStream::stream_id({0x1417, stream++}));
    return gaussian(shape, 0.0, std, rng);
  };
  auto proj = [&](std::size_t d_in, std::size_t d_out) {
    return draw({d_in, d_out}, 1.0 / std::sqrt(static_cast<double>(d_in)));
  };

  m.token_embedding_ = draw({config.vocab_size, d}, 1.0);
  m.position_embedding_ = draw({config.max_seq_len, d}, 0.1);
  m.embed_norm_gamma_ = Tensor({d}, 1.0);
  m.embed_norm_beta_ = Tensor({d}, 0.0);
  m.layers_.resize(config.num_layers);
  for (LayerWeights& l : m.layers_) {
    l.query = proj(d, d);
    l.query_bias = Tensor({d});
    l.key = proj(d, d);
    l.key_bias = Tensor({d});
    l.value = proj(d, d);
    l.value_bias = Tensor({d});
    l.attn_out = proj(d, d);
    l.attn_out_bias = Tensor({d});
    l.norm1_gamma = Tensor({d}, 1.0);
    l.norm1_beta = Tensor({d});
    l.dense = proj(d, ff);
    l.dense_bias = Tensor({ff});
    l.ffn_out = proj(ff, d);
    l.ffn_out_bias = Tensor({d});
    l.norm2_gamma = Tensor({d}, 1.0);
    l.norm2_beta = Tensor({d});
  }
  // The head has its own stream so its values do not depend on encoder size.
  RngStream head_rng(config.init_seed, RngStream::stream_id({0x4ead}));
  m.head_weight_ = gaussian({d, config.num_classes}, 0.0, 0.02, head_rng);
  m.head_bias_ = Tensor({config.num_classes});
  return m;
}

Tensor& TransformerModel::weight_ref(const ModulePath& path) {
  return const_cast<Tensor&>(std::as_const(*this).weight_ref(path));
}

const Tensor& TransformerModel::weight_ref(const ModulePath& path) const {
  if (path.layer >= layers_.size()) {
    throw std::out_of_range("module path " + module_name(path) + " outside model with " +
                            std::to_string(layers_.size()) + " layers");
  }
  const LayerWeights& l = layers_[path.layer];
  switch (path.kind) {
    case ModuleKind::Query:
      return l.query;
    case ModuleKind::Key:
      return l.key;
    case ModuleKind::Value:
      return l.value;
    case ModuleKind::Dense:
      return l.dense;
  }
  throw std::invalid_argument("unknown module kind");
}

const Tensor& TransformerModel::get_weights(const ModulePath& path) const { return weight_ref(path); }

void TransformerModel::set_weights(const ModulePath& path, Tensor weights) {
  Tensor& slot = weight_ref(path);
  if (!slot.same_shape(weights)) {
    throw std::invalid_argument("set_weights " + module_name(path) + ": expected shape " +
                                shape_string(slot.shape()) + ", got " + shape_string(weights.shape()));
  }
  slot = std::move(weights);
}

void TransformerModel::set_head(Tensor weight, Tensor bias) {
  if (!weight.same_shape(head_weight_) || !bias.same_shape(head_bias_)) {
    throw std::invalid_argument("set_head: shape mismatch");
  }
  head_weight_ = std::move(weight);
  head_bias_ = std::move(bias);
}

std::vector<std::pair<std::string, Tensor*>> TransformerModel::mutable_named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed.token", &token_embedding_);
  out.emplace_back("embed.position", &position_embedding_);
  out.emplace_back("embed.norm.gamma", &embed_norm_gamma_);
  out.emplace_back("embed.norm.beta", &embed_norm_beta_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerWeights& l = layers_[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    out.emplace_back(p + "query", &l.query);
    out.emplace_back(p + "query.bias", &l.query_bias);
    out.emplace_back(p + "key", &l.key);
    out.emplace_back(p + "key.bias", &l.key_bias);
    out.emplace_back(p + "value", &l.value);
    out.emplace_back(p + "value.bias", &l.value_bias);
    out.emplace_back(p + "attn_out", &l.attn_out);
    out.emplace_back(p + "attn_out.bias", &l.attn_out_bias);
    out.emplace_back(p + "norm1.gamma", &l.norm1_gamma);
    out.emplace_back(p + "norm1.beta", &l.norm1_beta);
    out.emplace_back(p + "dense", &l.dense);
    out.emplace_back(p + "dense.bias", &l.dense_bias);
    out.emplace_back(p + "ffn_out", &l.ffn_out);
    out.emplace_back(p + "ffn_out.bias", &l.ffn_out_bias);
    out.emplace_back(p + "norm2.gamma", &l.norm2_gamma);
    out.emplace_back(p + "norm2.beta", &l.norm2_beta);
  }
  out.emplace_back("head", &head_weight_);
  out.emplace_back("head.bias", &head_bias_);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> TransformerModel::named_tensors() const {
  auto mut = const_cast<TransformerModel*>(this)->mutable_named_tensors();
  return {mut.begin(), mut.end()};
}

void TransformerModel::zero_encoder() {
  for (auto& [name, t] : mutable_named_tensors()) {
    if (name.rfind("head", 0) != 0) t->fill(0.0);
  }
}

std::size_t TransformerModel::encoder_parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) {
    if (name.rfind("head", 0) != 0) n += t->size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint: "ADARANK1", u32 version, 8 x u64 config, u64 tensor count, then
// per tensor: u32 name length, name bytes, u32 ndim, u64 dims, f64 data.
// All integers and floats little-endian.

namespace {

constexpr char kMagic[8] = {'A', 'D', 'A', 'R', 'A', 'N', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) throw std::runtime_error("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace

void TransformerModel::save(const std::filesystem::path& file) const {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os.write(kMagic, 8);
  put_u32(os, kCheckpointVersion);
  for (std::uint64_t v : {config_.num_layers, config_.d_model, config_.num_heads, config_.d_ff, config_.vocab_size,
                          config_.max_seq_len, config_.num_classes, config_.init_seed}) {
    put_u64(os, v);
  }
  const auto tensors = named_tensors();
  put_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t dim : t->shape()) put_u64(os, dim);
    for (double x : t->data()) put_u64(os, std::bit_cast<std::uint64_t>(x));
  }
  if (!os) throw std::runtime_error("failed writing " + file.string());
}

bool TransformerModel::is_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  char buf[8];
  return is.read(buf, 8) && std::equal(buf, buf + 8, kMagic);
}

TransformerModel TransformerModel::load(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + file.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error(file.string() + " is not an adarank checkpoint");
  }
  if (get_u32(is) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  ModelConfig cfg;
  cfg.num_layers = get_u64(is);
  cfg.d_model = get_u64(is);
  cfg.num_heads = get_u64(is);
  cfg.d_ff = get_u64(is);
  cfg.vocab_size = get_u64(is);
  cfg.max_seq_len = get_u64(is);
  cfg.num_classes = get_u64(is);
  cfg.init_seed = get_u64(is);
  cfg.validate();

  TransformerModel m = initialize(cfg);
  auto slots = m.mutable_named_tensors();
  const std::uint64_t count = get_u64(is);
  if (count != slots.size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (auto& [expected_name, slot] : slots) {
    const std::uint32_t len = get_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated checkpoint");
    if (name != expected_name) throw std::runtime_error("checkpoint: expected " + expected_name + ", found " + name);
    Shape shape(get_u32(is));
    for (auto& dim : shape) dim = get_u64(is);
    if (shape != slot->shape()) throw std::runtime_error("checkpoint: bad shape for " + name);
    for (double& x : slot->data()) x = std::bit_cast<double>(get_u64(is));
  }
  return m;
}

std::map<std::string, std::uint64_t> tensor_checksums(const TransformerModel& model) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [name, t] : model.named_tensors()) out[name] = checksum(*t);
  return out;
}

namespace {
std::uint64_t fold_checksums(const TransformerModel& model, bool include_head) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : model.named_tensors()) {
    if (!include_head && name.rfind("head", 0) == 0) continue;
    for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    h = mix64(h ^ checksum(*t));
  }
  return h;
}
}  // namespace

std::uint64_t weights_checksum(const TransformerModel& model) { return fold_checksums(model, true); }
std::uint64_t encoder_checksum(const TransformerModel& model) { return fold_checksums(model, false); }

// ---------------------------------------------------------------------------

namespace {

struct ForwardBuilder {
  Tape& tape;
  const TransformerModel& model;
  const GraphHooks& hooks;

  Var projection(Var x, const ModulePath& path, const Tensor& bias) {
    const Tensor* w = &model.get_weights(path);
    if (hooks.weight_override && hooks.weight_override->first == path) w = hooks.weight_override->second;
    Var y = ops::add_bias(tape, ops::matmul(tape, x, tape.constant(*w)), tape.constant(bias));
    if (auto it = hooks.lora.find(path); it != hooks.lora.end()) {
      const LoraBinding& lb = it->second;
      Var delta = ops::matmul(tape, ops::matmul(tape, x, lb.a), lb.b);
      if (lb.scale != 1.0) delta = ops::scale(tape, delta, lb.scale);
      y = ops::add(tape, y, delta);
    }
    return y;
  }
};

}  // namespace

Var build_forward(Tape& tape, const TransformerModel& model, const InputBatch& batch, const GraphHooks& hooks) {
  const ModelConfig& cfg = model.config();
  if (batch.batch == 0 || batch.seq_len == 0 || batch.ids.size() != batch.batch * batch.seq_len) {
    throw std::invalid_argument("malformed input batch");
  }
  if (batch.seq_len > cfg.max_seq_len) {
    throw std::invalid_argument("sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  }
  std::size_t used = 1;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t s = 0; s < batch.seq_len; ++s) {
      const std::int32_t id = batch.at(b, s);
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(cfg.vocab_size));
      }
      if (id != 0) used = std::max(used, s + 1);
    }
  }

  const std::size_t B = batch.batch, S = used;
  std::vector<std::size_t> token_rows(B * S), position_rows(B * S), first_rows(B);
  std::vector<std::uint8_t> key_valid(B * S);
  for (std::size_t b = 0; b < B; ++b) {
    first_rows[b] = b * S;
    for (std::size_t s = 0; s < S; ++s) {
      token_rows[b * S + s] = static_cast<std::size_t>(batch.at(b, s));
      position_rows[b * S + s] = s;
      key_valid[b * S + s] = batch.at(b, s) != 0 || s == 0;
    }
  }

  ForwardBuilder fb{tape, model, hooks};
  Var x = ops::add(tape, ops::gather_rows(tape, tape.constant(model.token_embedding()), std::move(token_rows)),
                   ops::gather_rows(tape, tape.constant(model.position_embedding()), std::move(position_rows)));
  x = ops::layer_norm(tape, x, tape.constant(model.embed_norm_gamma()), tape.constant(model.embed_norm_beta()));

  const ops::AttentionLayout layout{B, S, cfg.num_heads};
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    const LayerWeights& l = model.layer(i);
    Var q = fb.projection(x, {ModuleKind::Query, i}, l.query_bias);
    Var k = fb.projection(x, {ModuleKind::Key, i}, l.key_bias);
    Var v = fb.projection(x, {ModuleKind::Value, i}, l.value_bias);
    Var attn = ops::attention(tape, q, k, v, layout, key_valid);
    Var o = ops::add_bias(tape, ops::matmul(tape, attn, tape.constant(l.attn_out)), tape.constant(l.attn_out_bias));
    Var h = ops::layer_norm(tape, ops::add(tape, x, o), tape.constant(l.norm1_gamma), tape.constant(l.norm1_beta));
    Var f = ops::gelu(tape, fb.projection(h, {ModuleKind::Dense, i}, l.dense_bias));
    Var f2 = ops::add_bias(tape, ops::matmul(tape, f, tape.constant(l.ffn_out)), tape.constant(l.ffn_out_bias));
    x = ops::layer_norm(tape, ops::add(tape, h, f2), tape.constant(l.norm2_gamma), tape.constant(l.norm2_beta));
  }

  Var pooled = ops::gather_rows(tape, x, std::move(first_rows));
  Var hw = hooks.head_weight ? *hooks.head_weight : tape.constant(model.head_weight());
  Var hb = hooks.head_bias ? *hooks.head_bias : tape.constant(model.head_bias());
  return ops::add_bias(tape, ops::matmul(tape, pooled, hw), hb);
}

Tensor TransformerModel::forward(const InputBatch& batch) const {
  Tape tape;
  const Var logits = build_forward(tape, *this, batch, GraphHooks{});
  return tape.value(logits);
}

}  // namespace adarank
