// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adarank/tape.hpp"
#include "adarank/tensor.hpp"

namespace adarank {

/// The four adaptable module kinds. "Dense" is the feed-forward input
/// projection (d_model -> d_ff); the attention output projection is not adaptable.
enum class ModuleKind : int { Query = 0, Key = 1, Value = 2, Dense = 3 };

inline constexpr std::array<ModuleKind, 4> kAllKinds = {ModuleKind::Query, ModuleKind::Key, ModuleKind::Value,
                                                        ModuleKind::Dense};

std::string_view kind_name(ModuleKind kind);  // "query", "key", "value", "dense"
ModuleKind parse_kind(std::string_view text);  // accepts full names and q/k/v/d
/// Parses a comma-separated kind list such as "q,k,v,d".
std::vector<ModuleKind> parse_kind_list(std::string_view text);

struct ModulePath {
  ModuleKind kind = ModuleKind::Query;
  std::size_t layer = 0;

  friend auto operator<=>(const ModulePath&, const ModulePath&) = default;
};

/// Canonical tensor name, e.g. "layer.3.query".
std::string module_name(const ModulePath& path);

struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 8192;
  std::size_t max_seq_len = 64;
  std::size_t num_classes = 4;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// (d_in, d_out) of the weight a module path resolves to.
std::pair<std::size_t, std::size_t> module_dims(ModuleKind kind, std::size_t d_model, std::size_t d_ff);

/// Kind-major (Query, Key, Value, Dense), then ascending layer. Duplicate kinds are ignored.
std::vector<ModulePath> list_modules(const ModelConfig& config, const std::vector<ModuleKind>& kinds);

/// Position of a path in list_modules(config, all kinds).
std::size_t canonical_index(const ModelConfig& config, const ModulePath& path);

struct InputBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::int32_t> ids;  // batch x seq_len, row-major; 0 = padding
  std::vector<int> labels;        // empty or one per row

  std::int32_t at(std::size_t b, std::size_t s) const { return ids[b * seq_len + s]; }
};

struct LayerWeights {
  Tensor query, query_bias;
  Tensor key, key_bias;
  Tensor value, value_bias;
  Tensor attn_out, attn_out_bias;
  Tensor norm1_gamma, norm1_beta;
  Tensor dense, dense_bias;
  Tensor ffn_out, ffn_out_bias;
  Tensor norm2_gamma, norm2_beta;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

/// Post-LN transformer encoder with first-token pooling and a linear
/// classification head. Weights are stored as (d_in x d_out) so a projection
/// is x * W + b.
class TransformerModel {
 public:
  TransformerModel() = default;

  /// Seeded initialization: token embeddings N(0, 1), positions N(0, 0.1),
  /// projections N(0, 1/sqrt(d_in)), zero biases, unit norms, head N(0, 0.02).
  static TransformerModel initialize(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }

  /// Logits (batch x num_classes). Deterministic; never mutates the model.
  Tensor forward(const InputBatch& batch) const;

  const Tensor& get_weights(const ModulePath& path) const;
  /// Replaces a module weight; the shape must match exactly.
  void set_weights(const ModulePath& path, Tensor weights);

  const Tensor& token_embedding() const noexcept { return token_embedding_; }
  const Tensor& position_embedding() const noexcept { return position_embedding_; }
  const Tensor& embed_norm_gamma() const noexcept { return embed_norm_gamma_; }
  const Tensor& embed_norm_beta() const noexcept { return embed_norm_beta_; }
  const LayerWeights& layer(std::size_t i) const { return layers_.at(i); }
  const Tensor& head_weight() const noexcept { return head_weight_; }
  const Tensor& head_bias() const noexcept { return head_bias_; }
  void set_head(Tensor weight, Tensor bias);

  /// Every tensor under its canonical name, in a fixed order.
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::vector<std::pair<std::string, Tensor*>> mutable_named_tensors();

  /// Sets every encoder tensor (everything except the head) to zero.
  void zero_encoder();

  std::size_t encoder_parameter_count() const;

  void save(const std::filesystem::path& file) const;
  static TransformerModel load(const std::filesystem::path& file);
  static bool is_checkpoint(const std::filesystem::path& file);

  friend bool operator==(const TransformerModel&, const TransformerModel&) = default;

 private:
  Tensor& weight_ref(const ModulePath& path);
  const Tensor& weight_ref(const ModulePath& path) const;

  ModelConfig config_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  Tensor embed_norm_gamma_, embed_norm_beta_;
  std::vector<LayerWeights> layers_;
  Tensor head_weight_, head_bias_;
};

/// FNV-1a over the names, shapes, and data of the given tensors.
std::uint64_t weights_checksum(const TransformerModel& model);
std::uint64_t encoder_checksum(const TransformerModel& model);
std::map<std::string, std::uint64_t> tensor_checksums(const TransformerModel& model);

/// Low-rank factors bound into a forward graph: y += scale * (x * A) * B.
struct LoraBinding {
  Var a;
  Var b;
  double scale = 1.0;
};

/// Optional alterations of the forward graph.
struct GraphHooks {
  /// Substitute weight for one module (scoring perturbations).
  std::optional<std::pair<ModulePath, const Tensor*>> weight_override;
  std::map<ModulePath, LoraBinding> lora;
  /// Head variables; when absent the model's own head is used as a constant.
  std::optional<Var> head_weight;
  std::optional<Var> head_bias;
};

/// Records the encoder and head on `tape` and returns the logits variable.
/// Trailing all-padding columns are dropped and padded keys are masked out of
/// every attention softmax.
Var build_forward(Tape& tape, const TransformerModel& model, const InputBatch& batch, const GraphHooks& hooks);

}  // namespace adarank
