// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string_view>
#include <vector>

#include "adarank/model.hpp"
#include "adarank/rng.hpp"
#include "adarank/tape.hpp"
#include "adarank/tensor.hpp"

namespace adarank {

enum class PlanProvenance { AdaRankSeparate, AdaRankJoint, Uniform, Random, Manual };

std::string_view provenance_name(PlanProvenance p);  // "adarank-separate", ...
PlanProvenance parse_provenance(std::string_view text);

/// Integer LoRA rank per module. Rank 0 means the module stays frozen.
struct RankPlan {
  std::map<ModulePath, int> ranks;
  double target_avg_rank = 0.0;
  PlanProvenance provenance = PlanProvenance::Manual;
  int min_rank = 0;

  double mean_rank() const;
  std::vector<ModuleKind> kinds() const;
  /// Ranks of one kind ordered by layer.
  std::vector<int> ranks_of(ModuleKind kind) const;

  friend bool operator==(const RankPlan&, const RankPlan&) = default;
};

RankPlan uniform_plan(const ModelConfig& config, const std::vector<ModuleKind>& kinds, int rank);

/// Sum over entries of rank * (d_in + d_out); the classification head is excluded.
std::size_t trainable_param_count(const RankPlan& plan, const ModelConfig& config);

/// Non-head parameters of a BERT-style encoder: word, position, and token-type
/// embeddings with their norm, L layers (Q/K/V/output projections, both
/// feed-forward matrices, two norms, all biases), and the pooler.
std::size_t reference_non_head_params(std::size_t num_layers, std::size_t d_model, std::size_t d_ff,
                                      std::size_t vocab, std::size_t positions, std::size_t token_types);

struct LoraOptions {
  double init_std = 0.02;  // A ~ N(0, init_std); B starts at zero
  double scale = 1.0;
};

struct LoraAdapter {
  Tensor a;  // d_in x rank
  Tensor b;  // rank x d_out
  double scale = 1.0;

  std::size_t rank() const { return a.cols(); }
  /// scale * A * B, shaped like the adapted weight.
  Tensor delta() const;
};

/// A frozen base model plus per-module adapters and a trainable copy of the head.
class AdaptedModel {
 public:
  /// Adapter init for a module draws from the substream keyed by
  /// (rng.id(), canonical module index), so an adapter's values do not depend
  /// on which other modules the plan covers.
  static AdaptedModel attach(const TransformerModel& base, const RankPlan& plan, const RngStream& rng,
                             const LoraOptions& options = {});

  const TransformerModel& base() const noexcept { return base_; }
  const RankPlan& plan() const noexcept { return plan_; }
  const std::map<ModulePath, LoraAdapter>& adapters() const noexcept { return adapters_; }
  std::map<ModulePath, LoraAdapter>& adapters() noexcept { return adapters_; }
  const Tensor& head_weight() const noexcept { return head_weight_; }
  const Tensor& head_bias() const noexcept { return head_bias_; }

  Tensor forward(const InputBatch& batch) const;

  /// Records the adapted forward pass. With `trainable`, every adapter factor
  /// and the head become tape parameters, appended to `params` in
  /// trainable_tensors() order.
  Var build_graph(Tape& tape, const InputBatch& batch, bool trainable, std::vector<Var>* params = nullptr) const;

  /// Adapter A/B per module in plan order, then head weight and bias.
  std::vector<Tensor*> trainable_tensors();
  std::vector<const Tensor*> trainable_tensors() const;

  /// Adapter parameters plus the head.
  std::size_t trainable_parameter_count() const;

  /// Bakes W + scale * A * B into a copy of the base with the trained head.
  /// A second call throws "already merged".
  TransformerModel merge();
  bool merged() const noexcept { return merged_; }

 private:
  TransformerModel base_;
  RankPlan plan_;
  std::map<ModulePath, LoraAdapter> adapters_;
  Tensor head_weight_, head_bias_;
  bool merged_ = false;
};

}  // namespace adarank
