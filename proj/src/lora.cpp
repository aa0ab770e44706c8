// SPDX-License-Identifier: Apache-2.0

#include "adarank/lora.hpp"

#include <algorithm>
#include <stdexcept>

#include "adarank/kernels.hpp"

namespace adarank {

std::string_view provenance_name(PlanProvenance p) {
  switch (p) {
    case PlanProvenance::AdaRankSeparate:
      return "adarank-separate";
    case PlanProvenance::AdaRankJoint:
      return "adarank-joint";
    case PlanProvenance::Uniform:
      return "uniform";
    case PlanProvenance::Random:
      return "random";
    case PlanProvenance::Manual:
      return "manual";
  }
  throw std::invalid_argument("unknown provenance");
}

PlanProvenance parse_provenance(std::string_view text) {
  for (PlanProvenance p : {PlanProvenance::AdaRankSeparate, PlanProvenance::AdaRankJoint, PlanProvenance::Uniform,
                           PlanProvenance::Random, PlanProvenance::Manual}) {
    if (provenance_name(p) == text) return p;
  }
  throw std::invalid_argument("unknown plan provenance '" + std::string(text) + "'");
}

double RankPlan::mean_rank() const {
  if (ranks.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [path, r] : ranks) sum += r;
  return sum / static_cast<double>(ranks.size());
}

std::vector<ModuleKind> RankPlan::kinds() const {
  std::vector<ModuleKind> out;
  for (const auto& [path, r] : ranks) {
    if (std::find(out.begin(), out.end(), path.kind) == out.end()) out.push_back(path.kind);
  }
  return out;
}

std::vector<int> RankPlan::ranks_of(ModuleKind kind) const {
  std::vector<int> out;
  for (const auto& [path, r] : ranks) {
    if (path.kind == kind) out.push_back(r);
  }
  return out;
}

RankPlan uniform_plan(const ModelConfig& config, const std::vector<ModuleKind>& kinds, int rank) {
  if (rank < 0) throw std::invalid_argument("uniform rank must be >= 0");
  RankPlan plan;
  plan.target_avg_rank = rank;
  plan.provenance = PlanProvenance::Uniform;
  for (const ModulePath& p : list_modules(config, kinds)) plan.ranks[p] = rank;
  return plan;
}

std::size_t trainable_param_count(const RankPlan& plan, const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& [path, rank] : plan.ranks) {
    if (path.layer >= config.num_layers) throw std::out_of_range("plan path " + module_name(path) + " outside model");
    if (rank < 0) throw std::invalid_argument("negative rank for " + module_name(path));
    const auto [d_in, d_out] = module_dims(path.kind, config.d_model, config.d_ff);
    total += static_cast<std::size_t>(rank) * (d_in + d_out);
  }
  return total;
}

Tensor LoraAdapter::delta() const { return adarank::scale(matmul(a, b), scale); }

AdaptedModel AdaptedModel::attach(const TransformerModel& base, const RankPlan& plan, const RngStream& rng,
                                  const LoraOptions& options) {
  AdaptedModel m;
  m.base_ = base;
  m.plan_ = plan;
  m.head_weight_ = base.head_weight();
  m.head_bias_ = base.head_bias();
  const ModelConfig& cfg = base.config();
  for (const auto& [path, rank] : plan.ranks) {
    if (path.layer >= cfg.num_layers) {
      throw std::out_of_range("unknown module path " + module_name(path) + " for a model with " +
                              std::to_string(cfg.num_layers) + " layers");
    }
    if (rank < 0) throw std::invalid_argument("negative rank for " + module_name(path));
    if (rank == 0) continue;
    const Tensor& w = base.get_weights(path);
    const auto r = static_cast<std::size_t>(rank);
    RngStream stream(rng.master_seed(), RngStream::stream_id({rng.id(), canonical_index(cfg, path)}));
    LoraAdapter adapter;
    adapter.a = gaussian({w.rows(), r}, 0.0, options.init_std, stream);
    adapter.b = Tensor({r, w.cols()});
    adapter.scale = options.scale;
    m.adapters_.emplace(path, std::move(adapter));
  }
  return m;
}

Var AdaptedModel::build_graph(Tape& tape, const InputBatch& batch, bool trainable, std::vector<Var>* params) const {
  GraphHooks hooks;
  auto leaf = [&](const Tensor& t) {
    Var v = trainable ? tape.parameter(t) : tape.constant(t);
    if (trainable && params) params->push_back(v);
    return v;
  };
  for (const auto& [path, adapter] : adapters_) {
    Var a = leaf(adapter.a);
    Var b = leaf(adapter.b);
    hooks.lora.emplace(path, LoraBinding{a, b, adapter.scale});
  }
  hooks.head_weight = leaf(head_weight_);
  hooks.head_bias = leaf(head_bias_);
  return build_forward(tape, base_, batch, hooks);
}

Tensor AdaptedModel::forward(const InputBatch& batch) const {
  Tape tape;
  const Var logits = build_graph(tape, batch, false);
  return tape.value(logits);
}

std::vector<Tensor*> AdaptedModel::trainable_tensors() {
  std::vector<Tensor*> out;
  for (auto& [path, adapter] : adapters_) {
    out.push_back(&adapter.a);
    out.push_back(&adapter.b);
  }
  out.push_back(&head_weight_);
  out.push_back(&head_bias_);
  return out;
}

std::vector<const Tensor*> AdaptedModel::trainable_tensors() const {
  auto mut = const_cast<AdaptedModel*>(this)->trainable_tensors();
  return {mut.begin(), mut.end()};
}

std::size_t AdaptedModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : trainable_tensors()) n += t->size();
  return n;
}

TransformerModel AdaptedModel::merge() {
  if (merged_) throw std::logic_error("already merged");
  TransformerModel out = base_;
  for (const auto& [path, adapter] : adapters_) {
    out.set_weights(path, add(base_.get_weights(path), adapter.delta()));
  }
  out.set_head(head_weight_, head_bias_);
  merged_ = true;
  return out;
}

std::size_t reference_non_head_params(std::size_t num_layers, std::size_t d_model, std::size_t d_ff,
                                      std::size_t vocab, std::size_t positions, std::size_t token_types) {
  const std::size_t d = d_model;
  const std::size_t embeddings = (vocab + positions + token_types) * d + 2 * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t feed_forward = 2 * d * d_ff + d_ff + d;
  const std::size_t norms = 2 * 2 * d;
  const std::size_t pooler = d * d + d;
  return embeddings + num_layers * (attention + feed_forward + norms) + pooler;
}

}  // namespace adarank
