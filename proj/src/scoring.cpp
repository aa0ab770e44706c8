// SPDX-License-Identifier: Apache-2.0

#include "adarank/scoring.hpp"

#include <algorithm>
#include <cmath>

namespace adarank {

void PerturbationConfig::validate() const {
  if (trials == 0) throw std::invalid_argument("trials must be >= 1");
  if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier)) {
    throw std::invalid_argument("noise_multiplier must be finite and >= 0");
  }
}

std::vector<ModuleKind> ScoreVector::kinds() const {
  std::vector<ModuleKind> out;
  for (const auto& [path, s] : scores) {
    if (std::find(out.begin(), out.end(), path.kind) == out.end()) out.push_back(path.kind);
  }
  return out;
}

std::vector<double> ScoreVector::values() const {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& [path, s] : scores) out.push_back(s);
  return out;
}

std::vector<double> ScoreVector::values_of(ModuleKind kind) const {
  std::vector<double> out;
  for (const auto& [path, s] : scores) {
    if (path.kind == kind) out.push_back(s);
  }
  return out;
}

Tensor forward_with_override(const TransformerModel& model, const InputBatch& x, const ModulePath& path,
                             const Tensor& replacement) {
  if (!model.get_weights(path).same_shape(replacement)) {
    throw std::invalid_argument("override for " + module_name(path) + " has the wrong shape");
  }
  Tape tape;
  GraphHooks hooks;
  hooks.weight_override = std::make_pair(path, &replacement);
  const Var logits = build_forward(tape, model, x, hooks);
  return tape.value(logits);
}

std::size_t input_rows(const InputBatch& x) { return x.batch; }

TransformerModel materialize_instance(const TransformerModel& model, const ModulePath& path, double noise_multiplier,
                                      RngStream rng) {
  TransformerModel out = model;
  out.set_weights(path, perturb_instance(model, path, noise_multiplier, rng));
  return out;
}

}  // namespace adarank
