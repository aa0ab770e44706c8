// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <stdexcept>
#include <thread>
#include <vector>

#include "adarank/model.hpp"
#include "adarank/rng.hpp"
#include "adarank/tensor.hpp"

namespace adarank {

struct PerturbationConfig {
  std::size_t trials = 5;
  std::uint64_t master_seed = 0;
  double noise_multiplier = 1.0;
  /// Divide each disagreement by the number of input rows.
  bool per_sample = false;
  std::size_t threads = 1;

  void validate() const;
};

/// Mean disagreement per module, iterated in list_modules order.
struct ScoreVector {
  std::map<ModulePath, double> scores;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  double noise_multiplier = 1.0;
  std::size_t num_inputs = 0;

  std::vector<ModuleKind> kinds() const;
  std::vector<double> values() const;
  std::vector<double> values_of(ModuleKind kind) const;

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

/// Logits of `model` with `replacement` standing in for the weight at `path`.
Tensor forward_with_override(const TransformerModel& model, const InputBatch& x, const ModulePath& path,
                             const Tensor& replacement);

/// Anything whose named module weights can be swapped for one forward call.
template <class Model, class Input>
concept PerturbableModel = requires(const Model& m, const Input& x, const ModulePath& p, const Tensor& w) {
  { m.get_weights(p) } -> std::convertible_to<const Tensor&>;
  { forward_with_override(m, x, p, w) } -> std::same_as<Tensor>;
};

/// W + delta with delta ~ N(0, noise_multiplier * population_std(W)) elementwise.
template <class Model>
Tensor perturb_instance(const Model& model, const ModulePath& path, double noise_multiplier, RngStream& rng) {
  const Tensor& w = model.get_weights(path);
  const double std = noise_multiplier * population_std(w);
  Tensor out = w;
  if (std == 0.0) return out;
  const Tensor noise = gaussian(w.shape(), 0.0, std, rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  return out;
}

/// l1 distance between the logits of two instances, each perturbed only at `path`.
template <class Model, class Input>
  requires PerturbableModel<Model, Input>
double pair_disagreement(const Model& model, const ModulePath& path, const Input& x, RngStream rng_a,
                         RngStream rng_b, double noise_multiplier = 1.0) {
  const Tensor wa = perturb_instance(model, path, noise_multiplier, rng_a);
  const Tensor wb = perturb_instance(model, path, noise_multiplier, rng_b);
  return l1_diff(forward_with_override(model, x, path, wa), forward_with_override(model, x, path, wb));
}

/// Substream of one perturbed instance; keyed by module identity, trial, and
/// instance (0 or 1) so the draw never depends on evaluation order.
inline RngStream instance_stream(std::uint64_t master_seed, const ModulePath& path, std::size_t trial,
                                 std::size_t instance) {
  return RngStream(master_seed, RngStream::stream_id({static_cast<std::uint64_t>(path.kind), path.layer, trial,
                                                      instance}));
}

std::size_t input_rows(const InputBatch& x);
inline std::size_t input_rows(const Tensor& x) { return x.rows(); }

/// Mean of `cfg.trials` pair disagreements per path. Each trial draws a fresh
/// pair of perturbations; per-path sums run in trial order, so results are
/// identical for any thread count.
template <class Model, class Input>
  requires PerturbableModel<Model, Input>
ScoreVector score_modules(const Model& model, const std::vector<ModulePath>& paths, const Input& x,
                          const PerturbationConfig& cfg) {
  cfg.validate();
  if (paths.empty()) throw std::invalid_argument("score_modules: empty module list");
  std::vector<double> means(paths.size(), 0.0);
  const double rows = static_cast<double>(input_rows(x));
  auto score_one = [&](std::size_t i) {
    double sum = 0.0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      double d = pair_disagreement(model, paths[i], x, instance_stream(cfg.master_seed, paths[i], t, 0),
                                   instance_stream(cfg.master_seed, paths[i], t, 1), cfg.noise_multiplier);
      if (cfg.per_sample) d /= rows;
      sum += d;
    }
    means[i] = sum / static_cast<double>(cfg.trials);
  };

  const std::size_t workers = std::min(std::max<std::size_t>(cfg.threads, 1), paths.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < paths.size(); ++i) score_one(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < paths.size(); i += workers) score_one(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  ScoreVector out;
  out.seed = cfg.master_seed;
  out.trials = cfg.trials;
  out.noise_multiplier = cfg.noise_multiplier;
  out.num_inputs = input_rows(x);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!out.scores.emplace(paths[i], means[i]).second) {
      throw std::invalid_argument("score_modules: duplicate path " + module_name(paths[i]));
    }
  }
  return out;
}

/// A full copy of `model` with only `path` replaced by a perturbed weight.
TransformerModel materialize_instance(const TransformerModel& model, const ModulePath& path, double noise_multiplier,
                                      RngStream rng);

}  // namespace adarank
