// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adarank/lora.hpp"
#include "adarank/metrics.hpp"
#include "adarank/model.hpp"

namespace adarank {

/// Adam finetuning of adapters and head under softmax cross-entropy.
struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
  /// "lr=0.001 batch=32 epochs=5 seed=1"
  std::string describe() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Thrown when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> test_auc;
  std::vector<double> epoch_loss;       // mean training loss per epoch
  std::size_t adapter_params = 0;       // plan budget, head excluded
  std::size_t trainable_params = 0;     // adapters plus head
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

/// Attaches `plan` to a copy of `base` (adapter init keyed by cfg.seed),
/// trains adapters and head on `train`, and reports metrics on both splits.
/// The trained model is written to `trained` when given.
RunResult finetune(const TransformerModel& base, const RankPlan& plan, const InputBatch& train,
                   const InputBatch& test, const TrainConfig& cfg, AdaptedModel* trained = nullptr);

Metrics evaluate(const AdaptedModel& model, const InputBatch& data);
Metrics evaluate(const TransformerModel& model, const InputBatch& data);

struct GridSpace {
  TrainConfig base;
  std::vector<double> learning_rates;
  std::vector<std::size_t> batch_sizes;
};

struct GridPoint {
  TrainConfig config;
  double validation_accuracy = 0.0;
  bool diverged = false;
};

struct GridResult {
  TrainConfig best;
  std::vector<GridPoint> points;  // learning-rate-major, in the order given
};

/// Exhaustive search on a seeded 10% validation split of `train`. Ties go to
/// the lower learning rate, then the smaller batch. Diverging points are
/// skipped; if every point diverges the search throws.
GridResult grid_search(const GridSpace& space, const TransformerModel& base, const RankPlan& plan,
                       const InputBatch& train);

/// Seeded (train, validation) split holding out `fraction` of the rows (at least one).
std::pair<InputBatch, InputBatch> validation_split(const InputBatch& data, double fraction, std::uint64_t seed);

}  // namespace adarank
