// SPDX-License-Identifier: Apache-2.0

#include "adarank/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "adarank/data.hpp"
#include "adarank/kernels.hpp"
#include "adarank/tape.hpp"

namespace adarank {

namespace {

constexpr std::uint64_t kAdapterStream = 0x10a4;
constexpr std::uint64_t kShuffleStream = 0x5f1e;
constexpr std::uint64_t kSplitStream = 0x5b17;

void shuffle_indices(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

struct Adam {
  std::vector<Tensor> m, v;
  std::size_t step = 0;

  explicit Adam(const std::vector<Tensor*>& params) {
    for (const Tensor* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
  }

  void update(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, const TrainConfig& cfg) {
    ++step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      const Tensor& g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * g[i];
        v[k][i] = cfg.beta2 * v[k][i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[k][i] / c1;
        const double vhat = v[k][i] / c2;
        p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
  }
};

Metrics metrics_of(const Tensor& logits, const InputBatch& data) {
  if (data.labels.size() != data.batch) throw std::invalid_argument("evaluation data needs one label per row");
  return evaluate_logits(logits, data.labels);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "lr=" << learning_rate << " batch=" << batch_size << " epochs=" << epochs << " seed=" << seed;
  return os.str();
}

Metrics evaluate(const AdaptedModel& model, const InputBatch& data) { return metrics_of(model.forward(data), data); }

Metrics evaluate(const TransformerModel& model, const InputBatch& data) {
  return metrics_of(model.forward(data), data);
}

RunResult finetune(const TransformerModel& base, const RankPlan& plan, const InputBatch& train,
                   const InputBatch& test, const TrainConfig& cfg, AdaptedModel* trained) {
  cfg.validate();
  if (train.batch == 0 || train.labels.size() != train.batch) {
    throw std::invalid_argument("training data needs at least one labelled row");
  }
  const auto start = std::chrono::steady_clock::now();

  AdaptedModel model = AdaptedModel::attach(base, plan, RngStream(cfg.seed, kAdapterStream));
  std::vector<Tensor*> params = model.trainable_tensors();
  Adam adam(params);

  RunResult result;
  result.seed = cfg.seed;
  result.adapter_params = trainable_param_count(plan, base.config());
  result.trainable_params = model.trainable_parameter_count();

  std::vector<std::size_t> order(train.batch);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads(params.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream rng(cfg.seed, RngStream::stream_id({kShuffleStream, epoch}));
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t last = std::min(order.size(), first + cfg.batch_size);
      const InputBatch batch = select_rows(train, {order.begin() + static_cast<std::ptrdiff_t>(first),
                                                   order.begin() + static_cast<std::ptrdiff_t>(last)});
      Tape tape;
      std::vector<Var> vars;
      const Var logits = model.build_graph(tape, batch, true, &vars);
      const Var loss = ops::cross_entropy(tape, logits, batch.labels);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged (non-finite loss) with " + cfg.describe() + " at epoch " +
                              std::to_string(epoch));
      }
      tape.backward(loss);
      for (std::size_t k = 0; k < vars.size(); ++k) grads[k] = tape.grad(vars[k]);
      adam.update(params, grads, cfg);
      loss_sum += value;
      ++steps;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(steps));
  }

  result.train_accuracy = evaluate(model, train).accuracy;
  const Metrics test_metrics = evaluate(model, test);
  result.test_accuracy = test_metrics.accuracy;
  result.test_auc = test_metrics.auc;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (trained) *trained = std::move(model);
  return result;
}

std::pair<InputBatch, InputBatch> validation_split(const InputBatch& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must lie in (0, 1)");
  if (data.batch < 2) throw std::invalid_argument("validation split needs at least 2 rows");
  std::vector<std::size_t> order(data.batch);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, kSplitStream);
  shuffle_indices(order, rng);
  std::size_t held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.batch)));
  held = std::clamp<std::size_t>(held, 1, data.batch - 1);
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  const std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  return {select_rows(data, rest), select_rows(data, val)};
}

GridResult grid_search(const GridSpace& space, const TransformerModel& base, const RankPlan& plan,
                       const InputBatch& train) {
  if (space.learning_rates.empty() || space.batch_sizes.empty()) throw std::invalid_argument("empty grid");
  const auto [fit, val] = validation_split(train, 0.1, space.base.seed);

  GridResult out;
  const GridPoint* best = nullptr;
  for (double lr : space.learning_rates) {
    for (std::size_t bs : space.batch_sizes) {
      GridPoint point;
      point.config = space.base;
      point.config.learning_rate = lr;
      point.config.batch_size = bs;
      try {
        point.validation_accuracy = finetune(base, plan, fit, val, point.config).test_accuracy;
      } catch (const DivergenceError&) {
        point.diverged = true;
      }
      out.points.push_back(point);
    }
  }
  for (const GridPoint& p : out.points) {
    if (p.diverged) continue;
    if (!best || p.validation_accuracy > best->validation_accuracy ||
        (p.validation_accuracy == best->validation_accuracy &&
         (p.config.learning_rate < best->config.learning_rate ||
          (p.config.learning_rate == best->config.learning_rate && p.config.batch_size < best->config.batch_size)))) {
      best = &p;
    }
  }
  if (!best) throw DivergenceError("every grid point diverged");
  out.best = best->config;
  return out;
}

}  // namespace adarank
