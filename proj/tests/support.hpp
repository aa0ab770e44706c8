// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "adarank/kernels.hpp"
#include "adarank/rng.hpp"
#include "adarank/tape.hpp"
#include "adarank/tensor.hpp"

namespace adarank::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double std = 1.0) {
  RngStream rng(seed, 0x7e57);
  return gaussian(shape, 0.0, std, rng);
}

/// Builds an output from tape parameters bound to `inputs`.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Worst per-tensor relative error between tape gradients and central
/// differences of the scalar probe sum(w * f(inputs)), w fixed and random.
/// Relative error of a tensor: max|analytic - numeric| / max(max|analytic|, max|numeric|).
class GradientCheck {
 public:
  GradientCheck(GraphFn f, std::uint64_t probe_seed, double h = 1e-5) : f_(std::move(f)), seed_(probe_seed), h_(h) {}

  double worst_error(const std::vector<Tensor>& inputs, std::vector<bool> check = {}) {
    if (check.empty()) check.assign(inputs.size(), true);
    std::vector<Tensor> analytic = analytic_grads(inputs);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!check[k]) continue;
      Tensor numeric(inputs[k].shape());
      std::vector<Tensor> probe = inputs;
      for (std::size_t i = 0; i < inputs[k].size(); ++i) {
        probe[k][i] = inputs[k][i] + h_;
        const double up = value(probe);
        probe[k][i] = inputs[k][i] - h_;
        const double down = value(probe);
        probe[k][i] = inputs[k][i];
        numeric[i] = (up - down) / (2.0 * h_);
      }
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[k][i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[k][i]), std::abs(numeric[i])});
      }
      if (scale > 0.0) worst = std::max(worst, diff / scale);
    }
    return worst;
  }

 private:
  const Tensor& probe_for(const Tensor& out) {
    if (!probe_ || !probe_->same_shape(out)) probe_ = random_tensor(out.shape(), seed_);
    return *probe_;
  }

  double value(const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    const Var out = f_(tape, vars);
    const Tensor& y = tape.value(out);
    const Tensor& w = probe_for(y);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  }

  std::vector<Tensor> analytic_grads(const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
    const Var out = f_(tape, vars);
    const Var loss = ops::weighted_sum(tape, out, probe_for(tape.value(out)));
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (Var v : vars) grads.push_back(tape.grad(v));
    return grads;
  }

  GraphFn f_;
  std::uint64_t seed_;
  double h_;
  std::optional<Tensor> probe_;
};

}  // namespace adarank::testing
