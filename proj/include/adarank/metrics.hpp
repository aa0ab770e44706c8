// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "adarank/tensor.hpp"

namespace adarank {

/// Index of the largest entry per row; the first index wins ties.
std::vector<int> argmax_rows(const Tensor& logits);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

/// Mann-Whitney AUC of `scores` for labels in {0, 1}; tied scores count one half.
double auc(std::span<const double> scores, std::span<const int> labels);

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // binary tasks only
};

/// Accuracy from logits, plus AUC on the class-1 softmax probability when there are two classes.
Metrics evaluate_logits(const Tensor& logits, std::span<const int> labels);

/// AUC from two-column logits; any other column count throws.
double auc_from_logits(const Tensor& logits, std::span<const int> labels);

}  // namespace adarank
