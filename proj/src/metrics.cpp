// SPDX-License-Identifier: Apache-2.0

#include "adarank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adarank {

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw std::invalid_argument("accuracy: size mismatch");
  if (labels.empty()) throw std::invalid_argument("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw std::invalid_argument("auc: needs both classes");
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_from_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.cols() != 2) throw std::invalid_argument("AUC needs exactly 2 classes");
  std::vector<double> p1(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    p1[r] = 1.0 / (1.0 + std::exp(logits.at(r, 0) - logits.at(r, 1)));
  }
  return auc(p1, labels);
}

Metrics evaluate_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw std::invalid_argument("evaluate: row/label count mismatch");
  Metrics m;
  m.accuracy = accuracy(argmax_rows(logits), labels);
  if (logits.cols() == 2) {
    const bool has_both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                          std::find(labels.begin(), labels.end(), 1) != labels.end();
    if (has_both) m.auc = auc_from_logits(logits, labels);
  }
  return m;
}

}  // namespace adarank
