// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adarank/lora.hpp"
#include "adarank/model.hpp"
#include "adarank/scoring.hpp"
#include "adarank/train.hpp"

namespace adarank {

enum class CompareMode { Uniform, AdaRank, Random };

std::string_view compare_mode_name(CompareMode mode);  // "uniform", "adarank", "random"
CompareMode parse_compare_mode(std::string_view text);
std::vector<CompareMode> parse_compare_modes(std::string_view comma_list);

struct CompareConfig {
  TrainConfig train;  // train.seed is replaced by each entry of `seeds`
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double avg_rank = 8.0;
  int min_rank = 0;
  std::vector<ModuleKind> kinds = {kAllKinds.begin(), kAllKinds.end()};
  std::vector<CompareMode> modes = {CompareMode::Uniform, CompareMode::AdaRank, CompareMode::Random};
  PerturbationConfig scoring;
};

/// One plan trained under every seed.
struct PlanRow {
  std::string label;  // e.g. "adarank-query", "uniform-all", "adarank-joint"
  std::string scope;  // a kind name, or "all"
  RankPlan plan;
  std::vector<RunResult> runs;  // in seed order

  double mean_train_accuracy() const;
  double mean_test_accuracy() const;
  std::optional<double> mean_test_auc() const;
  double mean_final_loss() const;
};

struct ComparisonReport {
  ModelConfig model;
  std::vector<std::uint64_t> seeds;
  ScoreVector scores;
  std::vector<PlanRow> rows;

  const PlanRow* find(std::string_view label) const;

  /// Adapter budget of the row against the uniform row of the same scope;
  /// nullopt when the scope has no uniform row.
  std::optional<bool> within_budget(const PlanRow& row) const;
  /// Labels of non-uniform rows whose budget exceeds their scope's uniform row.
  std::vector<std::string> budget_violations() const;

  /// One line per (plan, seed) plus a "mean" line per plan. Accuracies are
  /// percentages with two decimals; no timing, so equal inputs give equal bytes.
  std::string to_csv() const;
  /// Aligned per-plan summary.
  std::string to_table() const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Scores every module of `kinds` once on `scoring_input`, builds the plans
/// of each scope (per kind, then "all"), and finetunes each plan per seed.
ComparisonReport compare(const TransformerModel& base, const InputBatch& train, const InputBatch& test,
                         const InputBatch& scoring_input, const CompareConfig& cfg, const ProgressFn& progress = {});

}  // namespace adarank
