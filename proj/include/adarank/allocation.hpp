// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "adarank/lora.hpp"
#include "adarank/model.hpp"
#include "adarank/rng.hpp"
#include "adarank/scoring.hpp"

namespace adarank {

enum class AllocationMode { Separate, Joint };

std::string_view mode_name(AllocationMode mode);
AllocationMode parse_mode(std::string_view text);

struct AllocationRequest {
  ScoreVector scores;
  double target_avg_rank = 8.0;
  AllocationMode mode = AllocationMode::Joint;
  int min_rank = 0;
};

/// rank_i = floor((d_i / mean(d)) * r), then max(rank_i, min_rank).
/// The ratio is formed first so that rescaling d leaves the plan unchanged.
std::vector<int> ranks_from_scores(std::span<const double> scores, double target_avg_rank, int min_rank = 0);

/// One normalization per module kind.
RankPlan separate_ranks(const ScoreVector& scores, double target_avg_rank, int min_rank = 0);

/// A single normalization over every scored module; needs at least two kinds.
RankPlan joint_ranks(const ScoreVector& scores, double target_avg_rank, int min_rank = 0);

/// Joint when all four kinds are scored, separate otherwise.
AllocationMode default_mode(const ScoreVector& scores);

RankPlan allocate(const AllocationRequest& request);

/// n i.i.d. Uniform[0, 1) entries.
std::vector<double> random_scores(std::size_t n, RngStream& rng);

/// Uniform[0, 1) scores laid out over `paths`.
ScoreVector random_score_vector(const std::vector<ModulePath>& paths, RngStream& rng);

struct PlanViolation {
  std::string path;
  std::string message;
};

struct PlanReport {
  bool pass = true;
  double mean_rank = 0.0;
  std::map<ModuleKind, double> kind_means;
  std::vector<PlanViolation> violations;

  std::string summary() const;
};

/// Budget check (mean rank <= r, per kind as well unless the plan is joint).
/// With scores: monotonicity and exact reproduction of the rank formula,
/// grouped the way the plan's provenance says it was normalized.
PlanReport validate_plan(const RankPlan& plan, const ScoreVector* scores, double target_avg_rank);

}  // namespace adarank
