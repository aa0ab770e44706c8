// SPDX-License-Identifier: Apache-2.0

#include "adarank/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace adarank {

namespace {

constexpr double kBudgetSlack = 1e-12;

std::vector<ModulePath> paths_of(const ScoreVector& scores, const std::vector<ModuleKind>& kinds) {
  std::vector<ModulePath> out;
  for (const auto& [path, s] : scores.scores) {
    if (std::find(kinds.begin(), kinds.end(), path.kind) != kinds.end()) out.push_back(path);
  }
  return out;
}

void assign(RankPlan& plan, const ScoreVector& scores, const std::vector<ModulePath>& paths, double r, int min_rank) {
  std::vector<double> d;
  d.reserve(paths.size());
  for (const ModulePath& p : paths) d.push_back(scores.scores.at(p));
  const std::vector<int> ranks = ranks_from_scores(d, r, min_rank);
  for (std::size_t i = 0; i < paths.size(); ++i) plan.ranks[paths[i]] = ranks[i];
}

}  // namespace

std::string_view mode_name(AllocationMode mode) {
  return mode == AllocationMode::Joint ? "joint" : "separate";
}

AllocationMode parse_mode(std::string_view text) {
  if (text == "joint") return AllocationMode::Joint;
  if (text == "separate") return AllocationMode::Separate;
  throw std::invalid_argument("unknown allocation mode '" + std::string(text) + "'");
}

std::vector<int> ranks_from_scores(std::span<const double> scores, double target_avg_rank, int min_rank) {
  if (scores.empty()) throw std::invalid_argument("ranks_from_scores: empty score vector");
  if (!(target_avg_rank > 0.0) || !std::isfinite(target_avg_rank)) {
    throw std::invalid_argument("target average rank must be positive");
  }
  if (min_rank < 0) throw std::invalid_argument("min_rank must be >= 0");
  double sum = 0.0;
  for (double d : scores) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("scores must be finite and nonnegative");
    sum += d;
  }
  const double mean = sum / static_cast<double>(scores.size());
  if (!(mean > 0.0)) throw std::invalid_argument("degenerate scores");

  std::vector<int> ranks;
  ranks.reserve(scores.size());
  for (double d : scores) {
    const double ratio = d / mean;
    const int rank = static_cast<int>(std::floor(ratio * target_avg_rank));
    ranks.push_back(std::max(rank, min_rank));
  }
  return ranks;
}

RankPlan separate_ranks(const ScoreVector& scores, double target_avg_rank, int min_rank) {
  RankPlan plan;
  plan.target_avg_rank = target_avg_rank;
  plan.provenance = PlanProvenance::AdaRankSeparate;
  plan.min_rank = min_rank;
  for (ModuleKind kind : scores.kinds()) assign(plan, scores, paths_of(scores, {kind}), target_avg_rank, min_rank);
  return plan;
}

RankPlan joint_ranks(const ScoreVector& scores, double target_avg_rank, int min_rank) {
  if (scores.kinds().size() < 2) throw std::invalid_argument("joint allocation needs >= 2 module kinds; use separate mode");
  RankPlan plan;
  plan.target_avg_rank = target_avg_rank;
  plan.provenance = PlanProvenance::AdaRankJoint;
  plan.min_rank = min_rank;
  std::vector<ModulePath> paths;
  for (const auto& [path, s] : scores.scores) paths.push_back(path);
  assign(plan, scores, paths, target_avg_rank, min_rank);
  return plan;
}

AllocationMode default_mode(const ScoreVector& scores) {
  return scores.kinds().size() == kAllKinds.size() ? AllocationMode::Joint : AllocationMode::Separate;
}

RankPlan allocate(const AllocationRequest& request) {
  if (request.scores.scores.empty()) throw std::invalid_argument("allocate: empty scores");
  return request.mode == AllocationMode::Joint
             ? joint_ranks(request.scores, request.target_avg_rank, request.min_rank)
             : separate_ranks(request.scores, request.target_avg_rank, request.min_rank);
}

std::vector<double> random_scores(std::size_t n, RngStream& rng) {
  if (n == 0) throw std::invalid_argument("random_scores: n must be >= 1");
  std::vector<double> out(n);
  for (double& x : out) x = rng.uniform();
  return out;
}

ScoreVector random_score_vector(const std::vector<ModulePath>& paths, RngStream& rng) {
  const std::vector<double> values = random_scores(paths.size(), rng);
  ScoreVector out;
  out.seed = rng.master_seed();
  for (std::size_t i = 0; i < paths.size(); ++i) out.scores[paths[i]] = values[i];
  return out;
}

std::string PlanReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " mean_rank=" << mean_rank;
  for (const auto& [kind, m] : kind_means) os << ' ' << kind_name(kind) << "=" << m;
  for (const PlanViolation& v : violations) os << "\n  " << v.path << ": " << v.message;
  return os.str();
}

PlanReport validate_plan(const RankPlan& plan, const ScoreVector* scores, double target_avg_rank) {
  if (plan.ranks.empty()) throw std::invalid_argument("validate_plan: empty plan");
  PlanReport report;
  auto fail = [&](std::string path, std::string message) {
    report.pass = false;
    report.violations.push_back({std::move(path), std::move(message)});
  };

  for (const auto& [path, r] : plan.ranks) {
    if (r < 0) fail(module_name(path), "negative rank");
  }
  report.mean_rank = plan.mean_rank();
  if (report.mean_rank > target_avg_rank + kBudgetSlack) {
    std::ostringstream os;
    os << "mean rank " << report.mean_rank << " exceeds budget " << target_avg_rank;
    fail("plan", os.str());
  }

  const bool joint = plan.provenance == PlanProvenance::AdaRankJoint;
  for (ModuleKind kind : plan.kinds()) {
    const std::vector<int> ranks = plan.ranks_of(kind);
    double sum = 0.0;
    for (int r : ranks) sum += r;
    const double m = sum / static_cast<double>(ranks.size());
    report.kind_means[kind] = m;
    if (!joint && plan.kinds().size() > 1 && m > target_avg_rank + kBudgetSlack) {
      std::ostringstream os;
      os << "mean rank " << m << " exceeds budget " << target_avg_rank;
      fail(std::string(kind_name(kind)), os.str());
    }
  }

  if (!scores) return report;

  std::vector<std::vector<ModulePath>> groups;
  if (joint) {
    groups.emplace_back();
    for (const auto& [path, r] : plan.ranks) groups.back().push_back(path);
  } else {
    for (ModuleKind kind : plan.kinds()) {
      groups.emplace_back();
      for (const auto& [path, r] : plan.ranks) {
        if (path.kind == kind) groups.back().push_back(path);
      }
    }
  }

  for (const auto& group : groups) {
    std::vector<double> d;
    bool complete = true;
    for (const ModulePath& p : group) {
      auto it = scores->scores.find(p);
      if (it == scores->scores.end()) {
        fail(module_name(p), "no score for this module");
        complete = false;
        continue;
      }
      d.push_back(it->second);
    }
    if (!complete) continue;

    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t j = 0; j < group.size(); ++j) {
        if (d[i] <= d[j] && plan.ranks.at(group[i]) > plan.ranks.at(group[j])) {
          fail(module_name(group[i]), "rank exceeds that of " + module_name(group[j]) + " despite a lower score");
        }
      }
    }

    std::vector<int> expected;
    try {
      expected = ranks_from_scores(d, target_avg_rank, plan.min_rank);
    } catch (const std::invalid_argument& e) {
      fail(module_name(group.front()), std::string("cannot reproduce ranks: ") + e.what());
      continue;
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
      const int actual = plan.ranks.at(group[i]);
      if (actual != expected[i]) {
        fail(module_name(group[i]),
             "rank " + std::to_string(actual) + " differs from formula value " + std::to_string(expected[i]));
      }
    }
  }
  return report;
}

}  // namespace adarank
