// SPDX-License-Identifier: Apache-2.0

#include "adarank/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "adarank/allocation.hpp"

namespace adarank {

namespace {

constexpr std::uint64_t kRandomPlanStream = 0x7a4d;

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string pct(double fraction) { return fixed(100.0 * fraction, 2); }

template <class F>
double mean_over(const std::vector<RunResult>& runs, F f) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const RunResult& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

RankPlan random_plan(const ModelConfig& model, const std::vector<ModuleKind>& kinds, double r, int min_rank,
                     std::uint64_t seed, std::uint64_t scope_id) {
  RngStream rng(seed, RngStream::stream_id({kRandomPlanStream, scope_id}));
  const ScoreVector scores = random_score_vector(list_modules(model, kinds), rng);
  RankPlan plan = kinds.size() >= 2 ? joint_ranks(scores, r, min_rank) : separate_ranks(scores, r, min_rank);
  plan.provenance = PlanProvenance::Random;
  return plan;
}

}  // namespace

std::string_view compare_mode_name(CompareMode mode) {
  switch (mode) {
    case CompareMode::Uniform: return "uniform";
    case CompareMode::AdaRank: return "adarank";
    case CompareMode::Random: return "random";
  }
  return "?";
}

CompareMode parse_compare_mode(std::string_view text) {
  for (CompareMode m : {CompareMode::Uniform, CompareMode::AdaRank, CompareMode::Random}) {
    if (compare_mode_name(m) == text) return m;
  }
  throw std::invalid_argument("unknown compare mode '" + std::string(text) + "'");
}

std::vector<CompareMode> parse_compare_modes(std::string_view comma_list) {
  std::vector<CompareMode> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const std::size_t end = std::min(comma_list.find(',', start), comma_list.size());
    const CompareMode m = parse_compare_mode(comma_list.substr(start, end - start));
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    start = end + 1;
  }
  return out;
}

double PlanRow::mean_train_accuracy() const {
  return mean_over(runs, [](const RunResult& r) { return r.train_accuracy; });
}

double PlanRow::mean_test_accuracy() const {
  return mean_over(runs, [](const RunResult& r) { return r.test_accuracy; });
}

std::optional<double> PlanRow::mean_test_auc() const {
  if (runs.empty() || !std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.test_auc; })) {
    return std::nullopt;
  }
  return mean_over(runs, [](const RunResult& r) { return *r.test_auc; });
}

double PlanRow::mean_final_loss() const {
  return mean_over(runs, [](const RunResult& r) { return r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back(); });
}

const PlanRow* ComparisonReport::find(std::string_view label) const {
  for (const PlanRow& row : rows) {
    if (row.label == label) return &row;
  }
  return nullptr;
}

std::optional<bool> ComparisonReport::within_budget(const PlanRow& row) const {
  for (const PlanRow& other : rows) {
    if (other.scope == row.scope && other.plan.provenance == PlanProvenance::Uniform) {
      return trainable_param_count(row.plan, model) <= trainable_param_count(other.plan, model);
    }
  }
  return std::nullopt;
}

std::vector<std::string> ComparisonReport::budget_violations() const {
  std::vector<std::string> out;
  for (const PlanRow& row : rows) {
    if (row.plan.provenance == PlanProvenance::Uniform) continue;
    if (within_budget(row) == false) out.push_back(row.label);
  }
  return out;
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream os;
  os << "plan,scope,provenance,seed,mean_rank,adapter_params,trainable_params,train_acc_pct,test_acc_pct,"
        "test_auc_pct,final_loss,within_budget\n";
  for (const PlanRow& row : rows) {
    const std::size_t adapter = trainable_param_count(row.plan, model);
    const std::optional<bool> ok = within_budget(row);
    const std::string budget = ok ? (*ok ? "yes" : "no") : "";
    const std::string prefix = row.label + "," + row.scope + "," + std::string(provenance_name(row.plan.provenance)) + ",";
    for (const RunResult& r : row.runs) {
      os << prefix << r.seed << ',' << fixed(row.plan.mean_rank(), 4) << ',' << adapter << ',' << r.trainable_params
         << ',' << pct(r.train_accuracy) << ',' << pct(r.test_accuracy) << ','
         << (r.test_auc ? pct(*r.test_auc) : "") << ',' << fixed(r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back(), 6)
         << ',' << budget << '\n';
    }
    const std::optional<double> auc = row.mean_test_auc();
    os << prefix << "mean," << fixed(row.plan.mean_rank(), 4) << ',' << adapter << ','
       << (row.runs.empty() ? 0 : row.runs.front().trainable_params) << ',' << pct(row.mean_train_accuracy()) << ','
       << pct(row.mean_test_accuracy()) << ',' << (auc ? pct(*auc) : "") << ',' << fixed(row.mean_final_loss(), 6)
       << ',' << budget << '\n';
  }
  return os.str();
}

std::string ComparisonReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(18) << "plan" << std::setw(8) << "scope" << std::right << std::setw(10) << "mean_rank"
     << std::setw(12) << "adapters" << std::setw(10) << "train%" << std::setw(10) << "test%" << std::setw(10)
     << "budget" << '\n';
  for (const PlanRow& row : rows) {
    const std::optional<bool> ok = within_budget(row);
    os << std::left << std::setw(18) << row.label << std::setw(8) << row.scope << std::right << std::setw(10)
       << fixed(row.plan.mean_rank(), 3) << std::setw(12) << trainable_param_count(row.plan, model) << std::setw(10)
       << pct(row.mean_train_accuracy()) << std::setw(10) << pct(row.mean_test_accuracy()) << std::setw(10)
       << (ok ? (*ok ? "ok" : "OVER") : "-") << '\n';
  }
  return os.str();
}

ComparisonReport compare(const TransformerModel& base, const InputBatch& train, const InputBatch& test,
                         const InputBatch& scoring_input, const CompareConfig& cfg, const ProgressFn& progress) {
  if (cfg.seeds.empty()) throw std::invalid_argument("compare: no seeds");
  if (cfg.kinds.empty()) throw std::invalid_argument("compare: no module kinds");
  if (cfg.modes.empty()) throw std::invalid_argument("compare: no modes");
  auto has = [&](CompareMode m) { return std::find(cfg.modes.begin(), cfg.modes.end(), m) != cfg.modes.end(); };
  if (has(CompareMode::Uniform) && cfg.avg_rank != std::floor(cfg.avg_rank)) {
    throw std::invalid_argument("compare: uniform plans need an integer average rank");
  }
  const ModelConfig& mc = base.config();

  ComparisonReport report;
  report.model = mc;
  report.seeds = cfg.seeds;
  if (has(CompareMode::AdaRank)) {
    if (progress) progress("scoring " + std::to_string(list_modules(mc, cfg.kinds).size()) + " modules");
    report.scores = score_modules(base, list_modules(mc, cfg.kinds), scoring_input, cfg.scoring);
  }

  std::vector<ModuleKind> kinds;
  for (ModuleKind k : kAllKinds) {
    if (std::find(cfg.kinds.begin(), cfg.kinds.end(), k) != cfg.kinds.end()) kinds.push_back(k);
  }

  auto add_scope = [&](const std::string& scope, const std::vector<ModuleKind>& scope_kinds, std::uint64_t scope_id) {
    const bool joint = scope_kinds.size() >= 2;
    if (has(CompareMode::Uniform)) {
      RankPlan plan = uniform_plan(mc, scope_kinds, static_cast<int>(cfg.avg_rank));
      plan.target_avg_rank = cfg.avg_rank;
      report.rows.push_back({"uniform-" + scope, scope, plan, {}});
    }
    if (has(CompareMode::AdaRank)) {
      ScoreVector subset = report.scores;
      std::erase_if(subset.scores, [&](const auto& e) {
        return std::find(scope_kinds.begin(), scope_kinds.end(), e.first.kind) == scope_kinds.end();
      });
      RankPlan plan = joint ? joint_ranks(subset, cfg.avg_rank, cfg.min_rank)
                            : separate_ranks(subset, cfg.avg_rank, cfg.min_rank);
      report.rows.push_back({joint ? std::string("adarank-joint") : "adarank-" + scope, scope, plan, {}});
    }
    if (has(CompareMode::Random)) {
      RankPlan plan = random_plan(mc, scope_kinds, cfg.avg_rank, cfg.min_rank, cfg.scoring.master_seed, scope_id);
      report.rows.push_back({joint ? std::string("random-joint") : "random-" + scope, scope, plan, {}});
    }
  };
  for (ModuleKind k : kinds) add_scope(std::string(kind_name(k)), {k}, static_cast<std::uint64_t>(k));
  if (kinds.size() >= 2) add_scope("all", kinds, kAllKinds.size());

  for (PlanRow& row : report.rows) {
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      row.runs.push_back(finetune(base, row.plan, train, test, tc));
      if (progress) {
        progress(row.label + " seed " + std::to_string(seed) + ": test " + pct(row.runs.back().test_accuracy) + "% (" +
                 fixed(row.runs.back().seconds, 1) + " s)");
      }
    }
  }
  return report;
}

}  // namespace adarank
