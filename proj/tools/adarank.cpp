// SPDX-License-Identifier: Apache-2.0
//
// adarank command-line tool.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adarank/allocation.hpp"
#include "adarank/compare.hpp"
#include "adarank/config.hpp"
#include "adarank/data.hpp"
#include "adarank/lora.hpp"
#include "adarank/serialize.hpp"
#include "adarank/train.hpp"
#include "adarank/version.hpp"

using namespace adarank;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by commands that build or load a model.
struct ModelOptions {
  std::string model;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_len;

  void add_to(CLI::App* app, bool training) {
    app->add_option("--model", model, "checkpoint file or key=value config")->required();
    app->add_option("--max-len", max_len, "tokens per text");
    if (training) {
      app->add_option("--lr", lr, "learning rate");
      app->add_option("--batch-size", batch_size, "minibatch size");
      app->add_option("--epochs", epochs, "training epochs");
    }
  }
};

struct Loaded {
  Settings settings;
  TransformerModel model;
};

Loaded load_model(const ModelOptions& opt) {
  Loaded out;
  if (TransformerModel::is_checkpoint(opt.model)) {
    out.model = TransformerModel::load(opt.model);
    out.settings.model = out.model.config();
  } else {
    out.settings = load_settings(opt.model);
  }
  if (opt.lr) out.settings.train.learning_rate = *opt.lr;
  if (opt.batch_size) out.settings.train.batch_size = *opt.batch_size;
  if (opt.epochs) out.settings.train.epochs = *opt.epochs;
  if (opt.max_len) out.settings.max_len = *opt.max_len;
  out.settings.validate();
  if (!TransformerModel::is_checkpoint(opt.model)) out.model = TransformerModel::initialize(out.settings.model);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("no seeds given");
  return out;
}

// Scoring sentences: an override file, ten in-domain records, or the bundled corpus.
struct ScoringSource {
  std::string scoring_text;
  std::string in_domain;
  std::uint64_t in_domain_seed = 0;

  void add_to(CLI::App* app) {
    auto* a = app->add_option("--scoring-text", scoring_text, "one sentence per line");
    auto* b = app->add_option("--in-domain", in_domain, "score on 10 records of this CSV");
    a->excludes(b);
    app->add_option("--in-domain-seed", in_domain_seed, "shuffle seed for --in-domain");
  }

  Corpus corpus(std::size_t num_classes) const {
    if (!scoring_text.empty()) return load_corpus(scoring_text);
    if (!in_domain.empty()) return in_domain_corpus(load_csv(in_domain, num_classes), in_domain_seed);
    return generic_corpus();
  }

  std::string name() const {
    if (!scoring_text.empty()) return "file:" + scoring_text;
    if (!in_domain.empty()) return "in-domain:" + in_domain;
    return "generic";
  }
};

void write_text(const std::string& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file);
  out << text;
}

RankPlan load_plan(const std::string& file) { return rank_plan_from_json(read_json(file)); }

std::pair<std::size_t, std::size_t> parse_dims_into(const std::string& dims, ModelConfig& cfg) {
  std::size_t l = 0, d = 0, ff = 0;
  char x1 = 0, x2 = 0;
  std::istringstream in(dims);
  if (!(in >> l >> x1 >> d >> x2 >> ff) || x1 != 'x' || x2 != 'x' || !in.eof()) {
    throw UsageError("--dims must look like 12x768x3072");
  }
  cfg.num_layers = l;
  cfg.d_model = d;
  cfg.d_ff = ff;
  return {d, ff};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdaRank: perturbation-based LoRA rank allocation workbench"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // init
  ModelOptions init_model;
  std::string init_out;
  auto* init = app.add_subcommand("init", "write a seeded model checkpoint");
  init_model.add_to(init, false);
  init->add_option("--out", init_out, "checkpoint path")->required();

  // synth
  std::size_t synth_classes = 4, synth_train = 2000, synth_test = 500, synth_vocab = 8192;
  double synth_noise = 0.05;
  std::uint64_t synth_seed = 0;
  std::string synth_train_out, synth_test_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic keyword classification task");
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--train", synth_train, "training records");
  synth->add_option("--test", synth_test, "test records");
  synth->add_option("--noise", synth_noise, "label noise rate");
  synth->add_option("--vocab-size", synth_vocab, "tokenizer vocabulary size");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--train-out", synth_train_out, "training CSV")->required();
  synth->add_option("--test-out", synth_test_out, "test CSV")->required();

  // score
  ModelOptions score_model;
  ScoringSource score_source;
  std::string score_kinds = "q,k,v,d", score_out;
  PerturbationConfig score_cfg;
  auto* score = app.add_subcommand("score", "disagreement score per module");
  score_model.add_to(score, false);
  score_source.add_to(score);
  score->add_option("--kinds", score_kinds, "module kinds, e.g. q,k,v,d");
  score->add_option("--trials", score_cfg.trials, "perturbed pairs per module");
  score->add_option("--seed", score_cfg.master_seed, "perturbation seed");
  score->add_option("--noise-multiplier", score_cfg.noise_multiplier, "noise std as a multiple of the module std");
  score->add_flag("--per-sample", score_cfg.per_sample, "divide disagreement by the number of inputs");
  score->add_option("--threads", score_cfg.threads, "worker threads");
  score->add_option("--out", score_out, "scores JSON")->required();

  // plan
  std::string plan_scores, plan_out, plan_mode, plan_kinds = "q,k,v,d", plan_dims;
  double plan_rank = 8.0;
  int plan_min_rank = 0;
  std::optional<std::size_t> plan_random;
  std::uint64_t plan_seed = 0;
  auto* plan = app.add_subcommand("plan", "convert scores into integer ranks");
  auto* plan_scores_opt = plan->add_option("--scores", plan_scores, "scores JSON");
  auto* plan_random_opt = plan->add_option("--random", plan_random, "random scores for N layers per kind");
  plan_scores_opt->excludes(plan_random_opt);
  plan->add_option("--seed", plan_seed, "seed for --random");
  plan->add_option("--kinds", plan_kinds, "kinds for --random");
  plan->add_option("--avg-rank", plan_rank, "target average rank");
  plan->add_option("--mode", plan_mode, "joint or separate")->check(CLI::IsMember({"joint", "separate"}));
  plan->add_option("--min-rank", plan_min_rank, "clamp ranks from below");
  plan->add_option("--out", plan_out, "plan JSON")->required();

  // validate-plan
  std::string vp_plan, vp_scores;
  double vp_rank = 8.0;
  auto* validate = app.add_subcommand("validate-plan", "check budget, monotonicity, and formula reproduction");
  validate->add_option("--plan", vp_plan, "plan JSON")->required();
  validate->add_option("--avg-rank", vp_rank, "target average rank");
  validate->add_option("--scores", vp_scores, "scores JSON");

  // train
  ModelOptions train_model;
  std::string train_plan, train_data, train_test, train_out, train_kinds = "q,k,v,d";
  std::optional<int> train_uniform;
  std::optional<std::uint64_t> train_seed;
  std::vector<double> grid_lr;
  std::vector<std::size_t> grid_batch;
  auto* train = app.add_subcommand("train", "finetune one plan");
  train_model.add_to(train, true);
  auto* tp = train->add_option("--plan", train_plan, "plan JSON");
  auto* tu = train->add_option("--uniform-rank", train_uniform, "uniform rank on --kinds");
  tp->excludes(tu);
  train->add_option("--kinds", train_kinds, "kinds for --uniform-rank");
  train->add_option("--data", train_data, "training CSV")->required();
  train->add_option("--test", train_test, "test CSV")->required();
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--grid-lr", grid_lr, "learning rates to search")->delimiter(',');
  train->add_option("--grid-batch", grid_batch, "batch sizes to search")->delimiter(',');
  train->add_option("--out", train_out, "result JSON");

  // compare
  ModelOptions cmp_model;
  ScoringSource cmp_source;
  std::string cmp_data, cmp_test, cmp_out, cmp_table, cmp_seeds = "1,2,3", cmp_kinds = "q,k,v,d",
                                                     cmp_modes = "uniform,adarank,random";
  CompareConfig cmp_cfg;
  auto* cmp = app.add_subcommand("compare", "AdaRank versus uniform and random plans");
  cmp_model.add_to(cmp, true);
  cmp_source.add_to(cmp);
  cmp->add_option("--data", cmp_data, "training CSV")->required();
  cmp->add_option("--test", cmp_test, "test CSV")->required();
  cmp->add_option("--avg-rank", cmp_cfg.avg_rank, "target average rank");
  cmp->add_option("--min-rank", cmp_cfg.min_rank, "clamp ranks from below");
  cmp->add_option("--seeds", cmp_seeds, "comma-separated training seeds");
  cmp->add_option("--kinds", cmp_kinds, "module kinds");
  cmp->add_option("--modes", cmp_modes, "subset of uniform,adarank,random");
  cmp->add_option("--trials", cmp_cfg.scoring.trials, "perturbed pairs per module");
  cmp->add_option("--score-seed", cmp_cfg.scoring.master_seed, "perturbation and random-plan seed");
  cmp->add_option("--out", cmp_out, "report CSV")->required();
  cmp->add_option("--table", cmp_table, "aligned text report");

  // paramcount
  std::string pc_dims, pc_plan, pc_kinds = "q";
  std::optional<int> pc_uniform;
  std::size_t pc_vocab = 28996, pc_positions = 512, pc_types = 2;
  auto* pc = app.add_subcommand("paramcount", "trainable adapter parameters of a plan");
  pc->add_option("--dims", pc_dims, "LxDxFF, e.g. 12x768x3072")->required();
  auto* pcp = pc->add_option("--plan", pc_plan, "plan JSON");
  auto* pcu = pc->add_option("--uniform-rank", pc_uniform, "uniform rank on --kinds");
  pcp->excludes(pcu);
  pc->add_option("--kinds", pc_kinds, "kinds for --uniform-rank");
  pc->add_option("--vocab", pc_vocab, "reference vocabulary size");
  pc->add_option("--positions", pc_positions, "reference position table size");
  pc->add_option("--token-types", pc_types, "reference token type table size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*init) {
      const Loaded m = load_model(init_model);
      m.model.save(init_out);
      std::cout << "wrote " << init_out << " (" << m.model.encoder_parameter_count() << " encoder params)\n";
    } else if (*synth) {
      const Tokenizer tok(synth_vocab);
      const SyntheticVocab vocab = make_synthetic_vocab(synth_classes, tok);
      RngStream train_rng(synth_seed, 1), test_rng(synth_seed, 2);
      Dataset tr = synthetic_dataset(synth_classes, synth_train, vocab, synth_noise, train_rng);
      Dataset te = synthetic_dataset(synth_classes, synth_test, vocab, synth_noise, test_rng);
      write_csv(synth_train_out, tr);
      write_csv(synth_test_out, te);
      std::cout << "wrote " << tr.size() << " train and " << te.size() << " test records\n";
    } else if (*score) {
      const Loaded m = load_model(score_model);
      const Corpus corpus = score_source.corpus(m.settings.model.num_classes);
      const Tokenizer tok(m.settings.model.vocab_size);
      const InputBatch x = make_batch(tok, corpus.sentences, m.settings.max_len);
      const std::vector<ModulePath> paths = list_modules(m.settings.model, parse_kind_list(score_kinds));
      const ScoreVector s = score_modules(m.model, paths, x, score_cfg);
      Json doc = to_json(s);
      doc["scoring_text"] = score_source.name();
      doc["model"] = to_json(m.settings.model);
      write_json(score_out, doc);
      std::cout << "scored " << paths.size() << " modules on " << corpus.sentences.size() << " sentences ("
                << score_source.name() << ")\n";
    } else if (*plan) {
      ScoreVector s;
      if (plan_random) {
        const std::vector<ModuleKind> kinds = parse_kind_list(plan_kinds);
        std::vector<ModulePath> paths;
        for (ModuleKind k : kinds) {
          for (std::size_t l = 0; l < *plan_random; ++l) paths.push_back({k, l});
        }
        if (paths.empty()) throw UsageError("--random needs at least one layer");
        RngStream rng(plan_seed, 0);
        s = random_score_vector(paths, rng);
      } else {
        if (plan_scores.empty()) throw UsageError("plan needs --scores or --random");
        s = score_vector_from_json(read_json(plan_scores));
      }
      AllocationRequest req{s, plan_rank, plan_mode.empty() ? default_mode(s) : parse_mode(plan_mode), plan_min_rank};
      RankPlan p = allocate(req);
      if (plan_random) p.provenance = PlanProvenance::Random;
      Json doc = to_json(p);
      doc["mode"] = std::string(mode_name(req.mode));
      doc["score_seed"] = s.seed;
      write_json(plan_out, doc);
      std::cout << "mean rank " << p.mean_rank() << " over " << p.ranks.size() << " modules ("
                << mode_name(req.mode) << ")\n";
    } else if (*validate) {
      const RankPlan p = load_plan(vp_plan);
      std::optional<ScoreVector> s;
      if (!vp_scores.empty()) s = score_vector_from_json(read_json(vp_scores));
      const PlanReport report = validate_plan(p, s ? &*s : nullptr, vp_rank);
      std::cout << report.summary() << '\n';
      return report.pass ? 0 : kExitFailure;
    } else if (*train) {
      const Loaded m = load_model(train_model);
      RankPlan p;
      if (train_uniform) {
        p = uniform_plan(m.settings.model, parse_kind_list(train_kinds), *train_uniform);
      } else if (!train_plan.empty()) {
        p = load_plan(train_plan);
      } else {
        throw UsageError("train needs --plan or --uniform-rank");
      }
      TrainConfig tc = m.settings.train;
      if (train_seed) tc.seed = *train_seed;
      const Tokenizer tok(m.settings.model.vocab_size);
      const std::size_t c = m.settings.model.num_classes;
      const InputBatch tr = encode(load_csv(train_data, c, Split::Train), tok, m.settings.max_len);
      const InputBatch te = encode(load_csv(train_test, c, Split::Test), tok, m.settings.max_len);
      Json doc;
      if (!grid_lr.empty() || !grid_batch.empty()) {
        GridSpace space{tc, grid_lr.empty() ? std::vector<double>{tc.learning_rate} : grid_lr,
                        grid_batch.empty() ? std::vector<std::size_t>{tc.batch_size} : grid_batch};
        const GridResult g = grid_search(space, m.model, p, tr);
        tc = g.best;
        Json points = Json::array();
        for (const GridPoint& gp : g.points) {
          points.push_back({{"learning_rate", gp.config.learning_rate},
                            {"batch_size", gp.config.batch_size},
                            {"validation_accuracy", gp.validation_accuracy},
                            {"diverged", gp.diverged}});
        }
        doc["grid"] = points;
      }
      const RunResult r = finetune(m.model, p, tr, te, tc);
      Json result = to_json(r);
      for (auto& [k, v] : doc.items()) result[k] = v;
      result["train_config"] = to_json(tc);
      result["plan"] = to_json(p);
      if (!train_out.empty()) write_json(train_out, result);
      std::printf("test accuracy %.2f%%  train accuracy %.2f%%  adapter params %zu\n", 100.0 * r.test_accuracy,
                  100.0 * r.train_accuracy, r.adapter_params);
    } else if (*cmp) {
      const Loaded m = load_model(cmp_model);
      cmp_cfg.train = m.settings.train;
      cmp_cfg.seeds = parse_seeds(cmp_seeds);
      cmp_cfg.kinds = parse_kind_list(cmp_kinds);
      cmp_cfg.modes = parse_compare_modes(cmp_modes);
      const Tokenizer tok(m.settings.model.vocab_size);
      const std::size_t c = m.settings.model.num_classes;
      const InputBatch tr = encode(load_csv(cmp_data, c, Split::Train), tok, m.settings.max_len);
      const InputBatch te = encode(load_csv(cmp_test, c, Split::Test), tok, m.settings.max_len);
      const Corpus corpus = cmp_source.corpus(c);
      const InputBatch x = make_batch(tok, corpus.sentences, m.settings.max_len);
      std::cerr << "scoring on " << corpus.sentences.size() << " sentences (" << cmp_source.name() << ")\n";
      const ComparisonReport report =
          compare(m.model, tr, te, x, cmp_cfg, [](const std::string& msg) { std::cerr << msg << '\n'; });
      write_text(cmp_out, report.to_csv());
      if (!cmp_table.empty()) write_text(cmp_table, report.to_table());
      std::cout << report.to_table();
      const std::vector<std::string> over = report.budget_violations();
      for (const std::string& label : over) std::cerr << "budget exceeded: " << label << '\n';
      return over.empty() ? 0 : kExitFailure;
    } else if (*pc) {
      ModelConfig cfg;
      parse_dims_into(pc_dims, cfg);
      RankPlan p;
      if (pc_uniform) {
        p = uniform_plan(cfg, parse_kind_list(pc_kinds), *pc_uniform);
      } else if (!pc_plan.empty()) {
        p = load_plan(pc_plan);
      } else {
        throw UsageError("paramcount needs --plan or --uniform-rank");
      }
      const std::size_t count = trainable_param_count(p, cfg);
      const std::size_t reference =
          reference_non_head_params(cfg.num_layers, cfg.d_model, cfg.d_ff, pc_vocab, pc_positions, pc_types);
      std::printf("trainable params: %zu\nreference non-head params: %zu\nfraction: %.4f%% (%.2f%%)\n", count,
                  reference, 100.0 * static_cast<double>(count) / static_cast<double>(reference),
                  100.0 * static_cast<double>(count) / static_cast<double>(reference));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
