// SPDX-License-Identifier: Apache-2.0

#include "adarank/serialize.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "adarank/version.hpp"

namespace adarank {

namespace {

template <class T>
Json per_kind(const std::map<ModulePath, T>& entries, const char* what) {
  Json out = Json::object();
  for (ModuleKind kind : kAllKinds) {
    Json arr = Json::array();
    std::size_t expected_layer = 0;
    for (const auto& [path, value] : entries) {
      if (path.kind != kind) continue;
      if (path.layer != expected_layer) {
        throw std::invalid_argument(std::string(what) + ": layers of " + std::string(kind_name(kind)) +
                                    " are not contiguous from 0");
      }
      ++expected_layer;
      arr.push_back(value);
    }
    if (!arr.empty()) out[std::string(kind_name(kind))] = std::move(arr);
  }
  return out;
}

template <class T>
std::map<ModulePath, T> from_per_kind(const Json& obj, const char* what) {
  if (!obj.is_object()) throw std::invalid_argument(std::string(what) + " must be an object");
  std::map<ModulePath, T> out;
  for (const auto& [key, arr] : obj.items()) {
    const ModuleKind kind = parse_kind(key);
    if (!arr.is_array()) throw std::invalid_argument(std::string(what) + "." + key + " must be an array");
    for (std::size_t layer = 0; layer < arr.size(); ++layer) out[ModulePath{kind, layer}] = arr[layer].template get<T>();
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  return out;
}

}  // namespace

Json to_json(const ScoreVector& scores) {
  Json doc;
  doc["version"] = kToolVersion;
  doc["seed"] = scores.seed;
  doc["trials"] = scores.trials;
  doc["noise_multiplier"] = scores.noise_multiplier;
  doc["num_inputs"] = scores.num_inputs;
  doc["scores"] = per_kind(scores.scores, "scores");
  return doc;
}

ScoreVector score_vector_from_json(const Json& doc) {
  ScoreVector out;
  out.seed = doc.at("seed").get<std::uint64_t>();
  out.trials = doc.at("trials").get<std::size_t>();
  out.noise_multiplier = doc.value("noise_multiplier", 1.0);
  out.num_inputs = doc.value("num_inputs", std::size_t{0});
  out.scores = from_per_kind<double>(doc.at("scores"), "scores");
  for (const auto& [path, s] : out.scores) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("score for " + module_name(path) + " is negative or non-finite");
    }
  }
  return out;
}

Json to_json(const RankPlan& plan) {
  Json doc;
  doc["version"] = kToolVersion;
  doc["target_avg_rank"] = plan.target_avg_rank;
  doc["provenance"] = std::string(provenance_name(plan.provenance));
  doc["min_rank"] = plan.min_rank;
  doc["ranks"] = per_kind(plan.ranks, "ranks");
  return doc;
}

RankPlan rank_plan_from_json(const Json& doc) {
  RankPlan plan;
  plan.target_avg_rank = doc.at("target_avg_rank").get<double>();
  plan.provenance = parse_provenance(doc.value("provenance", std::string("manual")));
  plan.min_rank = doc.value("min_rank", 0);
  plan.ranks = from_per_kind<int>(doc.at("ranks"), "ranks");
  for (const auto& [path, r] : plan.ranks) {
    if (r < 0) throw std::invalid_argument("rank for " + module_name(path) + " is negative");
  }
  return plan;
}

Json to_json(const RunResult& r) {
  Json doc;
  doc["version"] = kToolVersion;
  doc["seed"] = r.seed;
  doc["train_accuracy"] = r.train_accuracy;
  doc["test_accuracy"] = r.test_accuracy;
  if (r.test_auc) doc["test_auc"] = *r.test_auc;
  doc["epoch_loss"] = r.epoch_loss;
  doc["adapter_params"] = r.adapter_params;
  doc["trainable_params"] = r.trainable_params;
  doc["seconds"] = r.seconds;
  return doc;
}

Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
              {"beta1", c.beta1},                 {"beta2", c.beta2},           {"epsilon", c.epsilon},
              {"seed", c.seed}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"num_layers", c.num_layers}, {"d_model", c.d_model},         {"num_heads", c.num_heads},
              {"d_ff", c.d_ff},             {"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
              {"num_classes", c.num_classes}, {"init_seed", c.init_seed}};
}

Json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& file, const Json& doc) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

}  // namespace adarank
