// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "json.hpp"

#include "adarank/lora.hpp"
#include "adarank/scoring.hpp"
#include "adarank/train.hpp"

namespace adarank {

using Json = nlohmann::ordered_json;

// Per-kind arrays are indexed by layer: {"query": [...], "dense": [...]}.
// Kinds without entries are omitted. Every document carries "version".

Json to_json(const ScoreVector& scores);
ScoreVector score_vector_from_json(const Json& doc);

Json to_json(const RankPlan& plan);
RankPlan rank_plan_from_json(const Json& doc);

Json to_json(const RunResult& result);
Json to_json(const TrainConfig& cfg);
Json to_json(const ModelConfig& cfg);

Json read_json(const std::filesystem::path& file);
void write_json(const std::filesystem::path& file, const Json& doc);

}  // namespace adarank
