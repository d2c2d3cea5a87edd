#pragma once

#include <string>

#include <json.hpp>

#include "mvdf/backbone.hpp"
#include "mvdf/tasks.hpp"

namespace mvdf {

// Everything a run needs: architecture plus training recipe. JSON parsing is
// strict in both directions: unknown keys are rejected at every nesting
// level, and a parse/serialize round trip reproduces the document.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

nlohmann::json run_config_to_json(const RunConfig& rc);
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& rc, const std::string& path);

bool operator==(const TaskParams& a, const TaskParams& b);
bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const ModelConfig& a, const ModelConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace mvdf
