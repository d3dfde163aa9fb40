// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinmerge/evaluator.hpp"
#include "kinmerge/evolution.hpp"

namespace kinmerge {

struct FoundationSpec {
  std::string id;
  std::filesystem::path path;
  std::optional<std::map<std::string, double>> scores;  // skip evaluation when given
};

/// A parsed `evolve` configuration. Relative paths are resolved against the
/// directory of the configuration file.
struct RunConfig {
  std::string base_id = "base";
  std::filesystem::path base_path;
  std::vector<FoundationSpec> foundations;
  StrategyConfig strategy;
  nlohmann::json evaluator;  // {"kind": "external" | "synthetic" | "table", ...}
  std::filesystem::path output_dir;
  std::filesystem::path config_dir;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& config_dir);
  static RunConfig load(const std::filesystem::path& path);
};

/// Builds the evaluator described by the configuration. The cache
/// directory for external evaluators comes from KINMERGE_CACHE_DIR when set.
std::unique_ptr<Evaluator> make_evaluator(const nlohmann::json& spec, const std::filesystem::path& config_dir);

/// Loads the base and foundation models into a fresh pool.
Pool make_pool(const RunConfig& cfg);

/// Runs the configured evolution and writes log.jsonl, tree.json, tree.dot,
/// report.csv, timings.json and models/ under the output directory. On a
/// failed run the partial log is still written before the error propagates.
EvolutionResult run_evolve(const RunConfig& cfg);

}  // namespace kinmerge
