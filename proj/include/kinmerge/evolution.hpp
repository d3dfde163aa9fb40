// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinmerge/error.hpp"
#include "kinmerge/evaluator.hpp"
#include "kinmerge/kinship.hpp"
#include "kinmerge/merge_ops.hpp"
#include "kinmerge/metrics.hpp"
#include "kinmerge/tensor_store.hpp"

namespace kinmerge {

struct ModelRecord {
  std::string id;
  std::filesystem::path path;
  int generation = 0;
  std::vector<std::string> parents;
  std::optional<MergeRecipe> recipe;
  std::optional<EvalResult> eval;
  std::optional<double> atp;
  TensorMap tensors;
};

/// Where merged children live. The directory store writes each child to
/// disk and reads it back memory-mapped so only the current merge is ever
/// resident; the memory store keeps everything in RAM.
class ModelStore {
 public:
  virtual ~ModelStore() = default;
  /// Returns the stored model's path (possibly empty) and a handle to it.
  virtual std::pair<std::filesystem::path, TensorMap> put(const std::string& id, TensorMap model,
                                                          const MergeRecipe& recipe) = 0;
};

class MemoryStore final : public ModelStore {
 public:
  std::pair<std::filesystem::path, TensorMap> put(const std::string& id, TensorMap model,
                                                  const MergeRecipe& recipe) override;
};

class DirectoryStore final : public ModelStore {
 public:
  explicit DirectoryStore(std::filesystem::path dir);
  std::pair<std::filesystem::path, TensorMap> put(const std::string& id, TensorMap model,
                                                  const MergeRecipe& recipe) override;

 private:
  std::filesystem::path dir_;
};

/// The population being evolved. Records are kept in creation order.
class Pool {
 public:
  Pool(std::string base_id, TensorMap base);

  const std::string& base_id() const noexcept { return base_id_; }
  const TensorMap& base() const noexcept { return base_; }
  std::span<const ModelRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  const ModelRecord& at(std::string_view id) const;
  ModelRecord& at(std::string_view id);
  bool contains(std::string_view id) const;

  /// Adds a record; fails on duplicate ids, unknown parents, or a layout
  /// that differs from the base.
  ModelRecord& add(ModelRecord record);

  DeltaVector delta(std::string_view id) const;

  /// The k evaluated records with the highest ATP, ties by id.
  std::vector<std::string> top_k(std::size_t k) const;

 private:
  std::string base_id_;
  TensorMap base_;
  std::vector<ModelRecord> records_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

enum class StrategyKind { topk_greedy, topk_greedy_kinship, random };
enum class StopKind { topk_stable, high_kinship, max_generations };

std::string_view to_string(StrategyKind k) noexcept;
std::string_view to_string(StopKind k) noexcept;
std::optional<StrategyKind> parse_strategy_kind(std::string_view s) noexcept;
std::optional<StopKind> parse_stop_kind(std::string_view s) noexcept;

struct StopCriterion {
  StopKind kind = StopKind::topk_stable;
  double kinship_threshold = 0.9;
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::topk_greedy;
  std::size_t k = 3;
  MergeRecipe merge_template;  // operator and params; parents are filled per merge
  SimMetric metric = SimMetric::pcc;
  StopCriterion stop;
  int max_generations = 10;
  std::uint64_t rng_seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

/// Append-only event list; each event is a JSON object with "seq" and "event".
class EvolutionLog {
 public:
  void append(std::string_view type, nlohmann::json fields);

  std::span<const nlohmann::json> events() const noexcept { return events_; }
  std::string to_jsonl() const;
  static EvolutionLog from_jsonl(std::string_view text);

  /// Reason of the final stopped event, if any.
  std::optional<std::string> stop_reason() const;

 private:
  std::vector<nlohmann::json> events_;
};

struct GenerationTiming {
  int generation = 0;
  double merge_seconds = 0.0;
  double eval_seconds = 0.0;
  double kinship_seconds = 0.0;
  double wall_seconds = 0.0;
};

struct EvolutionResult {
  EvolutionLog log;
  std::vector<GenerationTiming> timings;

  nlohmann::json timings_json() const;
};

struct ExplorationCandidate {
  std::string id;
  double kinship = 0.0;
};

/// The candidate least related to the best model: minimum value for pcc/cs,
/// maximum distance for ed; ties go to the lowest id.
std::string select_exploration_partner(std::span<const ExplorationCandidate> candidates, SimMetric metric);

/// True iff every unordered pair of `ids` has pcc kinship above `threshold`.
bool check_early_stop(const Pool& pool, std::span<const std::string> ids, double threshold);
bool check_early_stop(std::span<const DeltaVector> deltas, double threshold);

/// A failed run; carries the log up to and including the failure.
class EvolutionFailure : public Error {
 public:
  EvolutionFailure(const Error& cause, EvolutionResult partial);
  const EvolutionResult& partial() const noexcept { return partial_; }

 private:
  EvolutionResult partial_;
};

/// Runs the configured strategy. Foundation records must already be in the
/// pool; those without evaluations are evaluated first (generation 0).
EvolutionResult run_evolution(Pool& pool, const StrategyConfig& cfg, Evaluator& evaluator, ModelStore& store);

EvolutionResult run_topk_greedy(Pool& pool, StrategyConfig cfg, Evaluator& evaluator, ModelStore& store);
EvolutionResult run_topk_greedy_kinship(Pool& pool, StrategyConfig cfg, Evaluator& evaluator,
                                        ModelStore& store);
EvolutionResult run_random(Pool& pool, StrategyConfig cfg, Evaluator& evaluator, ModelStore& store);

}  // namespace kinmerge
