// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinmerge/metrics.hpp"
#include "kinmerge/tensor_store.hpp"

namespace kinmerge {

/// What an evaluator gets to see of a model: its id, its tensors, and the
/// file holding them (empty for in-memory models).
struct ModelView {
  std::string id;
  std::filesystem::path path;
  TensorMap tensors;
};

/// Scores a model on a task group. Implementations must be safe to call
/// from several threads at once.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalResult evaluate(const ModelView& model) = 0;
  virtual std::string describe() const = 0;
};

inline constexpr std::chrono::seconds kDefaultEvalTimeout{3600};

/// Parses an evaluator's standard output: one JSON object
/// {"tasks": {name: score, ...}}. `tasks`, when non-empty, is the required
/// task group.
EvalResult parse_evaluator_output(std::string_view stdout_text, std::span<const std::string> tasks,
                                  std::string model_id);

/// Runs the command template once, with every "{model}" replaced by the
/// shell-quoted model path. No caching.
EvalResult evaluate_external(const std::filesystem::path& model_path, const std::string& command,
                             std::chrono::milliseconds timeout, std::span<const std::string> tasks,
                             std::string model_id = {});

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// External evaluator with a content-addressed cache: two files with the
/// same bytes are evaluated once. With a cache directory the results also
/// persist across runs.
class ExternalEvaluator final : public Evaluator {
 public:
  struct Options {
    std::string command;
    std::chrono::milliseconds timeout = kDefaultEvalTimeout;
    std::vector<std::string> tasks;
    std::optional<std::filesystem::path> cache_dir;
  };

  explicit ExternalEvaluator(Options options);

  EvalResult evaluate(const ModelView& model) override;
  std::string describe() const override;

  /// Number of subprocesses actually spawned.
  std::size_t invocations() const noexcept { return invocations_.load(); }

 private:
  Options options_;
  std::mutex mutex_;
  std::map<std::string, std::shared_future<EvalResult>> cache_;
  std::atomic<std::size_t> invocations_{0};
};

struct SyntheticTask {
  std::string name;
  TensorMap target;
  double sigma = 1.0;
};

struct SyntheticSpec {
  std::vector<SyntheticTask> tasks;
};

/// score_j = 100·exp(−‖θ − t_j‖² / σ_j²) for every task j.
EvalResult evaluate_synthetic(const TensorMap& model, const SyntheticSpec& spec, std::string model_id = {});

class SyntheticEvaluator final : public Evaluator {
 public:
  explicit SyntheticEvaluator(SyntheticSpec spec);
  EvalResult evaluate(const ModelView& model) override;
  std::string describe() const override;

 private:
  SyntheticSpec spec_;
};

/// Scripted scores looked up by model id; an unknown id is an evaluator
/// failure. Used to replay published score tables.
class TableEvaluator final : public Evaluator {
 public:
  explicit TableEvaluator(std::map<std::string, std::map<std::string, double>> scores);
  EvalResult evaluate(const ModelView& model) override;
  std::string describe() const override;

  /// Reads rows "model,<task>,<task>,..." with a header line; lines starting
  /// with '#' are comments.
  static TableEvaluator from_csv(const std::filesystem::path& path);

 private:
  std::map<std::string, std::map<std::string, double>> scores_;
};

}  // namespace kinmerge
