// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinmerge/tensor_store.hpp"

namespace kinmerge {

enum class SimMetric { pcc, cs, ed };

std::string_view to_string(SimMetric m) noexcept;
std::optional<SimMetric> parse_sim_metric(std::string_view s) noexcept;

/// True when value `a` indicates a closer relationship than `b` under `m`
/// (larger for pcc/cs, smaller for ed).
bool more_related(SimMetric m, double a, double b) noexcept;

/// Self-similarity of a non-degenerate delta: 1 for pcc/cs, 0 for ed.
double self_similarity(SimMetric m) noexcept;

/// The flattened difference θ_model − θ_base, read lazily in canonical
/// order. A delta without a base reads the model tensors directly, which is
/// how materialized deltas are represented.
class DeltaVector {
 public:
  DeltaVector(std::string model_id, std::string base_id, TensorMap model, std::optional<TensorMap> base);

  const std::string& model_id() const noexcept { return model_id_; }
  const std::string& base_id() const noexcept { return base_id_; }
  std::uint64_t dimension() const noexcept { return model_.parameter_count(); }
  const TensorMap& layout() const noexcept { return model_; }

  /// Elements [offset, offset + out.size()) of tensor `index`.
  void read(std::size_t index, std::uint64_t offset, std::span<float> out) const;

  /// The delta held in memory as f32, reusable without touching the inputs.
  DeltaVector materialize() const;

  std::vector<float> flatten() const;

 private:
  std::string model_id_;
  std::string base_id_;
  TensorMap model_;
  std::optional<TensorMap> base_;
};

DeltaVector compute_delta(const TensorMap& model, const TensorMap& base, std::string model_id = {},
                          std::string base_id = {});

/// Centered second moments of a pair of deltas, merged across chunks and
/// tensors in canonical order.
struct PairMoments {
  std::uint64_t n = 0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double cxx = 0.0;
  double cyy = 0.0;
  double cxy = 0.0;
  double sdd = 0.0;  // Σ(x−y)²
  float min_x = std::numeric_limits<float>::infinity();
  float max_x = -std::numeric_limits<float>::infinity();
  float min_y = std::numeric_limits<float>::infinity();
  float max_y = -std::numeric_limits<float>::infinity();

  void merge(const PairMoments& other) noexcept;
};

/// One streaming pass over both deltas.
PairMoments pair_moments(const DeltaVector& a, const DeltaVector& b);

double similarity_from_moments(const PairMoments& m, SimMetric metric);

double sim_pair(const DeltaVector& a, const DeltaVector& b, SimMetric metric);

/// Mean of sim_pair over all unordered pairs.
double kinship_group(std::span<const DeltaVector> deltas, SimMetric metric);

struct KinshipMatrix {
  std::vector<std::string> model_ids;
  std::vector<std::vector<double>> values;
  SimMetric metric = SimMetric::pcc;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

KinshipMatrix kinship_matrix(std::span<const DeltaVector> deltas, SimMetric metric);

/// Builds each model's delta once and fills the symmetric matrix.
KinshipMatrix kinship_matrix(std::span<const std::string> ids, std::span<const TensorMap> models,
                             const TensorMap& base, std::string_view base_id, SimMetric metric);

}  // namespace kinmerge
