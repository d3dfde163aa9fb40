// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinmerge/tensor_store.hpp"

namespace kinmerge {

enum class MergeOperator { linear, slerp, ties, dare_ties };

std::string_view to_string(MergeOperator op) noexcept;
std::optional<MergeOperator> parse_merge_operator(std::string_view s) noexcept;

struct MergeParams {
  std::vector<double> weights;  // linear; empty means equal weights
  double t = 0.5;               // slerp
  double density = 1.0;         // ties, dare_ties
  double weight = 1.0;          // ties, dare_ties: scale of the merged task vector
  std::optional<std::uint64_t> seed;  // dare_ties

  friend bool operator==(const MergeParams&, const MergeParams&) = default;
};

/// Operator, hyperparameters and ordered parents: everything needed to
/// reproduce a merged model from its inputs.
struct MergeRecipe {
  MergeOperator op = MergeOperator::slerp;
  std::vector<std::string> parent_ids;
  std::optional<std::string> base_id;
  MergeParams params;

  /// Throws a data error when the recipe violates its operator's constraints.
  void validate() const;

  nlohmann::json to_json() const;
  static MergeRecipe from_json(const nlohmann::json& j);

  friend bool operator==(const MergeRecipe&, const MergeRecipe&) = default;
};

/// Normalized weighted average Σ ŵ_i θ_i with ŵ = w / Σw.
TensorMap merge_linear(std::span<const TensorMap> parents, std::span<const double> weights);

/// Per-tensor spherical interpolation; falls back to linear interpolation when
/// the tensors are (anti)colinear or either is all-zero.
TensorMap merge_slerp(const TensorMap& a, const TensorMap& b, double t);

/// Trim each task vector to its top ⌈density·d⌉ magnitudes (global over the
/// flattened model), elect a sign per coordinate, average the agreeing
/// entries, and add weight·merged task vector to the base.
TensorMap merge_ties(std::span<const TensorMap> parents, const TensorMap& base, double density,
                     double weight);

/// Random drop with probability 1−density and 1/density rescale per task
/// vector, followed by sign election and disjoint merge (no trim).
TensorMap merge_dare_ties(std::span<const TensorMap> parents, const TensorMap& base,
                          double density, double weight, std::uint64_t seed);

/// Runs the recipe's operator. `base` is required for ties and dare_ties.
TensorMap apply_recipe(const MergeRecipe& recipe, std::span<const TensorMap> parents,
                       const TensorMap* base);

/// The DARE drop-and-rescale step applied to a slice of one task vector whose
/// first element sits at canonical flat index `first_index`. Parent `stream`
/// uses the generator stream (seed, stream).
void dare_drop_rescale(std::span<const float> tau, std::uint64_t first_index, double density,
                       std::uint64_t seed, std::uint64_t stream, std::span<float> out);

/// Number of entries the TIES trim keeps out of d.
std::uint64_t ties_keep_count(double density, std::uint64_t d);

}  // namespace kinmerge
