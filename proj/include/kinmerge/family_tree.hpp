// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinmerge/evolution.hpp"

namespace kinmerge {

struct TreeNode {
  std::string id;
  int generation = 0;
  std::optional<double> atp;
  bool exploration = false;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeEdge {
  std::string parent;
  std::string child;
  std::string op;

  friend bool operator==(const TreeEdge&, const TreeEdge&) = default;
};

/// Lineage DAG: foundations are roots, merged models are internal nodes.
/// Nodes are in creation order; edges follow each child's parent order.
struct FamilyTree {
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;

  std::vector<std::string> parents_of(const std::string& id) const;
  /// Longest chain of merges ending at `id` (0 for a root).
  int depth(const std::string& id) const;

  nlohmann::json to_json() const;
  static FamilyTree from_json(const nlohmann::json& j);
  std::string to_dot() const;

  friend bool operator==(const FamilyTree&, const FamilyTree&) = default;
};

/// Rebuilds the tree from model_registered, merged and evaluated events.
FamilyTree replay(const EvolutionLog& log);

/// One row per model in creation order; the columns of the per-generation
/// report. Empty optionals are written as empty CSV fields.
struct ReportRow {
  std::string model;
  std::optional<double> avg;
  std::optional<double> gain;
  std::optional<double> delta_to_top;  // ATP minus the best ATP present before this model
  std::optional<double> kinship;       // kinship between the model's parents
};

std::vector<ReportRow> build_report(const EvolutionLog& log);
std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace kinmerge
