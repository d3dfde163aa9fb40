// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/family_tree.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kinmerge/error.hpp"

namespace kinmerge {

std::vector<std::string> FamilyTree::parents_of(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& e : edges) {
    if (e.child == id) out.push_back(e.parent);
  }
  return out;
}

int FamilyTree::depth(const std::string& id) const {
  std::map<std::string, int> memo;
  std::function<int(const std::string&)> go = [&](const std::string& n) {
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    int d = 0;
    for (const auto& p : parents_of(n)) d = std::max(d, go(p) + 1);
    memo[n] = d;
    return d;
  };
  return go(id);
}

nlohmann::json FamilyTree::to_json() const {
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& n : nodes) {
    ns.push_back({{"id", n.id},
                  {"generation", n.generation},
                  {"atp", n.atp ? nlohmann::json(*n.atp) : nlohmann::json(nullptr)},
                  {"exploration", n.exploration}});
  }
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : edges) es.push_back({{"parent", e.parent}, {"child", e.child}, {"operator", e.op}});
  return {{"nodes", ns}, {"edges", es}};
}

FamilyTree FamilyTree::from_json(const nlohmann::json& j) {
  FamilyTree t;
  try {
    for (const auto& n : j.at("nodes")) {
      TreeNode node;
      node.id = n.at("id").get<std::string>();
      node.generation = n.at("generation").get<int>();
      if (!n.at("atp").is_null()) node.atp = n.at("atp").get<double>();
      node.exploration = n.value("exploration", false);
      t.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
      t.edges.push_back({e.at("parent").get<std::string>(), e.at("child").get<std::string>(),
                         e.at("operator").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw_data(std::string("malformed family tree: ") + e.what());
  }
  return t;
}

std::string FamilyTree::to_dot() const {
  std::string out = "digraph family_tree {\n  rankdir=TB;\n  node [shape=box];\n";
  int gen = -1;
  for (const auto& n : nodes) {
    if (n.generation != gen) {
      if (gen >= 0) out += "  }\n";
      gen = n.generation;
      out += fmt::format("  subgraph gen_{} {{\n    rank=same;\n", gen);
    }
    const std::string label = n.atp ? fmt::format("{}\\n{:.2f}", n.id, *n.atp) : n.id;
    out += fmt::format("    \"{}\" [label=\"{}\"{}];\n", n.id, label, n.exploration ? ", style=dashed" : "");
  }
  if (gen >= 0) out += "  }\n";
  for (const auto& e : edges) out += fmt::format("  \"{}\" -> \"{}\" [label=\"{}\"];\n", e.parent, e.child, e.op);
  out += "}\n";
  return out;
}

FamilyTree replay(const EvolutionLog& log) {
  FamilyTree t;
  std::map<std::string, std::size_t> index;
  for (const auto& e : log.events()) {
    const std::string type = e.at("event").get<std::string>();
    if (type == "model_registered" || type == "merged") {
      const std::string id = e.at(type == "merged" ? "child" : "id").get<std::string>();
      if (index.count(id)) throw_data(fmt::format("log registers '{}' twice", id));
      index[id] = t.nodes.size();
      TreeNode n;
      n.id = id;
      n.generation = e.at("generation").get<int>();
      if (type == "merged") {
        n.exploration = e.value("exploration", false);
        const std::string op = e.at("recipe").at("operator").get<std::string>();
        for (const auto& p : e.at("parents")) {
          const std::string parent = p.get<std::string>();
          if (!index.count(parent)) throw_data(fmt::format("'{}' merged from unknown '{}'", id, parent));
          t.edges.push_back({parent, id, op});
        }
      }
      t.nodes.push_back(std::move(n));
    } else if (type == "evaluated") {
      const std::string id = e.at("id").get<std::string>();
      const auto it = index.find(id);
      if (it == index.end()) throw_data(fmt::format("log evaluates unknown '{}'", id));
      t.nodes[it->second].atp = e.at("atp").get<double>();
    }
  }
  return t;
}

std::vector<ReportRow> build_report(const EvolutionLog& log) {
  std::vector<ReportRow> rows;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::vector<std::string>> parents;
  std::optional<double> best;  // best ATP among models evaluated so far
  for (const auto& e : log.events()) {
    const std::string type = e.at("event").get<std::string>();
    if (type == "model_registered" || type == "merged") {
      const std::string id = e.at(type == "merged" ? "child" : "id").get<std::string>();
      index[id] = rows.size();
      ReportRow r;
      r.model = id;
      if (type == "merged") {
        parents[id] = e.at("parents").get<std::vector<std::string>>();
        if (!e.at("parent_kinship").is_null()) r.kinship = e.at("parent_kinship").get<double>();
      }
      rows.push_back(std::move(r));
    } else if (type == "evaluated") {
      const std::string id = e.at("id").get<std::string>();
      const auto it = index.find(id);
      if (it == index.end()) throw_data(fmt::format("log evaluates unknown '{}'", id));
      ReportRow& r = rows[it->second];
      r.avg = e.at("atp").get<double>();
      if (auto p = parents.find(id); p != parents.end()) {
        std::vector<double> atps;
        for (const auto& pid : p->second) {
          const auto& pr = rows.at(index.at(pid));
          if (!pr.avg) throw_data(fmt::format("parent '{}' of '{}' has no score", pid, id));
          atps.push_back(*pr.avg);
        }
        r.gain = merge_gain(*r.avg, atps);
        if (best) r.delta_to_top = *r.avg - *best;
      }
      best = best ? std::max(*best, *r.avg) : *r.avg;
    }
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  const auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); };
  std::string out = "model,avg,gain,delta_to_top,kinship\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.model, cell(r.avg), cell(r.gain), cell(r.delta_to_top), cell(r.kinship));
  }
  return out;
}

}  // namespace kinmerge
