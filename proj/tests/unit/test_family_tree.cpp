// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "kinmerge/csv.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/family_tree.hpp"

using namespace kinmerge;

namespace {

nlohmann::json recipe(const std::vector<std::string>& parents) {
  return {{"operator", "slerp"}, {"parents", parents}, {"params", {{"t", 0.5}}}};
}

void merged(EvolutionLog& log, const std::string& child, int g, const std::vector<std::string>& parents,
            nlohmann::json kinship, bool exploration = false) {
  log.append("merged", {{"generation", g},
                        {"child", child},
                        {"parents", parents},
                        {"recipe", recipe(parents)},
                        {"parent_kinship", kinship},
                        {"exploration", exploration}});
}

EvolutionLog small_log() {
  EvolutionLog log;
  log.append("run_started", {{"strategy", "topk_greedy"}});
  for (const char* id : {"a", "b", "c"}) log.append("model_registered", {{"id", id}, {"generation", 0}});
  log.append("evaluated", {{"id", "a"}, {"atp", 60.0}});
  log.append("evaluated", {{"id", "b"}, {"atp", 50.0}});
  log.append("evaluated", {{"id", "c"}, {"atp", 40.0}});
  merged(log, "model-1-1", 1, {"a", "b"}, 0.25);
  log.append("evaluated", {{"id", "model-1-1"}, {"atp", 58.0}});
  merged(log, "model-2-1", 2, {"model-1-1", "c"}, nullptr, true);
  log.append("evaluated", {{"id", "model-2-1"}, {"atp", 62.0}});
  log.append("stopped", {{"generation", 2}, {"reason", "max_generations"}});
  return log;
}

}  // namespace

TEST_CASE("replay rebuilds lineage and scores") {
  const FamilyTree t = replay(small_log());
  REQUIRE(t.nodes.size() == 5);
  CHECK(t.nodes[3].id == "model-1-1");
  CHECK(t.nodes[3].atp == 58.0);
  CHECK(t.nodes[4].exploration);
  CHECK(t.parents_of("model-2-1") == std::vector<std::string>{"model-1-1", "c"});
  CHECK(t.depth("a") == 0);
  CHECK(t.depth("model-2-1") == 2);
  CHECK(t.edges.front().op == "slerp");
}

TEST_CASE("replay rejects inconsistent logs") {
  EvolutionLog dup;
  dup.append("model_registered", {{"id", "a"}, {"generation", 0}});
  dup.append("model_registered", {{"id", "a"}, {"generation", 0}});
  CHECK_THROWS_AS(replay(dup), Error);

  EvolutionLog orphan;
  orphan.append("model_registered", {{"id", "a"}, {"generation", 0}});
  merged(orphan, "model-1-1", 1, {"a", "ghost"}, nullptr);
  CHECK_THROWS_AS(replay(orphan), Error);

  EvolutionLog unknown;
  unknown.append("evaluated", {{"id", "who"}, {"atp", 1.0}});
  CHECK_THROWS_AS(replay(unknown), Error);
}

TEST_CASE("tree round-trips through JSON") {
  const FamilyTree t = replay(small_log());
  CHECK(FamilyTree::from_json(t.to_json()) == t);
  CHECK_THROWS_AS(FamilyTree::from_json(nlohmann::json{{"nodes", 3}}), Error);
}

TEST_CASE("dot output groups generations and marks exploration") {
  const std::string dot = replay(small_log()).to_dot();
  CHECK(dot.rfind("digraph family_tree {", 0) == 0);
  CHECK(dot.find("subgraph gen_0") != std::string::npos);
  CHECK(dot.find("\"a\" -> \"model-1-1\" [label=\"slerp\"]") != std::string::npos);
  CHECK(dot.find("\"model-2-1\" [label=\"model-2-1\\n62.00\", style=dashed]") != std::string::npos);
}

TEST_CASE("report rows carry gain, distance to the top and parent kinship") {
  const auto rows = build_report(small_log());
  REQUIRE(rows.size() == 5);
  CHECK_FALSE(rows[0].gain.has_value());
  CHECK(*rows[3].gain == doctest::Approx(3.0));
  CHECK(*rows[3].delta_to_top == doctest::Approx(-2.0));
  CHECK(*rows[3].kinship == 0.25);
  CHECK(*rows[4].gain == doctest::Approx(13.0));
  CHECK(*rows[4].delta_to_top == doctest::Approx(2.0));
  CHECK_FALSE(rows[4].kinship.has_value());

  const std::string csv = report_csv(rows);
  CHECK(csv.rfind("model,avg,gain,delta_to_top,kinship\n", 0) == 0);
  CHECK(csv.find("\na,60.000000,,,\n") != std::string::npos);
  CHECK(csv.find("model-1-1,58.000000,3.000000,-2.000000,0.250000\n") != std::string::npos);
}

TEST_CASE("tree of a fixture run matches its logged lineage") {
  const auto text = read_text_file(testing::kFixtures / "evolution" / "expected_kinship.jsonl");
  const auto log = EvolutionLog::from_jsonl(text);
  const FamilyTree t = replay(log);
  std::size_t merges = 0;
  for (const auto& e : log.events()) {
    if (e.at("event") != "merged") continue;
    ++merges;
    CHECK(t.parents_of(e.at("child").get<std::string>()) == e.at("parents").get<std::vector<std::string>>());
  }
  CHECK(t.edges.size() == 2 * merges);
  for (const auto& n : t.nodes) CHECK(n.atp.has_value());
}
