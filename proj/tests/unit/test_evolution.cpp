// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "helpers.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/evolution.hpp"
#include "kinmerge/run_config.hpp"

using namespace kinmerge;

namespace {

using Scores = std::map<std::string, std::map<std::string, double>>;

Scores scripted(std::map<std::string, double> atp) {
  Scores s;
  for (const auto& [id, v] : atp) s[id] = {{"score", v}};
  return s;
}

Pool three_foundations() {
  Pool pool("base", testing::random_model(100));
  int seed = 101;
  for (const char* id : {"a", "b", "c"}) {
    ModelRecord r;
    r.id = id;
    r.tensors = testing::random_model(seed++);
    pool.add(std::move(r));
  }
  return pool;
}

std::vector<std::string> events_of(const EvolutionLog& log) {
  std::vector<std::string> out;
  for (const auto& e : log.events()) out.push_back(e.at("event").get<std::string>());
  return out;
}

}  // namespace

TEST_CASE("pool validates lineage and compatibility") {
  Pool pool = three_foundations();
  ModelRecord dup;
  dup.id = "a";
  dup.tensors = testing::random_model(1);
  CHECK_THROWS_AS(pool.add(dup), Error);

  ModelRecord orphan;
  orphan.id = "child";
  orphan.generation = 1;
  orphan.parents = {"a", "missing"};
  orphan.tensors = testing::random_model(2);
  CHECK_THROWS_AS(pool.add(orphan), Error);

  ModelRecord old;
  old.id = "child";
  old.generation = 0;
  old.parents = {"a", "b"};
  old.tensors = testing::random_model(3);
  CHECK_THROWS_AS(pool.add(old), Error);

  ModelRecord wrong_shape;
  wrong_shape.id = "w";
  wrong_shape.tensors = testing::random_model(4, 3, 3);
  CHECK_THROWS_AS(pool.add(wrong_shape), Error);

  ModelRecord base_named;
  base_named.id = "base";
  base_named.tensors = testing::random_model(5);
  CHECK_THROWS_AS(pool.add(base_named), Error);
}

TEST_CASE("top-k orders by score then id") {
  Pool pool = three_foundations();
  pool.at("a").atp = 50.0;
  pool.at("b").atp = 70.0;
  pool.at("c").atp = 50.0;
  CHECK(pool.top_k(2) == std::vector<std::string>{"b", "a"});
  CHECK(pool.top_k(5).size() == 3);
}

TEST_CASE("exploration partner is the least related candidate") {
  const std::vector<ExplorationCandidate> c{{"m2", 0.4}, {"m1", 0.4}, {"m3", 0.9}};
  CHECK(select_exploration_partner(c, SimMetric::pcc) == "m1");
  CHECK(select_exploration_partner(c, SimMetric::ed) == "m3");
  CHECK_THROWS_AS(select_exploration_partner({}, SimMetric::pcc), Error);
}

TEST_CASE("early stop needs every pair above the threshold") {
  // three deltas with pairwise pcc 1, and one anti-correlated
  const TensorMap base = testing::make_vector({0, 0, 0, 0});
  auto d = [&](std::vector<float> v, std::string id) {
    return compute_delta(testing::make_vector(v), base, std::move(id), "base");
  };
  const std::vector<DeltaVector> close{d({1, 2, 3, 4}, "x"), d({2, 4, 6, 8}, "y"), d({1, 2, 3, 4.1f}, "z")};
  CHECK(check_early_stop(close, 0.9));
  const std::vector<DeltaVector> mixed{d({1, 2, 3, 4}, "x"), d({4, 3, 2, 1}, "y")};
  CHECK_FALSE(check_early_stop(mixed, 0.9));
  CHECK_THROWS_AS(check_early_stop(std::span(close).first(1), 0.9), Error);
}

TEST_CASE("greedy run stops when the top set repeats") {
  Pool pool = three_foundations();
  TableEvaluator ev(scripted({{"a", 50}, {"b", 40}, {"c", 30}, {"model-1-1", 90}, {"model-1-2", 45}, {"model-1-3", 35},
                              {"model-2-1", 44}, {"model-2-2", 43}, {"model-2-3", 42}}));
  MemoryStore store;
  StrategyConfig cfg;
  const auto r = run_topk_greedy(pool, cfg, ev, store);
  CHECK(r.log.stop_reason() == "topk_stable");
  CHECK(pool.size() == 9);
  CHECK(pool.at("model-1-1").parents == std::vector<std::string>{"a", "b"});
  CHECK(pool.at("model-2-1").parents == std::vector<std::string>{"model-1-1", "a"});
  CHECK(r.timings.size() == 2);
  const auto ev_names = events_of(r.log);
  CHECK(ev_names.front() == "run_started");
  CHECK(ev_names.back() == "stopped");
}

TEST_CASE("kinship strategy adds one exploration merge per later generation") {
  Pool pool = three_foundations();
  TableEvaluator ev(scripted({{"a", 50}, {"b", 40}, {"c", 30}, {"model-1-1", 90}, {"model-1-2", 45}, {"model-1-3", 35},
                              {"model-2-1", 44}, {"model-2-2", 43}, {"model-2-3", 42}, {"model-2-4", 41}}));
  MemoryStore store;
  const auto r = run_topk_greedy_kinship(pool, StrategyConfig{}, ev, store);
  CHECK(pool.contains("model-2-4"));
  CHECK(pool.at("model-2-4").parents.front() == "model-1-1");
  // model-1-3 is the only first-generation child outside the top set
  CHECK(pool.at("model-2-4").parents.back() == "model-1-3");
  std::size_t explorations = 0;
  for (const auto& e : r.log.events()) explorations += e.at("event") == "exploration_merge";
  CHECK(explorations == 1);
}

TEST_CASE("random strategy honours max_generations and its seed") {
  auto run = [](std::uint64_t seed) {
    Pool pool = three_foundations();
    SyntheticSpec spec;
    spec.tasks.push_back({"t", testing::random_model(7), 10.0});
    SyntheticEvaluator ev(spec);
    MemoryStore store;
    StrategyConfig cfg;
    cfg.kind = StrategyKind::random;
    cfg.k = 2;
    cfg.rng_seed = seed;
    cfg.max_generations = 3;
    cfg.stop.kind = StopKind::max_generations;
    return run_evolution(pool, cfg, ev, store).log.to_jsonl();
  };
  const auto a = run(1);
  CHECK(a == run(1));
  CHECK(a != run(2));
  CHECK(a.find("\"reason\":\"max_generations\"") != std::string::npos);
}

TEST_CASE("evaluation failures stop the run with a partial log") {
  Pool pool = three_foundations();
  TableEvaluator ev(scripted({{"a", 50}, {"b", 40}, {"c", 30}, {"model-1-1", 90}}));
  MemoryStore store;
  try {
    run_topk_greedy(pool, StrategyConfig{}, ev, store);
    FAIL("expected a failure");
  } catch (const EvolutionFailure& f) {
    CHECK(f.kind() == ErrorKind::evaluator);
    const auto names = events_of(f.partial().log);
    CHECK(std::find(names.begin(), names.end(), "evaluation_failed") != names.end());
    CHECK(f.partial().log.stop_reason() == "error");
  }
}

TEST_CASE("worker count does not change the log") {
  auto run = [](std::size_t workers) {
    RunConfig cfg = RunConfig::load(testing::kFixtures / "evolution" / "kinship.json");
    cfg.strategy.workers = workers;
    Pool pool = make_pool(cfg);
    auto ev = make_evaluator(cfg.evaluator, cfg.config_dir);
    MemoryStore store;
    return run_evolution(pool, cfg.strategy, *ev, store).log.to_jsonl();
  };
  CHECK(run(1) == run(4));
}

TEST_CASE("log survives a JSONL round trip") {
  EvolutionLog log;
  log.append("run_started", {{"k", 3}});
  log.append("stopped", {{"reason", "topk_stable"}});
  const auto back = EvolutionLog::from_jsonl(log.to_jsonl());
  CHECK(back.to_jsonl() == log.to_jsonl());
  CHECK(back.stop_reason() == "topk_stable");
  CHECK_THROWS_AS(EvolutionLog::from_jsonl("{\"seq\":0}\n"), Error);
  CHECK_THROWS_AS(EvolutionLog::from_jsonl("{oops\n"), Error);
}

TEST_CASE("strategy configuration is validated") {
  StrategyConfig cfg;
  cfg.k = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.max_generations = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.stop.kind = StopKind::high_kinship;
  cfg.stop.kinship_threshold = 2.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
