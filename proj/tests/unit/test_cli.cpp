// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "kinmerge/cli.hpp"
#include "kinmerge/csv.hpp"
#include "kinmerge/evolution.hpp"
#include "kinmerge/kinship.hpp"

using namespace kinmerge;
using testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "kinmerge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string save(const TempDir& dir, const std::string& name, std::uint64_t seed) {
  const auto p = dir / (name + ".safetensors");
  save_tensor_map(testing::random_model(seed), p);
  return p.string();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"kinship", "--metric", "l7", "--base", "x", "a", "b"}).code == kExitUsage);
  CHECK(run({"merge", "-o", "x.safetensors"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("missing or malformed inputs exit with 2") {
  TempDir dir;
  const auto base = save(dir, "base", 1);
  const Run r = run({"kinship", "--base", base, (dir / "nope.safetensors").string(), base});
  CHECK(r.code == kExitData);
  CHECK_FALSE(r.err.empty());
  write_text_file(dir / "bad.json", "{");
  CHECK(run({"evolve", (dir / "bad.json").string()}).code == kExitData);
}

TEST_CASE("merge writes a file whose recipe is recorded") {
  TempDir dir;
  const auto a = save(dir, "a", 2), b = save(dir, "b", 3);
  const auto out = (dir / "m.safetensors").string();
  const Run r = run({"merge", "--operator", "slerp", "--t", "0.25", "-o", out, a, b});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("recipe").at("parents") == nlohmann::json({"a", "b"}));
  CHECK(j.at("recipe").at("params").at("t") == 0.25);
  const TensorMap m = load_tensor_map(out);
  CHECK(nlohmann::json::parse(m.metadata().at("recipe")) == j.at("recipe"));
  CHECK(m.parameter_count() == j.at("parameters").get<std::uint64_t>());

  // operators that need a base refuse to run without one
  CHECK(run({"merge", "--operator", "ties", "-o", out, a, b}).code == kExitUsage);
  const auto base = save(dir, "base", 4);
  CHECK(run({"merge", "--operator", "dare_ties", "--density", "0.5", "--seed", "3", "--base", base, "-o", out, a, b})
            .code == kExitOk);
}

TEST_CASE("kinship prints a value or a JSON report") {
  TempDir dir;
  const auto base = save(dir, "base", 5);
  const auto a = save(dir, "a", 6), b = save(dir, "b", 7), c = save(dir, "c", 8);
  const Run plain = run({"kinship", "--metric", "cs", "--base", base, a, b});
  REQUIRE(plain.code == kExitOk);
  const TensorMap bm = load_tensor_map(base);
  const double expect = sim_pair(compute_delta(load_tensor_map(a), bm, "a", "base"),
                                 compute_delta(load_tensor_map(b), bm, "b", "base"), SimMetric::cs);
  CHECK(std::stod(plain.out) == doctest::Approx(expect).epsilon(1e-12));

  const Run js = run({"kinship", "--json", "--base", base, "x=" + a, b, c});
  REQUIRE(js.code == kExitOk);
  const auto j = nlohmann::json::parse(js.out);
  CHECK(j.at("metric") == "pcc");
  CHECK(j.at("models") == nlohmann::json({"x", "b", "c"}));
  CHECK(j.at("pairs").size() == 3);
}

TEST_CASE("matrix writes csv or json") {
  TempDir dir;
  const auto base = save(dir, "base", 9);
  const auto a = save(dir, "a", 10), b = save(dir, "b", 11);
  const Run csv = run({"matrix", "--base", base, a, b});
  REQUIRE(csv.code == kExitOk);
  CHECK(csv.out.rfind("model,a,b\n", 0) == 0);
  const auto out = (dir / "m.json").string();
  REQUIRE(run({"matrix", "--format", "json", "--metric", "ed", "-o", out, "--base", base, a, b}).code == kExitOk);
  CHECK(nlohmann::json::parse(read_text_file(out)).at("values")[0][0] == 0.0);
}

TEST_CASE("metrics computes ATP, gain and ATPD from a score table") {
  TempDir dir;
  write_text_file(dir / "s.csv", "model,x,y,parents\np,60,80,\nq,50,70,\nc,58,82,p;q\n");
  const Run r = run({"metrics", (dir / "s.csv").string(), "--atpd", "p:q"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("models")[0].at("atp") == 70.0);
  CHECK(j.at("models")[2].at("gain").get<double>() == doctest::Approx(5.0));
  CHECK(j.at("atpd")[0].at("atpd") == 10.0);
  CHECK(run({"metrics", (dir / "s.csv").string(), "--atpd", "p:zz"}).code == kExitData);
  CHECK(run({"metrics", (dir / "s.csv").string(), "--atpd", "pq"}).code == kExitUsage);
}

TEST_CASE("analyze reports signed and absolute correlations") {
  const Run r = run({"analyze", (testing::kFixtures / "published" / "evolution_paths.csv").string()});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("n") == 26);
  REQUIRE(j.at("correlations").size() == 3);
  for (const auto& c : j.at("correlations")) {
    CHECK(c.at("signed_gain").contains("r"));
    CHECK(c.at("absolute_gain").contains("p"));
  }
  CHECK(j.at("correlations")[0].at("metric") == "pcc");
  CHECK(j.at("correlations")[0].at("signed_gain").at("r").get<double>() < 0.0);
}

TEST_CASE("evolve and export-tree work end to end") {
  TempDir dir;
  const auto cfg = (testing::kFixtures / "evolution" / "scripted.json").string();
  const Run r = run({"evolve", cfg, "--output-dir", (dir / "run").string()});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("stop_reason") == "topk_stable");
  CHECK(j.at("generations") == 2);
  for (const char* f : {"log.jsonl", "tree.json", "tree.dot", "report.csv", "timings.json"}) {
    CHECK(std::filesystem::exists(dir / "run" / f));
  }
  const Run dot = run({"export-tree", (dir / "run" / "log.jsonl").string()});
  REQUIRE(dot.code == kExitOk);
  CHECK(dot.out == read_text_file(dir / "run" / "tree.dot"));
  CHECK(run({"export-tree", "--format", "svg", (dir / "run" / "log.jsonl").string()}).code == kExitUsage);
}

TEST_CASE("evaluator failures exit with 3") {
  TempDir dir;
  const auto base = save(dir, "base", 20);
  const auto a = save(dir, "a", 21), b = save(dir, "b", 22);
  const nlohmann::json cfg = {
      {"base", base},
      {"foundations", {{{"id", "a"}, {"path", a}}, {{"id", "b"}, {"path", b}}}},
      {"strategy", {{"kind", "topk_greedy"}, {"k", 2}}},
      {"evaluator", {{"kind", "external"}, {"command", (testing::kScripts / "eval_fail.sh").string() + " {model}"}}},
      {"output_dir", (dir / "out").string()}};
  write_text_file(dir / "cfg.json", cfg.dump());
  const Run r = run({"evolve", (dir / "cfg.json").string()});
  CHECK(r.code == kExitEvaluator);
  CHECK(r.err.find("harness exploded") != std::string::npos);
  // the partial log is still written
  const auto log = EvolutionLog::from_jsonl(read_text_file(dir / "out" / "log.jsonl"));
  CHECK(log.stop_reason() == "error");
}
