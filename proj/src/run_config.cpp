// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/run_config.hpp"

#include <cstdlib>

#include <fmt/core.h>

#include "kinmerge/csv.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/family_tree.hpp"
#include "kinmerge/subprocess.hpp"

namespace kinmerge {

namespace {

std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : dir / path;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& config_dir) {
  RunConfig c;
  c.config_dir = config_dir;
  try {
    const auto& base = j.at("base");
    if (base.is_string()) {
      c.base_path = resolve(config_dir, base.get<std::string>());
    } else {
      c.base_id = get_or<std::string>(base, "id", "base");
      c.base_path = resolve(config_dir, base.at("path").get<std::string>());
    }
    for (const auto& f : j.at("foundations")) {
      FoundationSpec fs;
      fs.id = f.at("id").get<std::string>();
      fs.path = resolve(config_dir, f.at("path").get<std::string>());
      if (f.contains("scores")) fs.scores = f.at("scores").get<std::map<std::string, double>>();
      c.foundations.push_back(std::move(fs));
    }

    StrategyConfig& s = c.strategy;
    const nlohmann::json strategy = j.value("strategy", nlohmann::json::object());
    const auto kind = parse_strategy_kind(get_or<std::string>(strategy, "kind", "topk_greedy"));
    if (!kind) throw_usage("unknown strategy kind '" + strategy.at("kind").get<std::string>() + "'");
    s.kind = *kind;
    s.k = get_or<std::size_t>(strategy, "k", 3);
    const auto metric = parse_sim_metric(get_or<std::string>(strategy, "metric", "pcc"));
    if (!metric) throw_usage("unknown kinship metric '" + strategy.at("metric").get<std::string>() + "'");
    s.metric = *metric;
    s.max_generations = get_or<int>(strategy, "max_generations", 10);
    s.rng_seed = get_or<std::uint64_t>(strategy, "rng_seed", 0);
    if (strategy.contains("stop")) {
      const auto& stop = strategy.at("stop");
      const auto sk = parse_stop_kind(get_or<std::string>(stop, "kind", "topk_stable"));
      if (!sk) throw_usage("unknown stop kind '" + stop.at("kind").get<std::string>() + "'");
      s.stop.kind = *sk;
      s.stop.kinship_threshold = get_or<double>(stop, "kinship_threshold", 0.9);
    }
    s.workers = get_or<std::size_t>(j, "workers", 1);

    nlohmann::json merge = j.value("merge", nlohmann::json{{"operator", "slerp"}});
    merge["parents"] = nlohmann::json::array();
    s.merge_template = MergeRecipe::from_json(merge);

    c.evaluator = j.at("evaluator");
    c.output_dir = resolve(config_dir, get_or<std::string>(j, "output_dir", "evolve-out"));
  } catch (const nlohmann::json::exception& e) {
    throw_usage(std::string("malformed run configuration: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::usage, std::string("invalid run configuration: ") + e.what());
  }
  if (c.foundations.size() < 2) throw_usage("run configuration needs at least two foundation models");
  c.strategy.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw_data(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return from_json(j, std::filesystem::absolute(path).parent_path());
}

std::unique_ptr<Evaluator> make_evaluator(const nlohmann::json& spec, const std::filesystem::path& config_dir) {
  try {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "external") {
      ExternalEvaluator::Options o;
      o.command = spec.at("command").get<std::string>();
      o.timeout = std::chrono::milliseconds(
          static_cast<long long>(get_or<double>(spec, "timeout_seconds", 3600.0) * 1000.0));
      if (spec.contains("tasks")) o.tasks = spec.at("tasks").get<std::vector<std::string>>();
      if (const char* dir = std::getenv("KINMERGE_CACHE_DIR"); dir != nullptr && *dir != '\0') {
        o.cache_dir = std::filesystem::path(dir);
      }
      // relative script paths in the command are resolved by running from the config directory
      if (spec.value("relative_to_config", true) && !config_dir.empty()) {
        o.command = "cd " + shell_quote(config_dir.string()) + " && " + o.command;
      }
      return std::make_unique<ExternalEvaluator>(std::move(o));
    }
    if (kind == "synthetic") {
      SyntheticSpec s;
      for (const auto& t : spec.at("tasks")) {
        s.tasks.push_back({t.at("name").get<std::string>(),
                           load_tensor_map(resolve(config_dir, t.at("target").get<std::string>())),
                           t.at("sigma").get<double>()});
      }
      return std::make_unique<SyntheticEvaluator>(std::move(s));
    }
    if (kind == "table") {
      const auto& scores = spec.at("scores");
      if (scores.is_string()) {
        return std::make_unique<TableEvaluator>(
            TableEvaluator::from_csv(resolve(config_dir, scores.get<std::string>())));
      }
      return std::make_unique<TableEvaluator>(scores.get<std::map<std::string, std::map<std::string, double>>>());
    }
    throw_usage("unknown evaluator kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw_usage(std::string("malformed evaluator configuration: ") + e.what());
  }
}

Pool make_pool(const RunConfig& cfg) {
  Pool pool(cfg.base_id, load_tensor_map(cfg.base_path));
  for (const auto& f : cfg.foundations) {
    ModelRecord r;
    r.id = f.id;
    r.path = f.path;
    r.tensors = load_tensor_map(f.path);
    if (f.scores) {
      EvalResult e;
      e.model_id = f.id;
      e.task_scores = *f.scores;
      e.validate();
      r.eval = std::move(e);
    }
    pool.add(std::move(r));
  }
  return pool;
}

EvolutionResult run_evolve(const RunConfig& cfg) {
  Pool pool = make_pool(cfg);
  auto evaluator = make_evaluator(cfg.evaluator, cfg.config_dir);
  std::filesystem::create_directories(cfg.output_dir);
  DirectoryStore store(cfg.output_dir / "models");

  const auto write_outputs = [&](const EvolutionResult& r) {
    write_text_file(cfg.output_dir / "log.jsonl", r.log.to_jsonl());
    const FamilyTree tree = replay(r.log);
    write_text_file(cfg.output_dir / "tree.json", tree.to_json().dump(2) + "\n");
    write_text_file(cfg.output_dir / "tree.dot", tree.to_dot());
    write_text_file(cfg.output_dir / "report.csv", report_csv(build_report(r.log)));
  };
  try {
    EvolutionResult r = run_evolution(pool, cfg.strategy, *evaluator, store);
    write_outputs(r);
    write_text_file(cfg.output_dir / "timings.json", r.timings_json().dump(2) + "\n");
    return r;
  } catch (const EvolutionFailure& f) {
    write_text_file(cfg.output_dir / "log.jsonl", f.partial().log.to_jsonl());
    throw;
  }
}

}  // namespace kinmerge
