// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/cli.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kinmerge/csv.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/family_tree.hpp"
#include "kinmerge/kinship.hpp"
#include "kinmerge/merge_ops.hpp"
#include "kinmerge/metrics.hpp"
#include "kinmerge/run_config.hpp"

namespace kinmerge {

namespace {

/// Shortest round-trip form, always with a decimal point ("1.0", not "1").
std::string format_real(double v) {
  std::string s = fmt::format("{}", v);
  if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

struct NamedPath {
  std::string id;
  std::filesystem::path path;
};

/// "id=path" or a bare path, whose id is the file stem.
NamedPath parse_named(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {std::filesystem::path(arg).stem().string(), arg};
}

std::vector<NamedPath> parse_named_all(const std::vector<std::string>& args) {
  std::vector<NamedPath> out;
  std::set<std::string> seen;
  for (const auto& a : args) {
    out.push_back(parse_named(a));
    if (!seen.insert(out.back().id).second) throw_usage(fmt::format("model id '{}' given twice", out.back().id));
  }
  return out;
}

SimMetric require_metric(const std::string& s) {
  const auto m = parse_sim_metric(s);
  if (!m) throw_usage(fmt::format("unknown metric '{}' (expected pcc, cs or ed)", s));
  return *m;
}

void write_or_print(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else write_text_file(path, text);
}

// ---- merge ----------------------------------------------------------------

struct MergeArgs {
  std::string recipe_path;
  std::string op = "slerp";
  std::vector<double> weights;
  double t = 0.5;
  double density = 1.0;
  double weight = 1.0;
  std::optional<std::uint64_t> seed;
  std::string base;
  std::string output;
  std::vector<std::string> parents;
};

int cmd_merge(const MergeArgs& a, std::ostream& out) {
  const auto parents = parse_named_all(a.parents);
  MergeRecipe recipe;
  if (!a.recipe_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(a.recipe_path));
    } catch (const nlohmann::json::exception& e) {
      throw_data(fmt::format("recipe '{}' is not valid JSON: {}", a.recipe_path, e.what()));
    }
    recipe = MergeRecipe::from_json(j);
  } else {
    const auto op = parse_merge_operator(a.op);
    if (!op) throw_usage(fmt::format("unknown operator '{}'", a.op));
    recipe.op = *op;
    recipe.params.weights = a.weights;
    recipe.params.t = a.t;
    recipe.params.density = a.density;
    recipe.params.weight = a.weight;
    recipe.params.seed = a.seed;
  }
  if (recipe.parent_ids.empty()) {
    for (const auto& p : parents) recipe.parent_ids.push_back(p.id);
  }
  std::optional<NamedPath> base;
  if (!a.base.empty()) {
    base = parse_named(a.base);
    if (!recipe.base_id) recipe.base_id = base->id;
  }
  if ((recipe.op == MergeOperator::ties || recipe.op == MergeOperator::dare_ties) && !base) throw_usage(fmt::format("{} needs --base", to_string(recipe.op)));
  recipe.validate();
  if (recipe.parent_ids.size() != parents.size()) {
    throw_usage(fmt::format("recipe names {} parents but {} files were given", recipe.parent_ids.size(), parents.size()));
  }
  if (recipe.base_id && !base) throw_usage(fmt::format("recipe base '{}' needs --base", *recipe.base_id));

  std::vector<TensorMap> maps;
  for (const auto& p : parents) maps.push_back(load_tensor_map(p.path));
  std::optional<TensorMap> base_map;
  if (base) base_map = load_tensor_map(base->path);
  const TensorMap merged = apply_recipe(recipe, maps, base_map ? &*base_map : nullptr);

  TensorMapBuilder b;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const TensorMeta& m = merged.meta(i);
    b.add_raw(m.name, m.element_type, m.shape, merged.raw(i));
  }
  b.set_metadata("recipe", recipe.to_json().dump());
  save_tensor_map(std::move(b).build(), a.output);
  out << nlohmann::json({{"output", a.output}, {"recipe", recipe.to_json()}, {"parameters", merged.parameter_count()}}).dump()
      << '\n';
  return kExitOk;
}

// ---- kinship / matrix -------------------------------------------------------

std::vector<DeltaVector> load_deltas(const std::string& base_arg, const std::vector<NamedPath>& models,
                                     std::string& base_id) {
  const NamedPath base = parse_named(base_arg);
  base_id = base.id;
  const TensorMap base_map = load_tensor_map(base.path);
  std::vector<DeltaVector> deltas;
  for (const auto& m : models) deltas.push_back(compute_delta(load_tensor_map(m.path), base_map, m.id, base.id));
  return deltas;
}

int cmd_kinship(const std::string& metric_s, const std::string& base_arg, const std::vector<std::string>& model_args,
                bool json, std::ostream& out) {
  const SimMetric metric = require_metric(metric_s);
  const auto models = parse_named_all(model_args);
  if (models.size() < 2) throw_usage("kinship needs at least two models");
  std::string base_id;
  const auto deltas = load_deltas(base_arg, models, base_id);
  if (!json) {
    out << format_real(kinship_group(deltas, metric)) << '\n';
    return kExitOk;
  }
  nlohmann::json pairs = nlohmann::json::array();
  double sum = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    for (std::size_t j = i + 1; j < deltas.size(); ++j) {
      const double v = sim_pair(deltas[i], deltas[j], metric);
      sum += v;
      pairs.push_back({{"a", models[i].id}, {"b", models[j].id}, {"value", v}});
    }
  }
  std::vector<std::string> ids;
  for (const auto& m : models) ids.push_back(m.id);
  out << nlohmann::json({{"metric", to_string(metric)},
                         {"base", base_id},
                         {"models", ids},
                         {"kinship", sum / static_cast<double>(pairs.size())},
                         {"pairs", pairs}})
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_matrix(const std::string& metric_s, const std::string& base_arg, const std::vector<std::string>& model_args,
               const std::string& format, const std::string& output, std::ostream& out) {
  const SimMetric metric = require_metric(metric_s);
  const auto models = parse_named_all(model_args);
  if (models.size() < 2) throw_usage("matrix needs at least two models");
  const NamedPath base = parse_named(base_arg);
  std::vector<std::string> ids;
  std::vector<TensorMap> maps;
  for (const auto& m : models) {
    ids.push_back(m.id);
    maps.push_back(load_tensor_map(m.path));
  }
  const KinshipMatrix km = kinship_matrix(ids, maps, load_tensor_map(base.path), base.id, metric);
  if (format == "json") write_or_print(km.to_json().dump() + "\n", output, out);
  else if (format == "csv") write_or_print(km.to_csv(), output, out);
  else throw_usage(fmt::format("unknown format '{}' (expected csv or json)", format));
  return kExitOk;
}

// ---- metrics / analyze ------------------------------------------------------

int cmd_metrics(const std::string& scores_path, const std::vector<std::string>& atpd_pairs, bool all_pairs,
                std::ostream& out) {
  const CsvTable t = read_csv(scores_path);
  const std::size_t id_col = t.require_column("model");
  const auto parents_col = t.column("parents");
  std::vector<EvalResult> results;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::vector<std::string>> parents;
  for (const auto& row : t.rows) {
    EvalResult r;
    r.model_id = row[id_col];
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == id_col || (parents_col && c == *parents_col)) continue;
      r.task_scores[t.header[c]] = parse_real(row[c], fmt::format("score '{}' of '{}'", t.header[c], r.model_id));
    }
    r.validate();
    if (parents_col && !row[*parents_col].empty()) {
      std::vector<std::string> ps;
      std::string_view rest = row[*parents_col];
      while (!rest.empty()) {
        const auto sep = rest.find(';');
        ps.emplace_back(rest.substr(0, sep));
        rest = sep == std::string_view::npos ? std::string_view{} : rest.substr(sep + 1);
      }
      parents[r.model_id] = std::move(ps);
    }
    if (!index.emplace(r.model_id, results.size()).second) throw_data(fmt::format("model '{}' listed twice", r.model_id));
    results.push_back(std::move(r));
  }
  const auto find = [&](const std::string& id) -> const EvalResult& {
    const auto it = index.find(id);
    if (it == index.end()) throw_data(fmt::format("unknown model '{}'", id));
    return results[it->second];
  };

  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json m = {{"model", r.model_id}, {"atp", average_task_performance(r)}};
    if (auto p = parents.find(r.model_id); p != parents.end()) {
      std::vector<double> atps;
      for (const auto& pid : p->second) atps.push_back(average_task_performance(find(pid)));
      m["parents"] = p->second;
      m["gain"] = merge_gain(average_task_performance(r), atps);
    }
    models.push_back(std::move(m));
  }
  nlohmann::json atpds = nlohmann::json::array();
  const auto add_atpd = [&](const std::string& a, const std::string& b) {
    atpds.push_back({{"a", a}, {"b", b}, {"atpd", atpd(find(a), find(b))}});
  };
  if (all_pairs) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (std::size_t j = i + 1; j < results.size(); ++j) add_atpd(results[i].model_id, results[j].model_id);
    }
  }
  for (const auto& p : atpd_pairs) {
    const auto sep = p.find(':');
    if (sep == std::string::npos) throw_usage(fmt::format("--atpd expects A:B, got '{}'", p));
    add_atpd(p.substr(0, sep), p.substr(sep + 1));
  }
  out << nlohmann::json({{"models", models}, {"atpd", atpds}}).dump() << '\n';
  return kExitOk;
}

nlohmann::json correlation_json(const Correlation& c) { return {{"r", c.r}, {"p", c.p}}; }

int cmd_analyze(const std::string& rows_path, std::ostream& out) {
  const CsvTable t = read_csv(rows_path);
  const std::size_t gain_col = t.require_column("gain");
  std::vector<double> gains;
  for (const auto& row : t.rows) gains.push_back(parse_real(row[gain_col], "gain"));
  std::vector<double> abs_gains;
  for (double g : gains) abs_gains.push_back(std::fabs(g));

  nlohmann::json rows = nlohmann::json::array();
  for (SimMetric m : {SimMetric::pcc, SimMetric::cs, SimMetric::ed}) {
    const std::string name(to_string(m));
    auto col = t.column(name);
    if (!col) col = t.column("kinship_" + name);
    if (!col) continue;
    std::vector<double> kin;
    for (const auto& row : t.rows) kin.push_back(parse_real(row[*col], name));
    rows.push_back({{"metric", name},
                    {"signed_gain", correlation_json(pearson_with_p(kin, gains))},
                    {"absolute_gain", correlation_json(pearson_with_p(kin, abs_gains))}});
  }
  if (rows.empty()) throw_data("analyze input has no pcc, cs or ed column");
  out << nlohmann::json({{"n", gains.size()}, {"correlations", rows}}).dump(2) << '\n';
  return kExitOk;
}

// ---- evolve / export-tree --------------------------------------------------

int cmd_evolve(const std::string& config_path, const std::string& output_dir, int workers, std::ostream& out) {
  RunConfig cfg = RunConfig::load(config_path);
  if (!output_dir.empty()) cfg.output_dir = std::filesystem::absolute(output_dir);
  if (workers > 0) cfg.strategy.workers = static_cast<std::size_t>(workers);
  const EvolutionResult r = run_evolve(cfg);

  std::optional<std::string> best;
  double best_atp = -1.0;
  std::size_t models = 0;
  int generations = 0;
  for (const auto& e : r.log.events()) {
    if (e.at("event") == "evaluated") {
      ++models;
      const double atp = e.at("atp").get<double>();
      if (atp > best_atp) {
        best_atp = atp;
        best = e.at("id").get<std::string>();
      }
    } else if (e.at("event") == "generation_started") {
      generations = e.at("generation").get<int>();
    }
  }
  out << nlohmann::json({{"stop_reason", r.log.stop_reason().value_or("")},
                         {"generations", generations},
                         {"models", models},
                         {"best_model", best.value_or("")},
                         {"best_atp", best_atp},
                         {"output_dir", cfg.output_dir.string()}})
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_export_tree(const std::string& log_path, const std::string& format, const std::string& output,
                    std::ostream& out) {
  const FamilyTree tree = replay(EvolutionLog::from_jsonl(read_text_file(log_path)));
  if (format == "dot") write_or_print(tree.to_dot(), output, out);
  else if (format == "json") write_or_print(tree.to_json().dump(2) + "\n", output, out);
  else throw_usage(fmt::format("unknown format '{}' (expected dot or json)", format));
  return kExitOk;
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return kExitUsage;
    case ErrorKind::data:
    case ErrorKind::io: return kExitData;
    case ErrorKind::evaluator: return kExitEvaluator;
  }
  return kExitData;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Model merging, kinship and evolution toolkit", "kinmerge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kinmerge 1.0.0");

  MergeArgs merge;
  auto* merge_cmd = app.add_subcommand("merge", "Merge parent checkpoints into one file");
  merge_cmd->add_option("--recipe", merge.recipe_path, "Recipe JSON (operator, parents, base, params)");
  merge_cmd->add_option("--operator", merge.op, "linear | slerp | ties | dare_ties");
  merge_cmd->add_option("--weights", merge.weights, "Linear weights, one per parent")->delimiter(',');
  merge_cmd->add_option("--t", merge.t, "SLERP interpolation factor");
  merge_cmd->add_option("--density", merge.density, "TIES/DARE density");
  merge_cmd->add_option("--weight", merge.weight, "Scale of the merged task vector");
  merge_cmd->add_option("--seed", merge.seed, "DARE seed");
  merge_cmd->add_option("--base", merge.base, "Base model ([id=]path)");
  merge_cmd->add_option("-o,--output", merge.output, "Output file")->required();
  merge_cmd->add_option("parents", merge.parents, "Parent models ([id=]path)")->required();

  std::string metric = "pcc", base, format, output;
  std::vector<std::string> models;
  bool json = false;
  auto* kin_cmd = app.add_subcommand("kinship", "Kinship of two models, or mean pairwise kinship of a group");
  kin_cmd->add_option("--metric", metric, "pcc | cs | ed");
  kin_cmd->add_option("--base", base, "Base model ([id=]path)")->required();
  kin_cmd->add_flag("--json", json, "Emit a JSON report with every pair");
  kin_cmd->add_option("models", models, "Models ([id=]path)")->required();

  auto* matrix_cmd = app.add_subcommand("matrix", "Pairwise kinship matrix of a group");
  matrix_cmd->add_option("--metric", metric, "pcc | cs | ed");
  matrix_cmd->add_option("--base", base, "Base model ([id=]path)")->required();
  matrix_cmd->add_option("--format", format, "csv | json")->default_val("csv");
  matrix_cmd->add_option("-o,--output", output, "Output file (default stdout)");
  matrix_cmd->add_option("models", models, "Models ([id=]path)")->required();

  std::string scores;
  std::vector<std::string> atpd_pairs;
  bool all_pairs = false;
  auto* metrics_cmd = app.add_subcommand("metrics", "ATP, merge gain and ATPD from a score table");
  metrics_cmd->add_option("scores", scores, "CSV: model,<task>...[,parents]")->required();
  metrics_cmd->add_option("--atpd", atpd_pairs, "Model pair A:B to compare");
  metrics_cmd->add_flag("--all-pairs", all_pairs, "ATPD for every pair of models");

  std::string rows;
  auto* analyze_cmd = app.add_subcommand("analyze", "Correlation of kinship with merge gain");
  analyze_cmd->add_option("rows", rows, "CSV with a gain column and pcc/cs/ed columns")->required();

  std::string config, output_dir;
  int workers = 0;
  auto* evolve_cmd = app.add_subcommand("evolve", "Run an iterative merging experiment");
  evolve_cmd->add_option("config", config, "Run configuration JSON")->required();
  evolve_cmd->add_option("--output-dir", output_dir, "Override the configured output directory");
  evolve_cmd->add_option("--workers", workers, "Override the worker count");

  std::string log_path, tree_format, tree_output;
  auto* tree_cmd = app.add_subcommand("export-tree", "Family tree of an evolution log");
  tree_cmd->add_option("log", log_path, "log.jsonl")->required();
  tree_cmd->add_option("--format", tree_format, "dot | json")->default_val("dot");
  tree_cmd->add_option("-o,--output", tree_output, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "kinmerge 1.0.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*merge_cmd) return cmd_merge(merge, out);
    if (*kin_cmd) return cmd_kinship(metric, base, models, json, out);
    if (*matrix_cmd) return cmd_matrix(metric, base, models, format, output, out);
    if (*metrics_cmd) return cmd_metrics(scores, atpd_pairs, all_pairs, out);
    if (*analyze_cmd) return cmd_analyze(rows, out);
    if (*evolve_cmd) return cmd_evolve(config, output_dir, workers, out);
    if (*tree_cmd) return cmd_export_tree(log_path, tree_format, tree_output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace kinmerge
