// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/core.h>

#include "kinmerge/error.hpp"
#include "kinmerge/parallel.hpp"
#include "kinmerge/prng.hpp"
#include "kinmerge/simd/kernels.hpp"

namespace kinmerge {

std::string_view to_string(StrategyKind k) noexcept {
  switch (k) {
    case StrategyKind::topk_greedy: return "topk_greedy";
    case StrategyKind::topk_greedy_kinship: return "topk_greedy_kinship";
    case StrategyKind::random: return "random";
  }
  return "?";
}

std::string_view to_string(StopKind k) noexcept {
  switch (k) {
    case StopKind::topk_stable: return "topk_stable";
    case StopKind::high_kinship: return "high_kinship";
    case StopKind::max_generations: return "max_generations";
  }
  return "?";
}

std::optional<StrategyKind> parse_strategy_kind(std::string_view s) noexcept {
  if (s == "topk_greedy") return StrategyKind::topk_greedy;
  if (s == "topk_greedy_kinship") return StrategyKind::topk_greedy_kinship;
  if (s == "random") return StrategyKind::random;
  return std::nullopt;
}

std::optional<StopKind> parse_stop_kind(std::string_view s) noexcept {
  if (s == "topk_stable") return StopKind::topk_stable;
  if (s == "high_kinship") return StopKind::high_kinship;
  if (s == "max_generations") return StopKind::max_generations;
  return std::nullopt;
}

// ---- stores ---------------------------------------------------------------

std::pair<std::filesystem::path, TensorMap> MemoryStore::put(const std::string&, TensorMap model,
                                                             const MergeRecipe&) {
  return {{}, std::move(model)};
}

DirectoryStore::DirectoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw_io(fmt::format("cannot create '{}': {}", dir_.string(), ec.message()));
}

std::pair<std::filesystem::path, TensorMap> DirectoryStore::put(const std::string& id, TensorMap model,
                                                                const MergeRecipe& recipe) {
  TensorMapBuilder b;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const TensorMeta& m = model.meta(i);
    b.add_raw(m.name, m.element_type, m.shape, model.raw(i));
  }
  b.set_metadata("recipe", recipe.to_json().dump());
  const auto path = dir_ / (id + ".safetensors");
  save_tensor_map(std::move(b).build(), path);
  return {path, load_tensor_map(path)};
}

// ---- pool -----------------------------------------------------------------

Pool::Pool(std::string base_id, TensorMap base) : base_id_(std::move(base_id)), base_(std::move(base)) {}

const ModelRecord& Pool::at(std::string_view id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw_data(fmt::format("unknown model '{}'", id));
  return records_[it->second];
}

ModelRecord& Pool::at(std::string_view id) {
  return const_cast<ModelRecord&>(std::as_const(*this).at(id));
}

bool Pool::contains(std::string_view id) const { return index_.find(id) != index_.end(); }

ModelRecord& Pool::add(ModelRecord record) {
  if (record.id.empty()) throw_data("model id must not be empty");
  if (record.id == base_id_ || contains(record.id)) {
    throw_data(fmt::format("duplicate model id '{}'", record.id));
  }
  int parent_generation = -1;
  for (const auto& p : record.parents) {
    if (!contains(p)) throw_data(fmt::format("'{}' names unknown parent '{}'", record.id, p));
    parent_generation = std::max(parent_generation, at(p).generation);
  }
  // generation counts merge rounds, so a child of two older models can sit
  // more than one above its parents
  if (!record.parents.empty() && record.generation <= parent_generation) {
    throw_data(fmt::format("'{}' is not younger than its parents", record.id));
  }
  try {
    check_compatible(record.tensors, base_);
  } catch (const Error& e) {
    throw_data(fmt::format("model '{}' does not match the base: {}", record.id, e.what()));
  }
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
  return records_.back();
}

DeltaVector Pool::delta(std::string_view id) const {
  const ModelRecord& r = at(id);
  return compute_delta(r.tensors, base_, r.id, base_id_);
}

namespace {

/// Orders ids by (ATP desc, id asc); unevaluated models sort last.
void sort_by_atp(const Pool& pool, std::vector<std::string>& ids) {
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    const auto& ra = pool.at(a);
    const auto& rb = pool.at(b);
    const double va = ra.atp.value_or(-1.0);
    const double vb = rb.atp.value_or(-1.0);
    if (va != vb) return va > vb;
    return a < b;
  });
}

}  // namespace

std::vector<std::string> Pool::top_k(std::size_t k) const {
  std::vector<std::string> ids;
  for (const auto& r : records_) {
    if (r.atp) ids.push_back(r.id);
  }
  sort_by_atp(*this, ids);
  if (ids.size() > k) ids.resize(k);
  return ids;
}

// ---- config ---------------------------------------------------------------

void StrategyConfig::validate() const {
  if (k < 2) throw_usage("strategy k must be at least 2");
  if (max_generations < 1) throw_usage("max_generations must be positive");
  if (workers < 1) throw_usage("workers must be positive");
  if (merge_template.op == MergeOperator::slerp && !(merge_template.params.t >= 0.0 && merge_template.params.t <= 1.0)) {
    throw_usage("slerp t must lie in [0, 1]");
  }
  if (!merge_template.params.weights.empty() && merge_template.params.weights.size() != 2) {
    throw_usage("pairwise merges take exactly two linear weights");
  }
  if (stop.kind == StopKind::high_kinship && !(stop.kinship_threshold > -1.0 && stop.kinship_threshold <= 1.0)) {
    throw_usage("kinship threshold must lie in (-1, 1]");
  }
}

// ---- log ------------------------------------------------------------------

void EvolutionLog::append(std::string_view type, nlohmann::json fields) {
  nlohmann::json e = nlohmann::json::object();
  e["seq"] = events_.size();
  e["event"] = type;
  for (auto& [key, value] : fields.items()) e[key] = std::move(value);
  events_.push_back(std::move(e));
}

std::string EvolutionLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

EvolutionLog EvolutionLog::from_jsonl(std::string_view text) {
  EvolutionLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto e = nlohmann::json::parse(line);
      if (!e.is_object() || !e.contains("event") || !e.at("event").is_string()) {
        throw_data(fmt::format("log line {} is not an event object", line_no));
      }
      log.events_.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw_data(fmt::format("log line {}: {}", line_no, ex.what()));
    }
  }
  return log;
}

std::optional<std::string> EvolutionLog::stop_reason() const {
  for (auto it = events_.rbegin(); it != events_.rend(); ++it) {
    if (it->at("event") == "stopped") return it->at("reason").get<std::string>();
  }
  return std::nullopt;
}

nlohmann::json EvolutionResult::timings_json() const {
  nlohmann::json gens = nlohmann::json::array();
  double total = 0.0;
  for (const auto& t : timings) {
    gens.push_back({{"generation", t.generation},
                    {"merge_seconds", t.merge_seconds},
                    {"eval_seconds", t.eval_seconds},
                    {"kinship_seconds", t.kinship_seconds},
                    {"wall_seconds", t.wall_seconds}});
    total += t.wall_seconds;
  }
  nlohmann::json j = {{"generations", gens}, {"total_seconds", total}};
  // first generation whose top set was already highly related: stopping
  // there would have saved the time spent afterwards
  std::optional<int> converged;
  for (const auto& e : log.events()) {
    if (e.at("event") != "topk_updated" || !e.contains("min_pcc") || e.at("min_pcc").is_null()) continue;
    if (e.at("min_pcc").get<double>() > 0.9) {
      converged = e.at("generation").get<int>();
      break;
    }
  }
  if (converged) {
    double after = 0.0;
    for (const auto& t : timings) {
      if (t.generation > *converged) after += t.wall_seconds;
    }
    j["high_kinship_generation"] = *converged;
    j["projected_savings_fraction"] = total > 0.0 ? after / total : 0.0;
  } else {
    j["high_kinship_generation"] = nullptr;
    j["projected_savings_fraction"] = 0.0;
  }
  return j;
}

// ---- selection helpers ----------------------------------------------------

std::string select_exploration_partner(std::span<const ExplorationCandidate> candidates, SimMetric metric) {
  if (candidates.empty()) throw_data("no exploration candidates");
  const ExplorationCandidate* best = &candidates[0];
  for (const auto& c : candidates.subspan(1)) {
    // "least related" is the reverse of more_related
    if (more_related(metric, best->kinship, c.kinship) || (c.kinship == best->kinship && c.id < best->id)) {
      best = &c;
    }
  }
  return best->id;
}

bool check_early_stop(std::span<const DeltaVector> deltas, double threshold) {
  if (deltas.size() < 2) throw_data("early-stop check needs at least two models");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    for (std::size_t j = i + 1; j < deltas.size(); ++j) {
      if (!(sim_pair(deltas[i], deltas[j], SimMetric::pcc) > threshold)) return false;
    }
  }
  return true;
}

bool check_early_stop(const Pool& pool, std::span<const std::string> ids, double threshold) {
  std::vector<DeltaVector> deltas;
  for (const auto& id : ids) deltas.push_back(pool.delta(id));
  return check_early_stop(deltas, threshold);
}

// ---- engine ---------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct PlannedMerge {
  std::string child;
  std::vector<std::string> parents;
  bool exploration = false;
};

struct MergeOutcome {
  ModelRecord record;
  std::optional<double> parent_kinship;
  std::string kinship_error;
  bool degenerate = false;
};

nlohmann::json scores_json(const EvalResult& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : r.task_scores) j[k] = v;
  return j;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

class Engine {
 public:
  Engine(Pool& pool, const StrategyConfig& cfg, Evaluator& evaluator, ModelStore& store)
      : pool_(pool), cfg_(cfg), evaluator_(evaluator), store_(store), rng_(cfg.rng_seed) {}

  EvolutionResult run() {
    cfg_.validate();
    const std::size_t foundations = pool_.size();
    if (foundations < 2) throw_data("evolution needs at least two foundation models");
    for (const auto& r : pool_.records()) {
      if (!r.parents.empty()) throw_data("the pool must contain only foundation models before a run");
    }
    log().append("run_started", {{"strategy", to_string(cfg_.kind)},
                                 {"k", cfg_.k},
                                 {"metric", to_string(cfg_.metric)},
                                 {"stop", to_string(cfg_.stop.kind)},
                                 {"kinship_threshold", cfg_.stop.kinship_threshold},
                                 {"max_generations", cfg_.max_generations},
                                 {"rng_seed", cfg_.rng_seed},
                                 {"merge", cfg_.merge_template.to_json()},
                                 {"base", pool_.base_id()}});
    evaluate_foundations();

    std::vector<std::string> s;
    std::optional<std::vector<std::string>> s_prev;
    for (int g = 1;; ++g) {
      const auto t0 = Clock::now();
      GenerationTiming timing;
      timing.generation = g;
      log().append("generation_started", {{"generation", g}});

      std::vector<PlannedMerge> plan = plan_generation(g, s);
      if (cfg_.kind == StrategyKind::topk_greedy_kinship && g >= 2) {
        const auto k0 = Clock::now();
        if (auto exp = plan_exploration(g, s, plan.size() + 1)) plan.push_back(std::move(*exp));
        timing.kinship_seconds += seconds_since(k0);
      }
      execute(g, plan, timing);

      s_prev = g >= 2 ? std::optional(s) : std::nullopt;
      s = pool_.top_k(cfg_.k);
      const auto k1 = Clock::now();
      std::optional<double> min_pcc;
      std::string pcc_error;
      try {
        min_pcc = min_pairwise_pcc(s);
      } catch (const Error& e) {
        pcc_error = e.what();
      }
      timing.kinship_seconds += seconds_since(k1);
      nlohmann::json upd = {{"generation", g}, {"ids", s}, {"min_pcc", optional_json(min_pcc)}};
      if (!pcc_error.empty()) upd["kinship_error"] = pcc_error;
      log().append("topk_updated", std::move(upd));
      timing.wall_seconds = seconds_since(t0);
      result_.timings.push_back(timing);

      if (auto reason = stop_reason(g, s, s_prev, min_pcc, pcc_error)) {
        log().append("stopped", {{"generation", g}, {"reason", *reason}});
        break;
      }
    }
    return std::move(result_);
  }

  EvolutionResult& partial() { return result_; }

 private:
  EvolutionLog& log() { return result_.log; }

  void evaluate_foundations() {
    std::vector<std::string> pending;
    for (const auto& r : pool_.records()) {
      log().append("model_registered", {{"id", r.id}, {"generation", 0}});
      if (!r.eval) pending.push_back(r.id);
    }
    std::vector<EvalResult> results(pending.size());
    parallel_for(pending.size(), cfg_.workers, [&](std::size_t i) {
      const ModelRecord& r = pool_.at(pending[i]);
      results[i] = evaluator_.evaluate({r.id, r.path, r.tensors});
    });
    for (std::size_t i = 0; i < pending.size(); ++i) {
      ModelRecord& r = pool_.at(pending[i]);
      r.eval = std::move(results[i]);
    }
    for (const auto& r : pool_.records()) {
      ModelRecord& rec = pool_.at(r.id);
      rec.atp = average_task_performance(*rec.eval);
      log().append("evaluated", {{"id", rec.id}, {"atp", *rec.atp}, {"scores", scores_json(*rec.eval)}});
    }
  }

  std::vector<std::string> ordered(std::vector<std::string> ids) const {
    sort_by_atp(pool_, ids);
    return ids;
  }

  static std::string child_name(int g, std::size_t ordinal) { return fmt::format("model-{}-{}", g, ordinal); }

  std::vector<PlannedMerge> plan_generation(int g, const std::vector<std::string>& s) {
    std::vector<PlannedMerge> plan;
    if (cfg_.kind == StrategyKind::random) {
      std::vector<std::string> ids;
      for (const auto& r : pool_.records()) ids.push_back(r.id);
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(i, j);
      }
      // partial Fisher–Yates: the first `take` slots become a uniform sample
      const std::size_t take = std::min(cfg_.k, pairs.size());
      for (std::size_t t = 0; t < take; ++t) {
        const std::size_t j = t + static_cast<std::size_t>(rng_.below(pairs.size() - t));
        std::swap(pairs[t], pairs[j]);
      }
      for (std::size_t t = 0; t < take; ++t) {
        plan.push_back({child_name(g, t + 1), ordered({ids[pairs[t].first], ids[pairs[t].second]}), false});
      }
    } else {
      std::vector<std::string> members;
      if (g == 1) {
        for (const auto& r : pool_.records()) members.push_back(r.id);
      } else {
        members = s;
      }
      members = ordered(members);
      for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          plan.push_back({child_name(g, plan.size() + 1), {members[i], members[j]}, false});
        }
      }
    }
    for (const auto& p : plan) {
      log().append("pair_selected", {{"generation", g}, {"parents", p.parents}, {"child", p.child}});
    }
    return plan;
  }

  std::optional<PlannedMerge> plan_exploration(int g, const std::vector<std::string>& s, std::size_t ordinal) {
    const std::string best = s.front();
    const std::set<std::string> in_s(s.begin(), s.end());
    // members of the previous generation that the greedy step has not
    // already paired with the best model; failing that, the rest of S
    std::vector<std::string> candidates;
    std::string pool_name = "previous_generation";
    for (const auto& r : pool_.records()) {
      if (r.generation == g - 1 && !r.parents.empty() && !in_s.count(r.id)) candidates.push_back(r.id);
    }
    if (candidates.empty()) {
      pool_name = "topk_previous_generation";
      for (const auto& id : s) {
        if (id != best && pool_.at(id).generation == g - 1) candidates.push_back(id);
      }
    }
    if (candidates.empty()) {
      pool_name = "topk";
      for (const auto& id : s) {
        if (id != best) candidates.push_back(id);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    if (candidates.empty()) {
      log().append("exploration_skipped", {{"generation", g}, {"reason", "no candidates"}});
      return std::nullopt;
    }

    std::vector<ExplorationCandidate> scored(candidates.size());
    try {
      const DeltaVector best_delta = pool_.delta(best);
      parallel_for(candidates.size(), cfg_.workers, [&](std::size_t i) {
        scored[i] = {candidates[i], sim_pair(best_delta, pool_.delta(candidates[i]), cfg_.metric)};
      });
    } catch (const Error& e) {
      log().append("exploration_skipped", {{"generation", g}, {"best", best}, {"reason", e.what()}});
      return std::nullopt;
    }
    const std::string partner = select_exploration_partner(scored, cfg_.metric);
    nlohmann::json cj = nlohmann::json::array();
    double partner_kinship = 0.0;
    for (const auto& c : scored) {
      cj.push_back({{"id", c.id}, {"kinship", c.kinship}});
      if (c.id == partner) partner_kinship = c.kinship;
    }
    PlannedMerge m{child_name(g, ordinal), ordered({best, partner}), true};
    log().append("exploration_merge", {{"generation", g},
                                       {"best", best},
                                       {"partner", partner},
                                       {"kinship", partner_kinship},
                                       {"candidate_set", pool_name},
                                       {"candidates", cj},
                                       {"child", m.child}});
    return m;
  }

  MergeRecipe recipe_for(const PlannedMerge& p) const {
    MergeRecipe r = cfg_.merge_template;
    r.parent_ids = p.parents;
    if (r.op == MergeOperator::ties || r.op == MergeOperator::dare_ties) r.base_id = pool_.base_id();
    else r.base_id.reset();
    return r;
  }

  static bool is_degenerate(const TensorMap& child, const TensorMap& parent) {
    const auto& k = simd::kernels();
    std::vector<float> a(kStreamChunk), b(kStreamChunk);
    for (std::size_t ti = 0; ti < child.size(); ++ti) {
      const std::uint64_t numel = child.meta(ti).numel();
      for (std::uint64_t off = 0; off < numel; off += kStreamChunk) {
        const std::size_t n = std::min<std::uint64_t>(kStreamChunk, numel - off);
        child.read(ti, off, std::span(a).first(n));
        parent.read(ti, off, std::span(b).first(n));
        if (!(k.max_abs_diff(a.data(), b.data(), n) < 1e-7f)) return false;
      }
    }
    return true;
  }

  void execute(int g, const std::vector<PlannedMerge>& plan, GenerationTiming& timing) {
    std::vector<MergeOutcome> outcomes(plan.size());
    std::vector<MergeRecipe> recipes;
    for (const auto& p : plan) recipes.push_back(recipe_for(p));

    const auto m0 = Clock::now();
    try {
      parallel_for(plan.size(), cfg_.workers, [&](std::size_t i) {
        const PlannedMerge& p = plan[i];
        std::vector<TensorMap> parents;
        for (const auto& id : p.parents) parents.push_back(pool_.at(id).tensors);
        TensorMap merged = apply_recipe(recipes[i], parents, &pool_.base());
        MergeOutcome& out = outcomes[i];
        for (const auto& parent : parents) out.degenerate = out.degenerate || is_degenerate(merged, parent);
        auto [path, handle] = store_.put(p.child, std::move(merged), recipes[i]);
        out.record.id = p.child;
        out.record.path = std::move(path);
        out.record.generation = g;
        out.record.parents = p.parents;
        out.record.recipe = recipes[i];
        out.record.tensors = std::move(handle);
        try {
          std::vector<DeltaVector> deltas;
          for (const auto& id : p.parents) deltas.push_back(pool_.delta(id));
          out.parent_kinship = kinship_group(deltas, cfg_.metric);
        } catch (const Error& e) {
          out.kinship_error = e.what();
        }
      });
    } catch (const Error& e) {
      // name the first recipe that did not complete
      for (std::size_t i = 0; i < plan.size(); ++i) {
        if (outcomes[i].record.id.empty()) {
          log().append("merge_failed", {{"generation", g}, {"child", plan[i].child}, {"recipe", recipes[i].to_json()},
                                        {"error", e.what()}});
          break;
        }
      }
      throw;
    }
    timing.merge_seconds = seconds_since(m0);

    for (std::size_t i = 0; i < plan.size(); ++i) {
      MergeOutcome& out = outcomes[i];
      nlohmann::json ev = {{"generation", g},
                           {"child", out.record.id},
                           {"parents", out.record.parents},
                           {"recipe", recipes[i].to_json()},
                           {"exploration", plan[i].exploration},
                           {"parent_kinship", optional_json(out.parent_kinship)},
                           {"degenerate", out.degenerate}};
      if (!out.kinship_error.empty()) ev["kinship_error"] = out.kinship_error;
      log().append("merged", std::move(ev));
      pool_.add(std::move(out.record));
    }

    const auto e0 = Clock::now();
    std::vector<EvalResult> results(plan.size());
    try {
      parallel_for(plan.size(), cfg_.workers, [&](std::size_t i) {
        const ModelRecord& r = pool_.at(plan[i].child);
        results[i] = evaluator_.evaluate({r.id, r.path, r.tensors});
      });
    } catch (const Error& e) {
      log().append("evaluation_failed", {{"generation", g}, {"error", e.what()}});
      throw;
    }
    timing.eval_seconds = seconds_since(e0);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      ModelRecord& r = pool_.at(plan[i].child);
      r.eval = std::move(results[i]);
      r.atp = average_task_performance(*r.eval);
      log().append("evaluated", {{"id", r.id}, {"atp", *r.atp}, {"scores", scores_json(*r.eval)}});
    }
  }

  double min_pairwise_pcc(const std::vector<std::string>& s) const {
    std::vector<DeltaVector> deltas;
    for (const auto& id : s) deltas.push_back(pool_.delta(id));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      for (std::size_t j = i + 1; j < deltas.size(); ++j) pairs.emplace_back(i, j);
    }
    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), cfg_.workers, [&](std::size_t p) {
      values[p] = sim_pair(deltas[pairs[p].first], deltas[pairs[p].second], SimMetric::pcc);
    });
    return values.empty() ? 1.0 : *std::min_element(values.begin(), values.end());
  }

  std::optional<std::string> stop_reason(int g, const std::vector<std::string>& s,
                                         const std::optional<std::vector<std::string>>& s_prev,
                                         std::optional<double> min_pcc, const std::string& pcc_error) {
    if (cfg_.stop.kind != StopKind::max_generations && s_prev && *s_prev == s) return "topk_stable";
    if (cfg_.stop.kind == StopKind::high_kinship) {
      if (!min_pcc) throw_data("high-kinship stop check failed: " + pcc_error);
      if (s.size() >= 2 && *min_pcc > cfg_.stop.kinship_threshold) return "high_kinship";
    }
    if (g >= cfg_.max_generations) return "max_generations";
    return std::nullopt;
  }

  Pool& pool_;
  const StrategyConfig& cfg_;
  Evaluator& evaluator_;
  ModelStore& store_;
  SplitMix64 rng_;
  EvolutionResult result_;
};

}  // namespace

EvolutionFailure::EvolutionFailure(const Error& cause, EvolutionResult partial)
    : Error(cause.kind(), cause.what()), partial_(std::move(partial)) {}

EvolutionResult run_evolution(Pool& pool, const StrategyConfig& cfg, Evaluator& evaluator, ModelStore& store) {
  Engine engine(pool, cfg, evaluator, store);
  try {
    return engine.run();
  } catch (const EvolutionFailure&) {
    throw;
  } catch (const Error& e) {
    engine.partial().log.append("stopped", {{"reason", "error"}, {"error", e.what()}});
    throw EvolutionFailure(e, std::move(engine.partial()));
  }
}

EvolutionResult run_topk_greedy(Pool& pool, StrategyConfig cfg, Evaluator& evaluator, ModelStore& store) {
  cfg.kind = StrategyKind::topk_greedy;
  return run_evolution(pool, cfg, evaluator, store);
}

EvolutionResult run_topk_greedy_kinship(Pool& pool, StrategyConfig cfg, Evaluator& evaluator,
                                        ModelStore& store) {
  cfg.kind = StrategyKind::topk_greedy_kinship;
  return run_evolution(pool, cfg, evaluator, store);
}

EvolutionResult run_random(Pool& pool, StrategyConfig cfg, Evaluator& evaluator, ModelStore& store) {
  cfg.kind = StrategyKind::random;
  return run_evolution(pool, cfg, evaluator, store);
}

}  // namespace kinmerge
