// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/evaluator.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "kinmerge/csv.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/simd/kernels.hpp"
#include "kinmerge/subprocess.hpp"

namespace kinmerge {

namespace {

std::string tail(const std::string& s, std::size_t max = 2000) {
  return s.size() <= max ? s : "..." + s.substr(s.size() - max);
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw_io("cannot initialise SHA-256");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw_io("SHA-256 update failed");
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw_io("SHA-256 final failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string substitute_model(const std::string& command, const std::filesystem::path& path) {
  static constexpr std::string_view kPlaceholder = "{model}";
  if (command.find(kPlaceholder) == std::string::npos) {
    throw_usage("evaluator command has no {model} placeholder");
  }
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto hit = command.find(kPlaceholder, pos);
    if (hit == std::string::npos) break;
    out += command.substr(pos, hit - pos);
    out += shell_quote(path.string());
    pos = hit + kPlaceholder.size();
  }
  out += command.substr(pos);
  return out;
}

EvalResult result_from_json(const nlohmann::json& j, std::span<const std::string> tasks,
                            std::string model_id) {
  if (!j.is_object() || !j.contains("tasks") || !j.at("tasks").is_object()) {
    throw_evaluator("evaluator output must be an object with a \"tasks\" object");
  }
  EvalResult r;
  r.model_id = std::move(model_id);
  for (const auto& [name, v] : j.at("tasks").items()) {
    if (!v.is_number()) throw_evaluator(fmt::format("score for task '{}' is not a number", name));
    r.task_scores[name] = v.get<double>();
  }
  try {
    if (tasks.empty()) r.validate();
    else r.validate(tasks);
  } catch (const Error& e) {
    throw_evaluator(e.what());
  }
  return r;
}

}  // namespace

std::string sha256_hex(std::span<const std::byte> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io(fmt::format("cannot open '{}' for hashing", path.string()));
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw_io(fmt::format("read error while hashing '{}'", path.string()));
  return h.hex();
}

EvalResult parse_evaluator_output(std::string_view stdout_text, std::span<const std::string> tasks,
                                  std::string model_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(stdout_text);
  } catch (const nlohmann::json::exception& e) {
    throw_evaluator(fmt::format("malformed evaluator output ({}): {}", e.what(), tail(std::string(stdout_text))));
  }
  return result_from_json(j, tasks, std::move(model_id));
}

EvalResult evaluate_external(const std::filesystem::path& model_path, const std::string& command,
                             std::chrono::milliseconds timeout, std::span<const std::string> tasks,
                             std::string model_id) {
  if (model_path.empty()) throw_evaluator("external evaluation needs the model on disk");
  const ProcessResult pr = run_shell(substitute_model(command, model_path), timeout);
  if (pr.timed_out) {
    throw_evaluator(fmt::format("evaluator timed out after {} ms on '{}'; stderr: {}", timeout.count(),
                                model_path.string(), tail(pr.err)));
  }
  if (pr.signal != 0) {
    throw_evaluator(fmt::format("evaluator killed by signal {}; stderr: {}", pr.signal, tail(pr.err)));
  }
  // a shell reports a child killed by signal N as status 128 + N
  if (pr.exit_code > 128 && pr.exit_code <= 128 + 64) {
    throw_evaluator(fmt::format("evaluator exited with status {} (killed by signal {}); stderr: {}", pr.exit_code,
                                pr.exit_code - 128, tail(pr.err)));
  }
  if (pr.exit_code != 0) {
    throw_evaluator(fmt::format("evaluator exited with status {}; stderr: {}", pr.exit_code, tail(pr.err)));
  }
  try {
    return parse_evaluator_output(pr.out, tasks, std::move(model_id));
  } catch (const Error& e) {
    throw_evaluator(fmt::format("{}; stderr: {}", e.what(), tail(pr.err)));
  }
}

ExternalEvaluator::ExternalEvaluator(Options options) : options_(std::move(options)) {
  if (options_.command.find("{model}") == std::string::npos) {
    throw_usage("evaluator command has no {model} placeholder");
  }
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

EvalResult ExternalEvaluator::evaluate(const ModelView& model) {
  if (model.path.empty()) throw_evaluator(fmt::format("model '{}' has no file to evaluate", model.id));
  const std::string key = sha256_file(model.path);

  std::promise<EvalResult> promise;
  std::shared_future<EvalResult> pending;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      pending = promise.get_future().share();
      cache_.emplace(key, pending);
      owner = true;
    } else {
      pending = it->second;
    }
  }
  if (owner) {
    try {
      std::optional<std::filesystem::path> disk;
      if (options_.cache_dir) {
        const std::string cmd_key = sha256_hex(std::as_bytes(std::span(options_.command)));
        disk = *options_.cache_dir / (key + "-" + cmd_key.substr(0, 16) + ".json");
      }
      EvalResult r;
      if (disk && std::filesystem::exists(*disk)) {
        r = parse_evaluator_output(read_text_file(*disk), options_.tasks, model.id);
      } else {
        ++invocations_;
        r = evaluate_external(model.path, options_.command, options_.timeout, options_.tasks, model.id);
        if (disk) {
          nlohmann::json j = {{"tasks", r.task_scores}};
          write_text_file(*disk, j.dump());
        }
      }
      promise.set_value(std::move(r));
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(mutex_);
      cache_.erase(key);
    }
  }
  EvalResult r = pending.get();
  r.model_id = model.id;
  return r;
}

std::string ExternalEvaluator::describe() const { return "external: " + options_.command; }

EvalResult evaluate_synthetic(const TensorMap& model, const SyntheticSpec& spec, std::string model_id) {
  if (spec.tasks.empty()) throw_usage("synthetic evaluator has no tasks");
  const auto& k = simd::kernels();
  EvalResult r;
  r.model_id = std::move(model_id);
  std::vector<float> a(kStreamChunk), b(kStreamChunk);
  for (const auto& task : spec.tasks) {
    check_compatible(model, task.target);
    double dist2 = 0.0;
    for (std::size_t ti = 0; ti < model.size(); ++ti) {
      const std::uint64_t numel = model.meta(ti).numel();
      for (std::uint64_t off = 0; off < numel; off += kStreamChunk) {
        const std::size_t n = std::min<std::uint64_t>(kStreamChunk, numel - off);
        model.read(ti, off, std::span(a).first(n));
        task.target.read(ti, off, std::span(b).first(n));
        dist2 += k.sq_dist(a.data(), b.data(), n);
      }
    }
    const double score = 100.0 * std::exp(-dist2 / (task.sigma * task.sigma));
    r.task_scores[task.name] = std::clamp(score, 0.0, 100.0);
  }
  return r;
}

SyntheticEvaluator::SyntheticEvaluator(SyntheticSpec spec) : spec_(std::move(spec)) {
  if (spec_.tasks.empty()) throw_usage("synthetic evaluator has no tasks");
  for (const auto& t : spec_.tasks) {
    if (!(t.sigma > 0.0) || !std::isfinite(t.sigma)) {
      throw_usage(fmt::format("synthetic task '{}' needs a positive sigma", t.name));
    }
  }
}

EvalResult SyntheticEvaluator::evaluate(const ModelView& model) {
  return evaluate_synthetic(model.tensors, spec_, model.id);
}

std::string SyntheticEvaluator::describe() const {
  return fmt::format("synthetic ({} tasks)", spec_.tasks.size());
}

TableEvaluator::TableEvaluator(std::map<std::string, std::map<std::string, double>> scores)
    : scores_(std::move(scores)) {}

EvalResult TableEvaluator::evaluate(const ModelView& model) {
  const auto it = scores_.find(model.id);
  if (it == scores_.end()) throw_evaluator(fmt::format("no scripted scores for model '{}'", model.id));
  EvalResult r;
  r.model_id = model.id;
  r.task_scores = it->second;
  try {
    r.validate();
  } catch (const Error& e) {
    throw_evaluator(e.what());
  }
  return r;
}

std::string TableEvaluator::describe() const { return fmt::format("table ({} models)", scores_.size()); }

TableEvaluator TableEvaluator::from_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id_col = t.require_column("model");
  std::map<std::string, std::map<std::string, double>> scores;
  for (const auto& row : t.rows) {
    auto& s = scores[row[id_col]];
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == id_col) continue;
      s[t.header[c]] = parse_real(row[c], fmt::format("score '{}' of '{}'", t.header[c], row[id_col]));
    }
  }
  return TableEvaluator(std::move(scores));
}

}  // namespace kinmerge
