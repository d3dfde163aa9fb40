// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/merge_ops.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kinmerge/error.hpp"
#include "kinmerge/prng.hpp"
#include "kinmerge/simd/kernels.hpp"

namespace kinmerge {

std::string_view to_string(MergeOperator op) noexcept {
  switch (op) {
    case MergeOperator::linear: return "linear";
    case MergeOperator::slerp: return "slerp";
    case MergeOperator::ties: return "ties";
    case MergeOperator::dare_ties: return "dare_ties";
  }
  return "?";
}

std::optional<MergeOperator> parse_merge_operator(std::string_view s) noexcept {
  if (s == "linear") return MergeOperator::linear;
  if (s == "slerp") return MergeOperator::slerp;
  if (s == "ties") return MergeOperator::ties;
  if (s == "dare_ties") return MergeOperator::dare_ties;
  return std::nullopt;
}

void MergeRecipe::validate() const {
  if (parent_ids.empty()) throw_data("recipe has no parents");
  switch (op) {
    case MergeOperator::linear:
      if (!params.weights.empty() && params.weights.size() != parent_ids.size()) {
        throw_data(fmt::format("linear recipe has {} weights for {} parents", params.weights.size(),
                               parent_ids.size()));
      }
      for (double w : params.weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw_data("linear weights must be positive");
      }
      break;
    case MergeOperator::slerp:
      if (parent_ids.size() != 2) throw_data("slerp needs exactly two parents");
      if (!(params.t >= 0.0 && params.t <= 1.0)) throw_data("slerp t must lie in [0, 1]");
      break;
    case MergeOperator::ties:
    case MergeOperator::dare_ties:
      if (parent_ids.size() < 2) throw_data(fmt::format("{} needs at least two parents", to_string(op)));
      if (!base_id) throw_data(fmt::format("{} needs a base model", to_string(op)));
      if (!(params.density > 0.0 && params.density <= 1.0)) {
        throw_data("density must lie in (0, 1]");
      }
      if (!std::isfinite(params.weight)) throw_data("weight must be finite");
      if (op == MergeOperator::dare_ties && !params.seed) throw_data("dare_ties needs a seed");
      break;
  }
}

nlohmann::json MergeRecipe::to_json() const {
  nlohmann::json p = nlohmann::json::object();
  switch (op) {
    case MergeOperator::linear:
      if (!params.weights.empty()) p["weights"] = params.weights;
      break;
    case MergeOperator::slerp:
      p["t"] = params.t;
      break;
    case MergeOperator::dare_ties:
      if (params.seed) p["seed"] = *params.seed;
      [[fallthrough]];
    case MergeOperator::ties:
      p["density"] = params.density;
      p["weight"] = params.weight;
      break;
  }
  nlohmann::json j = {{"operator", to_string(op)}, {"parents", parent_ids}, {"params", p}};
  if (base_id) j["base"] = *base_id;
  return j;
}

MergeRecipe MergeRecipe::from_json(const nlohmann::json& j) {
  MergeRecipe r;
  try {
    const auto op = parse_merge_operator(j.at("operator").get<std::string>());
    if (!op) throw_data("unknown merge operator '" + j.at("operator").get<std::string>() + "'");
    r.op = *op;
    if (j.contains("parents")) r.parent_ids = j.at("parents").get<std::vector<std::string>>();
    if (j.contains("base") && !j.at("base").is_null()) r.base_id = j.at("base").get<std::string>();
    if (j.contains("params")) {
      const auto& p = j.at("params");
      if (p.contains("weights")) r.params.weights = p.at("weights").get<std::vector<double>>();
      if (p.contains("t")) r.params.t = p.at("t").get<double>();
      if (p.contains("density")) r.params.density = p.at("density").get<double>();
      if (p.contains("weight")) r.params.weight = p.at("weight").get<double>();
      if (p.contains("seed")) r.params.seed = p.at("seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw_data(std::string("malformed recipe: ") + e.what());
  }
  return r;
}

namespace {

void require_compatible(std::span<const TensorMap> parents, const TensorMap* base) {
  std::vector<TensorMap> all(parents.begin(), parents.end());
  if (base != nullptr) all.push_back(*base);
  if (all.size() >= 2) check_compatible(all);
}

/// Copies the layout of `like` and fills each tensor from `fill(index, out)`.
template <typename Fill>
TensorMap build_like(const TensorMap& like, Fill&& fill) {
  TensorMapBuilder b;
  std::vector<float> buf;
  for (std::size_t i = 0; i < like.size(); ++i) {
    const TensorMeta& m = like.meta(i);
    buf.assign(m.numel(), 0.0f);
    fill(i, std::span<float>(buf));
    b.add(m.name, m.element_type, m.shape, buf);
  }
  return std::move(b).build();
}

}  // namespace

TensorMap merge_linear(std::span<const TensorMap> parents, std::span<const double> weights) {
  if (parents.empty()) throw_data("linear merge needs at least one parent");
  if (weights.size() != parents.size()) {
    throw_data(fmt::format("linear merge has {} weights for {} parents", weights.size(), parents.size()));
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw_data("linear weights must be positive");
  }
  if (parents.size() >= 2) check_compatible(parents);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const auto& k = simd::kernels();

  std::vector<double> acc;
  std::vector<float> chunk;
  return build_like(parents[0], [&](std::size_t ti, std::span<float> out) {
    for (std::size_t off = 0; off < out.size(); off += kStreamChunk) {
      const std::size_t n = std::min(kStreamChunk, out.size() - off);
      acc.assign(n, 0.0);
      chunk.resize(n);
      for (std::size_t p = 0; p < parents.size(); ++p) {
        parents[p].read(ti, off, chunk);
        k.accumulate(weights[p] / total, chunk.data(), acc.data(), n);
      }
      k.narrow_f64(acc.data(), out.data() + off, n);
    }
  });
}

TensorMap merge_slerp(const TensorMap& a, const TensorMap& b, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw_data("slerp t must lie in [0, 1]");
  check_compatible(a, b);
  if (t == 0.0 || t == 1.0) {
    const TensorMap& src = t == 0.0 ? a : b;
    TensorMapBuilder builder;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const TensorMeta& m = src.meta(i);
      builder.add_raw(m.name, m.element_type, m.shape, src.raw(i));
    }
    return std::move(builder).build();
  }

  constexpr double kColinear = 1e-8;
  const auto& k = simd::kernels();
  std::vector<float> ca(kStreamChunk), cb(kStreamChunk);
  return build_like(a, [&](std::size_t ti, std::span<float> out) {
    const std::size_t numel = out.size();
    simd::DotNorms dn;
    for (std::size_t off = 0; off < numel; off += kStreamChunk) {
      const std::size_t n = std::min(kStreamChunk, numel - off);
      a.read(ti, off, std::span(ca).first(n));
      b.read(ti, off, std::span(cb).first(n));
      const auto part = k.dot_norms(ca.data(), cb.data(), n);
      dn.ab += part.ab;
      dn.aa += part.aa;
      dn.bb += part.bb;
    }
    double c0 = 1.0 - t;
    double c1 = t;
    if (dn.aa > 0.0 && dn.bb > 0.0) {
      const double cosine = std::clamp(dn.ab / (std::sqrt(dn.aa) * std::sqrt(dn.bb)), -1.0, 1.0);
      const double omega = std::acos(cosine);
      const double sin_omega = std::sin(omega);
      if (std::fabs(sin_omega) >= kColinear) {
        c0 = std::sin((1.0 - t) * omega) / sin_omega;
        c1 = std::sin(t * omega) / sin_omega;
      }
    }
    for (std::size_t off = 0; off < numel; off += kStreamChunk) {
      const std::size_t n = std::min(kStreamChunk, numel - off);
      a.read(ti, off, std::span(ca).first(n));
      b.read(ti, off, std::span(cb).first(n));
      k.combine2(c0, ca.data(), c1, cb.data(), out.data() + off, n);
    }
  });
}

std::uint64_t ties_keep_count(double density, std::uint64_t d) {
  if (d == 0) return 0;
  // tolerate representation error in density·d (e.g. (2/3)·3)
  const double raw = density * static_cast<double>(d);
  auto k = static_cast<std::uint64_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::uint64_t>(k, 1, d);
}

namespace {

inline std::uint32_t magnitude_key(float v) noexcept {
  return std::bit_cast<std::uint32_t>(v) & 0x7fffffffu;
}

/// Streams one parent's task vector θ_p − θ_base, chunk by chunk, in
/// canonical order.
class TaskVectorStream {
 public:
  TaskVectorStream(const TensorMap& parent, const TensorMap& base) : parent_(parent), base_(base) {}

  template <typename Visit>
  void for_each_chunk(Visit&& visit) const {
    const auto& k = simd::kernels();
    std::vector<float> p(kStreamChunk), b(kStreamChunk), tau(kStreamChunk);
    for (std::size_t ti = 0; ti < parent_.size(); ++ti) {
      const std::uint64_t numel = parent_.meta(ti).numel();
      for (std::uint64_t off = 0; off < numel; off += kStreamChunk) {
        const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kStreamChunk, numel - off));
        parent_.read(ti, off, std::span(p).first(n));
        base_.read(ti, off, std::span(b).first(n));
        k.sub(p.data(), b.data(), tau.data(), n);
        visit(std::span<const float>(tau.data(), n));
      }
    }
  }

  void read(std::size_t ti, std::uint64_t off, std::span<float> out, std::vector<float>& scratch) const {
    scratch.resize(out.size());
    parent_.read(ti, off, out);
    base_.read(ti, off, scratch);
    simd::kernels().sub(out.data(), scratch.data(), out.data(), out.size());
  }

 private:
  const TensorMap& parent_;
  const TensorMap& base_;
};

/// Exact selection of the top-k magnitudes: entries with key above `key` are
/// kept, plus the first `ties_to_keep` entries (in canonical order) whose key
/// equals `key`.
struct TrimRule {
  bool keep_all = true;
  std::uint32_t key = 0;
  std::uint64_t ties_to_keep = 0;
};

/// Two-pass radix select over the 31-bit magnitude keys; memory is two
/// 65536-entry histograms regardless of model size.
TrimRule find_trim_rule(const TaskVectorStream& stream, std::uint64_t d, std::uint64_t keep) {
  if (keep >= d) return {};
  std::vector<std::uint64_t> hist(1u << 16, 0);
  stream.for_each_chunk([&](std::span<const float> tau) {
    for (float v : tau) ++hist[magnitude_key(v) >> 16];
  });
  std::uint64_t above = 0;
  std::uint32_t bucket = 0;
  for (std::int64_t h = (1 << 16) - 1; h >= 0; --h) {
    if (above + hist[static_cast<std::size_t>(h)] >= keep) {
      bucket = static_cast<std::uint32_t>(h);
      break;
    }
    above += hist[static_cast<std::size_t>(h)];
  }
  std::fill(hist.begin(), hist.end(), 0);
  stream.for_each_chunk([&](std::span<const float> tau) {
    for (float v : tau) {
      const std::uint32_t key = magnitude_key(v);
      if ((key >> 16) == bucket) ++hist[key & 0xffffu];
    }
  });
  const std::uint64_t need = keep - above;
  std::uint64_t above_in_bucket = 0;
  for (std::int64_t l = (1 << 16) - 1; l >= 0; --l) {
    const std::uint64_t c = hist[static_cast<std::size_t>(l)];
    if (above_in_bucket + c >= need) {
      return {false, (bucket << 16) | static_cast<std::uint32_t>(l), need - above_in_bucket};
    }
    above_in_bucket += c;
  }
  throw_data("internal error: trim selection did not converge");
}

/// Applies a TrimRule in canonical order, tracking how many threshold ties
/// have been admitted so far.
class Trimmer {
 public:
  explicit Trimmer(TrimRule rule) : rule_(rule) {}

  void apply(std::span<float> tau) {
    if (rule_.keep_all) return;
    for (float& v : tau) {
      const std::uint32_t key = magnitude_key(v);
      if (key > rule_.key) continue;
      if (key == rule_.key && ties_seen_ < rule_.ties_to_keep) {
        ++ties_seen_;
        continue;
      }
      v = 0.0f;
    }
  }

 private:
  TrimRule rule_;
  std::uint64_t ties_seen_ = 0;
};

/// Per-coordinate sign election and disjoint mean over prepared task
/// vectors, written as base + weight·merged.
void elect_and_merge(std::span<const std::vector<float>> taus, std::span<const float> base,
                     double weight, std::span<float> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double pos = 0.0;
    double neg = 0.0;
    for (const auto& t : taus) {
      const double v = t[i];
      if (v > 0.0) pos += v;
      else if (v < 0.0) neg -= v;
    }
    const bool positive = pos >= neg;
    double sum = 0.0;
    std::uint32_t count = 0;
    for (const auto& t : taus) {
      const float v = t[i];
      if (positive ? v > 0.0f : v < 0.0f) {
        sum += v;
        ++count;
      }
    }
    const double merged = count == 0 ? 0.0 : sum / count;
    out[i] = static_cast<float>(static_cast<double>(base[i]) + weight * merged);
  }
}

enum class TaskVectorPrep { trim, dare };

TensorMap ties_family(std::span<const TensorMap> parents, const TensorMap& base, double density,
                      double weight, TaskVectorPrep prep, std::uint64_t seed) {
  if (parents.size() < 2) throw_data("TIES merging needs at least two parents");
  if (!(density > 0.0 && density <= 1.0)) throw_data("density must lie in (0, 1]");
  if (!std::isfinite(weight)) throw_data("weight must be finite");
  require_compatible(parents, &base);

  std::vector<TaskVectorStream> streams;
  for (const auto& p : parents) streams.emplace_back(p, base);

  std::vector<Trimmer> trimmers;
  if (prep == TaskVectorPrep::trim) {
    const std::uint64_t d = base.parameter_count();
    const std::uint64_t keep = ties_keep_count(density, d);
    for (const auto& s : streams) trimmers.emplace_back(find_trim_rule(s, d, keep));
  }

  std::vector<std::vector<float>> taus(parents.size(), std::vector<float>(kStreamChunk));
  std::vector<float> scratch, base_chunk(kStreamChunk);
  std::uint64_t flat_offset = 0;
  return build_like(base, [&](std::size_t ti, std::span<float> out) {
    for (std::size_t off = 0; off < out.size(); off += kStreamChunk) {
      const std::size_t n = std::min(kStreamChunk, out.size() - off);
      for (std::size_t p = 0; p < parents.size(); ++p) {
        taus[p].resize(n);
        streams[p].read(ti, off, taus[p], scratch);
        if (prep == TaskVectorPrep::trim) {
          trimmers[p].apply(taus[p]);
        } else {
          dare_drop_rescale(taus[p], flat_offset + off, density, seed, p, taus[p]);
        }
      }
      base_chunk.resize(n);
      base.read(ti, off, base_chunk);
      elect_and_merge(taus, base_chunk, weight, out.subspan(off, n));
    }
    flat_offset += out.size();
  });
}

}  // namespace

void dare_drop_rescale(std::span<const float> tau, std::uint64_t first_index, double density,
                       std::uint64_t seed, std::uint64_t stream, std::span<float> out) {
  if (!(density > 0.0 && density <= 1.0)) throw_data("density must lie in (0, 1]");
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const bool keep = rng.uniform(first_index + i) < density;
    out[i] = keep ? static_cast<float>(static_cast<double>(tau[i]) / density) : 0.0f;
  }
}

TensorMap merge_ties(std::span<const TensorMap> parents, const TensorMap& base, double density,
                     double weight) {
  return ties_family(parents, base, density, weight, TaskVectorPrep::trim, 0);
}

TensorMap merge_dare_ties(std::span<const TensorMap> parents, const TensorMap& base,
                          double density, double weight, std::uint64_t seed) {
  return ties_family(parents, base, density, weight, TaskVectorPrep::dare, seed);
}

TensorMap apply_recipe(const MergeRecipe& recipe, std::span<const TensorMap> parents,
                       const TensorMap* base) {
  recipe.validate();
  if (parents.size() != recipe.parent_ids.size()) {
    throw_data(fmt::format("recipe names {} parents but {} were supplied", recipe.parent_ids.size(),
                           parents.size()));
  }
  const auto& p = recipe.params;
  switch (recipe.op) {
    case MergeOperator::linear: {
      std::vector<double> w = p.weights;
      if (w.empty()) w.assign(parents.size(), 1.0);
      return merge_linear(parents, w);
    }
    case MergeOperator::slerp:
      return merge_slerp(parents[0], parents[1], p.t);
    case MergeOperator::ties:
    case MergeOperator::dare_ties:
      if (base == nullptr) throw_data(fmt::format("{} needs a base model", to_string(recipe.op)));
      return recipe.op == MergeOperator::ties
                 ? merge_ties(parents, *base, p.density, p.weight)
                 : merge_dare_ties(parents, *base, p.density, p.weight, *p.seed);
  }
  throw_data("unknown merge operator");
}

}  // namespace kinmerge
