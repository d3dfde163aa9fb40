// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/kinship.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kinmerge/error.hpp"
#include "kinmerge/parallel.hpp"
#include "kinmerge/simd/kernels.hpp"

namespace kinmerge {

std::string_view to_string(SimMetric m) noexcept {
  switch (m) {
    case SimMetric::pcc: return "pcc";
    case SimMetric::cs: return "cs";
    case SimMetric::ed: return "ed";
  }
  return "?";
}

std::optional<SimMetric> parse_sim_metric(std::string_view s) noexcept {
  if (s == "pcc") return SimMetric::pcc;
  if (s == "cs") return SimMetric::cs;
  if (s == "ed") return SimMetric::ed;
  return std::nullopt;
}

bool more_related(SimMetric m, double a, double b) noexcept {
  return m == SimMetric::ed ? a < b : a > b;
}

double self_similarity(SimMetric m) noexcept { return m == SimMetric::ed ? 0.0 : 1.0; }

DeltaVector::DeltaVector(std::string model_id, std::string base_id, TensorMap model,
                         std::optional<TensorMap> base)
    : model_id_(std::move(model_id)),
      base_id_(std::move(base_id)),
      model_(std::move(model)),
      base_(std::move(base)) {
  if (base_) check_compatible(model_, *base_);
}

void DeltaVector::read(std::size_t index, std::uint64_t offset, std::span<float> out) const {
  model_.read(index, offset, out);
  if (!base_) return;
  thread_local std::vector<float> scratch;
  scratch.resize(out.size());
  base_->read(index, offset, scratch);
  simd::kernels().sub(out.data(), scratch.data(), out.data(), out.size());
}

DeltaVector DeltaVector::materialize() const {
  TensorMapBuilder b;
  std::vector<float> buf;
  for (std::size_t i = 0; i < model_.size(); ++i) {
    const TensorMeta& m = model_.meta(i);
    buf.resize(m.numel());
    for (std::uint64_t off = 0; off < buf.size(); off += kStreamChunk) {
      const std::size_t n = std::min<std::uint64_t>(kStreamChunk, buf.size() - off);
      read(i, off, std::span(buf).subspan(off, n));
    }
    b.add(m.name, ElementType::f32, m.shape, buf);
  }
  return DeltaVector(model_id_, base_id_, std::move(b).build(), std::nullopt);
}

std::vector<float> DeltaVector::flatten() const {
  std::vector<float> out(dimension());
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < model_.size(); ++i) {
    const std::uint64_t numel = model_.meta(i).numel();
    read(i, 0, std::span(out).subspan(pos, numel));
    pos += numel;
  }
  return out;
}

DeltaVector compute_delta(const TensorMap& model, const TensorMap& base, std::string model_id,
                          std::string base_id) {
  return DeltaVector(std::move(model_id), std::move(base_id), model, base);
}

void PairMoments::merge(const PairMoments& o) noexcept {
  if (o.n == 0) return;
  min_x = std::min(min_x, o.min_x);
  max_x = std::max(max_x, o.max_x);
  min_y = std::min(min_y, o.min_y);
  max_y = std::max(max_y, o.max_y);
  sdd += o.sdd;
  if (n == 0) {
    n = o.n;
    mean_x = o.mean_x;
    mean_y = o.mean_y;
    cxx = o.cxx;
    cyy = o.cyy;
    cxy = o.cxy;
    return;
  }
  // Chan et al. pairwise update
  const double na = static_cast<double>(n);
  const double nb = static_cast<double>(o.n);
  const double total = na + nb;
  const double dx = o.mean_x - mean_x;
  const double dy = o.mean_y - mean_y;
  const double f = na * nb / total;
  cxx += o.cxx + dx * dx * f;
  cyy += o.cyy + dy * dy * f;
  cxy += o.cxy + dx * dy * f;
  mean_x += dx * nb / total;
  mean_y += dy * nb / total;
  n += o.n;
}

namespace {

PairMoments chunk_moments(const float* x, const float* y, std::size_t n) {
  const auto& k = simd::kernels();
  const simd::PairSums s = k.pair_sums(x, y, n);
  PairMoments m;
  m.n = n;
  m.mean_x = s.sum_x / static_cast<double>(n);
  m.mean_y = s.sum_y / static_cast<double>(n);
  m.min_x = s.min_x;
  m.max_x = s.max_x;
  m.min_y = s.min_y;
  m.max_y = s.max_y;
  const simd::PairCentered c = k.pair_centered(x, y, n, m.mean_x, m.mean_y);
  m.cxx = c.cxx;
  m.cyy = c.cyy;
  m.cxy = c.cxy;
  m.sdd = c.sdd;
  return m;
}

PairMoments tensor_moments(const DeltaVector& a, const DeltaVector& b, std::size_t ti) {
  thread_local std::vector<float> x, y;
  x.resize(kStreamChunk);
  y.resize(kStreamChunk);
  PairMoments acc;
  const std::uint64_t numel = a.layout().meta(ti).numel();
  for (std::uint64_t off = 0; off < numel; off += kStreamChunk) {
    const std::size_t n = std::min<std::uint64_t>(kStreamChunk, numel - off);
    a.read(ti, off, std::span(x).first(n));
    b.read(ti, off, std::span(y).first(n));
    acc.merge(chunk_moments(x.data(), y.data(), n));
  }
  return acc;
}

constexpr std::uint64_t kParallelThreshold = std::uint64_t{1} << 20;

}  // namespace

PairMoments pair_moments(const DeltaVector& a, const DeltaVector& b) {
  if (!a.base_id().empty() && !b.base_id().empty() && a.base_id() != b.base_id()) {
    throw_data(fmt::format("deltas of '{}' and '{}' are relative to different bases ('{}' vs '{}')",
                           a.model_id(), b.model_id(), a.base_id(), b.base_id()));
  }
  check_compatible(a.layout(), b.layout());
  const std::size_t tensors = a.layout().size();
  std::vector<PairMoments> per_tensor(tensors);
  const std::size_t workers =
      a.dimension() >= kParallelThreshold ? default_workers() : std::size_t{1};
  parallel_for(tensors, workers, [&](std::size_t ti) { per_tensor[ti] = tensor_moments(a, b, ti); });
  PairMoments total;
  for (const auto& m : per_tensor) total.merge(m);
  return total;
}

double similarity_from_moments(const PairMoments& m, SimMetric metric) {
  if (m.n == 0) throw_data("kinship of empty deltas is undefined");
  double v = 0.0;
  switch (metric) {
    case SimMetric::pcc:
      if (m.min_x == m.max_x || m.min_y == m.max_y) {
        throw_data("pcc is undefined for a constant delta (zero variance)");
      }
      v = std::clamp(m.cxy / std::sqrt(m.cxx * m.cyy), -1.0, 1.0);
      break;
    case SimMetric::cs: {
      if ((m.min_x == 0.0f && m.max_x == 0.0f) || (m.min_y == 0.0f && m.max_y == 0.0f)) {
        throw_data("cs is undefined for a zero-norm delta");
      }
      const double n = static_cast<double>(m.n);
      const double dot = m.cxy + n * m.mean_x * m.mean_y;
      const double xx = m.cxx + n * m.mean_x * m.mean_x;
      const double yy = m.cyy + n * m.mean_y * m.mean_y;
      v = std::clamp(dot / std::sqrt(xx * yy), -1.0, 1.0);
      break;
    }
    case SimMetric::ed:
      v = std::sqrt(m.sdd);
      break;
  }
  if (!std::isfinite(v)) throw_data(fmt::format("{} kinship is not finite", to_string(metric)));
  return v;
}

double sim_pair(const DeltaVector& a, const DeltaVector& b, SimMetric metric) {
  try {
    return similarity_from_moments(pair_moments(a, b), metric);
  } catch (const Error& e) {
    if (a.model_id().empty() && b.model_id().empty()) throw;
    throw Error(e.kind(), fmt::format("{} ('{}', '{}')", e.what(), a.model_id(), b.model_id()));
  }
}

double kinship_group(std::span<const DeltaVector> deltas, SimMetric metric) {
  if (deltas.size() < 2) throw_data("kinship of a group needs at least two models");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    for (std::size_t j = i + 1; j < deltas.size(); ++j) {
      sum += sim_pair(deltas[i], deltas[j], metric);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

KinshipMatrix kinship_matrix(std::span<const DeltaVector> deltas, SimMetric metric) {
  const std::size_t n = deltas.size();
  KinshipMatrix km;
  km.metric = metric;
  km.values.assign(n, std::vector<double>(n, self_similarity(metric)));
  for (const auto& d : deltas) km.model_ids.push_back(d.model_id());

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<double> out(pairs.size());
  parallel_for(pairs.size(), default_workers(), [&](std::size_t p) {
    out[p] = sim_pair(deltas[pairs[p].first], deltas[pairs[p].second], metric);
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    km.values[pairs[p].first][pairs[p].second] = out[p];
    km.values[pairs[p].second][pairs[p].first] = out[p];
  }
  return km;
}

KinshipMatrix kinship_matrix(std::span<const std::string> ids, std::span<const TensorMap> models,
                             const TensorMap& base, std::string_view base_id, SimMetric metric) {
  if (ids.size() != models.size()) throw_usage("kinship matrix needs one id per model");
  // keep every delta resident when that stays modest; otherwise stream
  constexpr std::uint64_t kMaterializeBudget = std::uint64_t{1} << 28;  // floats
  const bool resident = base.parameter_count() * models.size() <= kMaterializeBudget;
  std::vector<DeltaVector> deltas;
  deltas.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    DeltaVector d = compute_delta(models[i], base, ids[i], std::string(base_id));
    deltas.push_back(resident ? d.materialize() : std::move(d));
  }
  return kinship_matrix(deltas, metric);
}

nlohmann::json KinshipMatrix::to_json() const {
  return {{"metric", to_string(metric)}, {"models", model_ids}, {"values", values}};
}

std::string KinshipMatrix::to_csv() const {
  std::ostringstream os;
  os << "model";
  for (const auto& id : model_ids) os << ',' << id;
  os << '\n';
  for (std::size_t i = 0; i < model_ids.size(); ++i) {
    os << model_ids[i];
    for (double v : values[i]) os << ',' << fmt::format("{:.17g}", v);
    os << '\n';
  }
  return os.str();
}

}  // namespace kinmerge
