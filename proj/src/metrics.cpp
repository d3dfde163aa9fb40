// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "kinmerge/error.hpp"

namespace kinmerge {

void EvalResult::validate() const {
  if (task_scores.empty()) throw_data(fmt::format("evaluation of '{}' has no tasks", model_id));
  for (const auto& [task, score] : task_scores) {
    if (!std::isfinite(score) || score < 0.0 || score > 100.0) {
      throw_data(fmt::format("score {} for task '{}' of '{}' is outside [0, 100]", score, task, model_id));
    }
  }
}

void EvalResult::validate(std::span<const std::string> expected) const {
  validate();
  std::vector<std::string> want(expected.begin(), expected.end());
  std::sort(want.begin(), want.end());
  if (want != tasks()) {
    throw_data(fmt::format("evaluation of '{}' reports tasks [{}] but the task group is [{}]", model_id,
                           fmt::join(tasks(), ", "), fmt::join(want, ", ")));
  }
}

std::vector<std::string> EvalResult::tasks() const {
  std::vector<std::string> out;
  out.reserve(task_scores.size());
  for (const auto& kv : task_scores) out.push_back(kv.first);
  return out;
}

double average_task_performance(const EvalResult& r) {
  if (r.task_scores.empty()) throw_data("average task performance of an empty task set");
  double sum = 0.0;
  for (const auto& kv : r.task_scores) sum += kv.second;
  return sum / static_cast<double>(r.task_scores.size());
}

double merge_gain(double merged_atp, std::span<const double> parent_atps) {
  if (parent_atps.empty()) throw_data("merge gain needs at least one parent");
  const double mean = std::accumulate(parent_atps.begin(), parent_atps.end(), 0.0) /
                      static_cast<double>(parent_atps.size());
  return merged_atp - mean;
}

double atpd(const EvalResult& a, const EvalResult& b) {
  if (a.task_scores.empty()) throw_data("ATPD of an empty task set");
  if (a.tasks() != b.tasks()) {
    throw_data(fmt::format("ATPD task sets differ between '{}' and '{}'", a.model_id, b.model_id));
  }
  double sum = 0.0;
  for (const auto& [task, score] : a.task_scores) sum += std::fabs(score - b.task_scores.at(task));
  return sum / static_cast<double>(a.task_scores.size());
}

namespace {

// Continued fraction for I_x(a,b), modified Lentz (Press et al., §6.4).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw_data("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw_data("incomplete beta needs positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw_data("incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (!(dof > 0.0)) throw_data("Student's t needs positive degrees of freedom");
  if (std::isnan(t)) throw_data("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

Correlation pearson_with_p(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw_data("pearson_with_p needs sequences of equal length");
  const std::size_t n = xs.size();
  if (n < 3) throw_data("pearson_with_p needs at least three points");
  const double nd = static_cast<double>(n);
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / nd;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / nd;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(xs) || constant(ys)) throw_data("pearson_with_p is undefined for a constant sequence");

  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double one_minus_r2 = 1.0 - c.r * c.r;
  const double dof = nd - 2.0;
  // with t² = r²·dof/(1−r²), dof/(dof+t²) reduces to 1−r²
  c.p = one_minus_r2 <= 0.0 ? 0.0 : regularized_incomplete_beta(dof / 2.0, 0.5, one_minus_r2);
  return c;
}

}  // namespace kinmerge
