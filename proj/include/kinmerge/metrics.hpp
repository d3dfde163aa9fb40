// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace kinmerge {

/// Benchmark scores of one model over the configured task group.
struct EvalResult {
  std::string model_id;
  std::map<std::string, double> task_scores;
  std::string timestamp;

  /// Throws a data error unless every score is finite and within [0, 100].
  void validate() const;
  /// Additionally requires the task set to equal `tasks` exactly.
  void validate(std::span<const std::string> tasks) const;

  std::vector<std::string> tasks() const;
};

double average_task_performance(const EvalResult& r);

/// ATP of the merged model minus the unweighted mean ATP of its parents.
double merge_gain(double merged_atp, std::span<const double> parent_atps);

/// Mean absolute per-task score difference; the task sets must match.
double atpd(const EvalResult& a, const EvalResult& b);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Sample Pearson r with the two-sided p-value of t = r·√((n−2)/(1−r²))
/// under Student's t with n−2 degrees of freedom.
Correlation pearson_with_p(std::span<const double> xs, std::span<const double> ys);

/// I_x(a, b), evaluated with a Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| ≥ |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);

}  // namespace kinmerge
