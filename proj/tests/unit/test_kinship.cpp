// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/kinship.hpp"

using namespace kinmerge;
using testing::make_vector;

namespace {

DeltaVector delta_of(const std::vector<float>& model, const std::vector<float>& base, std::string id = "m") {
  return compute_delta(make_vector(model), make_vector(base), std::move(id), "base");
}

/// Two-pass reference in long double.
double brute_force(const std::vector<float>& x, const std::vector<float>& y, SimMetric m) {
  long double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / x.size(), my = sy / y.size();
  long double cxy = 0, cxx = 0, cyy = 0, dot = 0, xx = 0, yy = 0, dd = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double a = x[i], b = y[i];
    cxy += (a - mx) * (b - my);
    cxx += (a - mx) * (a - mx);
    cyy += (b - my) * (b - my);
    dot += a * b;
    xx += a * a;
    yy += b * b;
    dd += (a - b) * (a - b);
  }
  switch (m) {
    case SimMetric::pcc: return static_cast<double>(cxy / std::sqrt(cxx * cyy));
    case SimMetric::cs: return static_cast<double>(dot / std::sqrt(xx * yy));
    case SimMetric::ed: return static_cast<double>(std::sqrt(dd));
  }
  return 0;
}

}  // namespace

TEST_CASE("metric names parse and order relatedness") {
  CHECK(parse_sim_metric("ed") == SimMetric::ed);
  CHECK_FALSE(parse_sim_metric("l2").has_value());
  CHECK(more_related(SimMetric::pcc, 0.9, 0.1));
  CHECK(more_related(SimMetric::ed, 0.1, 0.9));
  CHECK(self_similarity(SimMetric::ed) == 0.0);
}

TEST_CASE("kinship of small deltas") {
  const std::vector<float> base{1, 1, 1, 1};
  const DeltaVector a = delta_of({2, 3, 1, 1}, base, "a");  // (1, 2, 0, 0)
  const DeltaVector b = delta_of({3, 5, 1, 1}, base, "b");  // (2, 4, 0, 0)
  const DeltaVector c = delta_of({0, -1, 1, 1}, base, "c");  // (-1, -2, 0, 0)
  CHECK(sim_pair(a, b, SimMetric::pcc) == doctest::Approx(1.0));
  CHECK(sim_pair(a, b, SimMetric::cs) == doctest::Approx(1.0));
  CHECK(sim_pair(a, b, SimMetric::ed) == doctest::Approx(std::sqrt(5.0)));
  CHECK(sim_pair(a, c, SimMetric::pcc) == doctest::Approx(-1.0));
  CHECK(sim_pair(a, c, SimMetric::cs) == doctest::Approx(-1.0));
  CHECK(sim_pair(a, a, SimMetric::ed) == 0.0);
}

TEST_CASE("degenerate deltas are rejected with the model ids") {
  const std::vector<float> base{1, 2, 3};
  const DeltaVector constant = delta_of({2, 3, 4}, base, "shifted");
  const DeltaVector zero = delta_of({1, 2, 3}, base, "same");
  const DeltaVector ok = delta_of({1, 5, 3}, base, "ok");
  CHECK_THROWS_WITH_AS(sim_pair(constant, ok, SimMetric::pcc), doctest::Contains("shifted"), Error);
  CHECK_NOTHROW(sim_pair(constant, ok, SimMetric::cs));
  CHECK_THROWS_AS(sim_pair(zero, ok, SimMetric::cs), Error);
  CHECK(sim_pair(zero, ok, SimMetric::ed) == doctest::Approx(3.0));
}

TEST_CASE("deltas against different bases are not comparable") {
  const DeltaVector a = compute_delta(make_vector({1, 2}), make_vector({0, 0}), "a", "base1");
  const DeltaVector b = compute_delta(make_vector({2, 1}), make_vector({0, 0}), "b", "base2");
  CHECK_THROWS_AS(sim_pair(a, b, SimMetric::pcc), Error);
  const DeltaVector c = compute_delta(make_vector({2, 1, 0}), make_vector({0, 0, 0}), "c", "base1");
  CHECK_THROWS_AS(sim_pair(a, c, SimMetric::pcc), Error);
}

TEST_CASE("streaming moments match a brute-force pass across chunks and tensors") {
  const std::size_t n1 = kStreamChunk + 123, n2 = 2 * kStreamChunk + 5;
  const auto base = testing::make_map({{"p", testing::random_values(n1, 1)}, {"q", testing::random_values(n2, 2)}});
  auto shifted = [&](std::uint64_t seed, float offset) {
    auto p = testing::random_values(n1, seed);
    auto q = testing::random_values(n2, seed + 1);
    const auto bp = base.read_all(0), bq = base.read_all(1);
    for (std::size_t i = 0; i < n1; ++i) p[i] = bp[i] + 0.3f * p[i] + offset;
    for (std::size_t i = 0; i < n2; ++i) q[i] = bq[i] + 0.1f * q[i] - offset;
    return testing::make_map({{"p", p}, {"q", q}});
  };
  const DeltaVector a = compute_delta(shifted(10, 0.5f), base, "a", "base");
  const DeltaVector b = compute_delta(shifted(20, 0.2f), base, "b", "base");
  const auto x = a.flatten(), y = b.flatten();
  for (SimMetric m : {SimMetric::pcc, SimMetric::cs, SimMetric::ed}) {
    CAPTURE(to_string(m));
    CHECK(sim_pair(a, b, m) == doctest::Approx(brute_force(x, y, m)).epsilon(1e-9));
    CHECK(sim_pair(a.materialize(), b.materialize(), m) == doctest::Approx(sim_pair(a, b, m)).epsilon(1e-12));
  }
}

TEST_CASE("group kinship is the mean over pairs") {
  const std::vector<float> base(16, 0.0f);
  std::vector<DeltaVector> ds;
  for (int i = 0; i < 4; ++i) ds.push_back(delta_of(testing::random_values(16, 40 + i), base, "m" + std::to_string(i)));
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) sum += sim_pair(ds[i], ds[j], SimMetric::cs);
  }
  CHECK(kinship_group(ds, SimMetric::cs) == doctest::Approx(sum / 6.0).epsilon(1e-12));
  CHECK_THROWS_AS(kinship_group(std::span(ds).first(1), SimMetric::cs), Error);
}

TEST_CASE("kinship matrix is symmetric with self-similarity on the diagonal") {
  const auto base = testing::random_model(1);
  std::vector<std::string> ids{"x", "y", "z"};
  std::vector<TensorMap> models{testing::random_model(2), testing::random_model(3), testing::random_model(4)};
  const KinshipMatrix km = kinship_matrix(ids, models, base, "base", SimMetric::pcc);
  REQUIRE(km.values.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(km.values[i][i] == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(km.values[i][j] == km.values[j][i]);
  }
  CHECK(km.values[0][1] == sim_pair(compute_delta(models[0], base, "x", "base"),
                                    compute_delta(models[1], base, "y", "base"), SimMetric::pcc));
  const std::string csv = km.to_csv();
  CHECK(csv.rfind("model,x,y,z\n", 0) == 0);
  CHECK(km.to_json().at("models").size() == 3);
}
