// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "kinmerge/error.hpp"
#include "kinmerge/merge_ops.hpp"
#include "kinmerge/prng.hpp"

using namespace kinmerge;
using testing::make_vector;
using testing::random_model;

namespace {

bool bit_equal(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a.meta(i).name == b.meta(i).name && a.meta(i).shape == b.meta(i).shape)) return false;
    const auto ra = a.raw(i);
    const auto rb = b.raw(i);
    if (ra.size() != rb.size() || std::memcmp(ra.data(), rb.data(), ra.size()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("linear merge of identical parents is the parent") {
  const TensorMap m = random_model(1);
  const std::vector<TensorMap> parents{m, m, m};
  const std::vector<double> w{0.2, 1.7, 3.0};
  CHECK(bit_equal(merge_linear(parents, w), m));
}

TEST_CASE("linear merge normalizes its weights") {
  const std::vector<TensorMap> parents{make_vector({1, 2}), make_vector({3, 6})};
  const std::vector<double> w{1.0, 3.0};
  CHECK(merge_linear(parents, w).flatten() == std::vector<float>{2.5f, 5.0f});
  const std::vector<double> bad{1.0, -1.0};
  CHECK_THROWS_AS(merge_linear(parents, bad), Error);
  const std::vector<double> short_w{1.0};
  CHECK_THROWS_AS(merge_linear(parents, short_w), Error);
}

TEST_CASE("slerp endpoints reproduce the parents bit for bit") {
  const TensorMap a = random_model(2);
  const TensorMap b = random_model(3);
  CHECK(bit_equal(merge_slerp(a, b, 0.0), a));
  CHECK(bit_equal(merge_slerp(a, b, 1.0), b));
  CHECK_THROWS_AS(merge_slerp(a, b, 1.5), Error);
}

TEST_CASE("slerp is symmetric under swapping parents and t") {
  const TensorMap a = random_model(4);
  const TensorMap b = random_model(5);
  for (double t : {0.1, 0.3, 0.5, 0.9}) {
    const auto x = merge_slerp(a, b, t).flatten();
    const auto y = merge_slerp(b, a, 1.0 - t).flatten();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-6));
  }
}

TEST_CASE("slerp follows the arc between orthogonal vectors") {
  const TensorMap a = make_vector({1, 0});
  const TensorMap b = make_vector({0, 1});
  const auto mid = merge_slerp(a, b, 0.5).flatten();
  CHECK(mid[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(mid[1] == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("slerp falls back to linear interpolation for colinear or zero tensors") {
  const auto colinear = merge_slerp(make_vector({1, 2}), make_vector({2, 4}), 0.25).flatten();
  CHECK(colinear[0] == doctest::Approx(1.25));
  CHECK(colinear[1] == doctest::Approx(2.5));
  const auto zero = merge_slerp(make_vector({0, 0}), make_vector({2, 4}), 0.5).flatten();
  CHECK(zero == std::vector<float>{1, 2});
}

TEST_CASE("ties keep count rounds density times dimension up") {
  CHECK(ties_keep_count(2.0 / 3.0, 3) == 2);
  CHECK(ties_keep_count(0.5, 5) == 3);
  CHECK(ties_keep_count(1.0, 7) == 7);
  CHECK(ties_keep_count(1e-9, 100) == 1);
  CHECK(ties_keep_count(0.1, 10) == 1);
}

TEST_CASE("ties merge on a hand-traced example") {
  const TensorMap base = make_vector({0, 0, 0});
  const std::vector<TensorMap> parents{make_vector({1.0f, -2.0f, 0.1f}), make_vector({0.8f, 3.0f, -0.2f})};
  // trim drops 0.1 and -0.2; both signs elected positive
  const auto out = merge_ties(parents, base, 2.0 / 3.0, 1.0).flatten();
  CHECK(out[0] == doctest::Approx(0.9));
  CHECK(out[1] == 3.0f);
  CHECK(out[2] == 0.0f);
}

TEST_CASE("ties sign election breaks a tie towards positive") {
  const TensorMap base = make_vector({1, 1});
  const std::vector<TensorMap> parents{make_vector({3, 1}), make_vector({-1, 1})};
  const auto out = merge_ties(parents, base, 1.0, 1.0).flatten();
  CHECK(out[0] == 3.0f);
  CHECK(out[1] == 1.0f);
}

TEST_CASE("ties trim is global across tensors") {
  const TensorMap base = testing::make_map({{"a", {0, 0}}, {"b", {0, 0}}});
  const TensorMap tau = testing::make_map({{"a", {5, 0.1f}}, {"b", {0.2f, 4}}});
  const std::vector<TensorMap> parents{tau, tau};
  const auto out = merge_ties(parents, base, 0.5, 1.0).flatten();
  CHECK(out == std::vector<float>{5, 0, 0, 4});
}

TEST_CASE("dare with density one is ties with density one") {
  const TensorMap base = random_model(10);
  const std::vector<TensorMap> parents{random_model(11), random_model(12), random_model(13)};
  CHECK(bit_equal(merge_dare_ties(parents, base, 1.0, 0.7, 99), merge_ties(parents, base, 1.0, 0.7)));
}

TEST_CASE("dare is reproducible per seed and differs across seeds") {
  const TensorMap base = random_model(20);
  const std::vector<TensorMap> parents{random_model(21), random_model(22)};
  CHECK(bit_equal(merge_dare_ties(parents, base, 0.5, 1.0, 7), merge_dare_ties(parents, base, 0.5, 1.0, 7)));
  CHECK_FALSE(bit_equal(merge_dare_ties(parents, base, 0.5, 1.0, 7), merge_dare_ties(parents, base, 0.5, 1.0, 8)));
}

TEST_CASE("dare drop and rescale keeps or rescales each entry") {
  const std::vector<float> tau(4096, 2.0f);
  std::vector<float> out(tau.size());
  dare_drop_rescale(tau, 0, 0.25, 1, 0, out);
  std::size_t kept = 0;
  for (float v : out) {
    CHECK((v == 0.0f || v == 8.0f));
    kept += v != 0.0f;
  }
  CHECK(kept == doctest::Approx(1024).epsilon(0.1));

  // a slice drawn at an offset matches the same coordinates of a full draw
  std::vector<float> slice(100);
  dare_drop_rescale(std::span(tau).subspan(1000, 100), 1000, 0.25, 1, 0, slice);
  CHECK(std::equal(slice.begin(), slice.end(), out.begin() + 1000));
}

TEST_CASE("recipes validate and round-trip through JSON") {
  MergeRecipe r;
  r.op = MergeOperator::dare_ties;
  r.parent_ids = {"a", "b"};
  r.base_id = "base";
  r.params.density = 0.4;
  r.params.weight = 0.9;
  r.params.seed = 17;
  CHECK_NOTHROW(r.validate());
  CHECK(MergeRecipe::from_json(r.to_json()) == r);

  MergeRecipe s;
  s.parent_ids = {"a"};
  CHECK_THROWS_AS(s.validate(), Error);
  s.parent_ids = {"a", "b"};
  s.params.t = 1.2;
  CHECK_THROWS_AS(s.validate(), Error);

  MergeRecipe t = r;
  t.base_id.reset();
  CHECK_THROWS_AS(t.validate(), Error);
  t = r;
  t.params.seed.reset();
  CHECK_THROWS_AS(t.validate(), Error);
  t = r;
  t.params.density = 0.0;
  CHECK_THROWS_AS(t.validate(), Error);

  CHECK_THROWS_AS(MergeRecipe::from_json(nlohmann::json{{"operator", "average"}, {"parents", {"a"}}}), Error);
  CHECK_THROWS_AS(MergeRecipe::from_json(nlohmann::json::array()), Error);
}

TEST_CASE("apply_recipe dispatches and checks its inputs") {
  const TensorMap a = random_model(30);
  const TensorMap b = random_model(31);
  const std::vector<TensorMap> parents{a, b};

  MergeRecipe lin;
  lin.op = MergeOperator::linear;
  lin.parent_ids = {"a", "b"};
  const std::vector<double> eq{1.0, 1.0};
  CHECK(bit_equal(apply_recipe(lin, parents, nullptr), merge_linear(parents, eq)));

  MergeRecipe ties;
  ties.op = MergeOperator::ties;
  ties.parent_ids = {"a", "b"};
  ties.base_id = "base";
  CHECK_THROWS_AS(apply_recipe(ties, parents, nullptr), Error);

  const std::vector<TensorMap> mismatched{a, make_vector({1, 2, 3})};
  MergeRecipe sl;
  sl.parent_ids = {"a", "b"};
  CHECK_THROWS_AS(apply_recipe(sl, mismatched, nullptr), Error);
}

TEST_CASE("generator streams match the documented reference values") {
  CHECK(CounterRng(0, 0).at(0) == 0x48218226ff3cd4bfull);
  CHECK(CounterRng(0, 0).at(2) == 0xb382a305f4414f5eull);
  CHECK(CounterRng(42, 1).at(1) == 0x66723b876cf5a31dull);
  CHECK(CounterRng(42, 1).uniform(0) == 0.35948749316446105);
  SplitMix64 s(20240917);
  CHECK(s.next() == 0xecc0bdd111346b50ull);
  CHECK(s.next() == 0xd42d057ad0753e3dull);
  CHECK(s.next() == 0x36cc4ea32e1c7e53ull);
}
