// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>

#include <doctest.h>

#include "helpers.hpp"
#include "kinmerge/dtype.hpp"
#include "kinmerge/simd/kernels.hpp"

using namespace kinmerge;
using simd::KernelTable;

namespace {

// lengths that exercise empty input, partial vectors and several full ones
constexpr std::size_t kLengths[] = {0, 1, 7, 8, 9, 31, 64, 1000, 4099};

std::vector<std::uint16_t> bit_patterns(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint16_t> v(n);
  for (auto& x : v) x = static_cast<std::uint16_t>(rng());
  return v;
}

/// Values spanning normal, subnormal, overflowing and special cases.
std::vector<float> awkward_values(std::size_t n, std::uint64_t seed) {
  auto v = testing::random_values(n, seed, 100.0f);
  const float specials[] = {0.0f,   -0.0f,          1e-40f,   -1e-42f, 65504.0f, 65520.0f, 1e9f,
                            -1e30f, std::nanf(""), INFINITY, 1.00390625f, 6.1e-5f, 5.9604645e-8f};
  for (std::size_t i = 0; i < n; i += 3) v[i] = specials[(i / 3) % std::size(specials)];
  return v;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

bool close(double a, double b, double rel) { return std::fabs(a - b) <= rel * std::max(1.0, std::fabs(a)); }

void check_variant(const KernelTable& ref, const KernelTable& k) {
  for (std::size_t n : kLengths) {
    CAPTURE(n);
    const auto halves = bit_patterns(n, n + 1);
    std::vector<float> r1(n), r2(n);
    ref.widen_f16(halves.data(), r1.data(), n);
    k.widen_f16(halves.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(r1[i], r2[i]));
    ref.widen_bf16(halves.data(), r1.data(), n);
    k.widen_bf16(halves.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(r1[i], r2[i]));

    const auto x = awkward_values(n, n + 2);
    const auto y = testing::random_values(n, n + 3);
    std::vector<std::uint16_t> h1(n), h2(n);
    ref.narrow_f16(x.data(), h1.data(), n);
    k.narrow_f16(x.data(), h2.data(), n);
    CHECK(h1 == h2);
    ref.narrow_bf16(x.data(), h1.data(), n);
    k.narrow_bf16(x.data(), h2.data(), n);
    CHECK(h1 == h2);

    std::vector<double> wide(n);
    for (std::size_t i = 0; i < n; ++i) wide[i] = static_cast<double>(y[i]) / 3.0;
    ref.narrow_f64(wide.data(), r1.data(), n);
    k.narrow_f64(wide.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(r1[i], r2[i]));

    ref.sub(x.data(), y.data(), r1.data(), n);
    k.sub(x.data(), y.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(r1[i], r2[i]));

    ref.combine2(0.3, y.data(), 0.7000001, x.data(), r1.data(), n);
    k.combine2(0.3, y.data(), 0.7000001, x.data(), r2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(r1[i], r2[i]));

    std::vector<double> a1(n, 0.25), a2(n, 0.25);
    ref.accumulate(1.0 / 3.0, y.data(), a1.data(), n);
    k.accumulate(1.0 / 3.0, y.data(), a2.data(), n);
    CHECK(a1 == a2);

    // reductions: same answer up to summation order
    const auto u = testing::random_values(n, n + 4);
    const auto s1 = ref.pair_sums(u.data(), y.data(), n);
    const auto s2 = k.pair_sums(u.data(), y.data(), n);
    CHECK(close(s1.sum_x, s2.sum_x, 1e-12));
    CHECK(close(s1.sum_y, s2.sum_y, 1e-12));
    CHECK(s1.min_x == s2.min_x);
    CHECK(s1.max_x == s2.max_x);
    CHECK(s1.min_y == s2.min_y);
    CHECK(s1.max_y == s2.max_y);

    const auto c1 = ref.pair_centered(u.data(), y.data(), n, 0.1, -0.2);
    const auto c2 = k.pair_centered(u.data(), y.data(), n, 0.1, -0.2);
    CHECK(close(c1.cxx, c2.cxx, 1e-12));
    CHECK(close(c1.cyy, c2.cyy, 1e-12));
    CHECK(close(c1.cxy, c2.cxy, 1e-12));
    CHECK(close(c1.sdd, c2.sdd, 1e-12));

    const auto d1 = ref.dot_norms(u.data(), y.data(), n);
    const auto d2 = k.dot_norms(u.data(), y.data(), n);
    CHECK(close(d1.ab, d2.ab, 1e-12));
    CHECK(close(d1.aa, d2.aa, 1e-12));
    CHECK(close(d1.bb, d2.bb, 1e-12));

    CHECK(close(ref.sq_dist(u.data(), y.data(), n), k.sq_dist(u.data(), y.data(), n), 1e-12));
    CHECK(ref.max_abs_diff(u.data(), y.data(), n) == k.max_abs_diff(u.data(), y.data(), n));
  }
}

}  // namespace

TEST_CASE("scalar conversion kernels match the reference conversions") {
  const auto& s = simd::scalar_kernels();
  const auto halves = bit_patterns(4096, 11);
  std::vector<float> out(halves.size());
  s.widen_bf16(halves.data(), out.data(), halves.size());
  for (std::size_t i = 0; i < halves.size(); ++i) CHECK(same_bits(out[i], bf16_to_f32(halves[i])));
  const auto x = awkward_values(999, 5);
  std::vector<std::uint16_t> h(x.size());
  s.narrow_f16(x.data(), h.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(h[i] == f32_to_f16(x[i]));
}

TEST_CASE("every f16 bit pattern widens identically in all variants") {
  std::vector<std::uint16_t> all(65536);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint16_t>(i);
  std::vector<float> ref(all.size());
  simd::scalar_kernels().widen_f16(all.data(), ref.data(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(same_bits(ref[i], f16_to_f32(all[i])));
  if (const KernelTable* k = simd::avx2_kernels()) {
    std::vector<float> got(all.size());
    k->widen_f16(all.data(), got.data(), all.size());
    for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(same_bits(ref[i], got[i]));
  }
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* k = simd::avx2_kernels();
  if (k == nullptr) {
    MESSAGE("AVX2 variant unavailable on this machine; skipped");
    return;
  }
  check_variant(simd::scalar_kernels(), *k);
}

TEST_CASE("the active table is one of the known variants") {
  const auto name = simd::kernels().name;
  CHECK((name == "scalar" || name == "avx2"));
}
