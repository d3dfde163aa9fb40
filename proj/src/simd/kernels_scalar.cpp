// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "kinmerge/dtype.hpp"
#include "kinmerge/simd/kernels.hpp"

namespace kinmerge::simd {
namespace {

void widen_f16(const std::uint16_t* in, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f16_to_f32(in[i]);
}

void widen_bf16(const std::uint16_t* in, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = bf16_to_f32(in[i]);
}

void narrow_f16(const float* in, std::uint16_t* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f32_to_f16(in[i]);
}

void narrow_bf16(const float* in, std::uint16_t* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f32_to_bf16(in[i]);
}

void narrow_f64(const double* in, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(in[i]);
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void combine2(double ca, const float* a, double cb, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double l = ca * static_cast<double>(a[i]);
    const double r = cb * static_cast<double>(b[i]);
    out[i] = static_cast<float>(l + r);
  }
}

void accumulate(double w, const float* x, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] = acc[i] + w * static_cast<double>(x[i]);
}

PairSums pair_sums(const float* x, const float* y, std::size_t n) {
  PairSums s;
  for (std::size_t i = 0; i < n; ++i) {
    s.sum_x += x[i];
    s.sum_y += y[i];
    s.min_x = std::min(s.min_x, x[i]);
    s.max_x = std::max(s.max_x, x[i]);
    s.min_y = std::min(s.min_y, y[i]);
    s.max_y = std::max(s.max_y, y[i]);
  }
  return s;
}

PairCentered pair_centered(const float* x, const float* y, std::size_t n, double mean_x,
                           double mean_y) {
  PairCentered c;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(x[i]) - mean_x;
    const double dy = static_cast<double>(y[i]) - mean_y;
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    c.cxx += dx * dx;
    c.cyy += dy * dy;
    c.cxy += dx * dy;
    c.sdd += d * d;
  }
  return c;
}

DotNorms dot_norms(const float* a, const float* b, std::size_t n) {
  DotNorms r;
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a[i];
    const double bv = b[i];
    r.ab += av * bv;
    r.aa += av * av;
    r.bb += bv * bv;
  }
  return r;
}

double sq_dist(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

float max_abs_diff(const float* a, const float* b, std::size_t n) {
  float m = 0.0f;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

constexpr KernelTable kScalar{
    "scalar",  widen_f16, widen_bf16,    narrow_f16, narrow_bf16, narrow_f64, sub,
    combine2,  accumulate, pair_sums, pair_centered, dot_norms, sq_dist, max_abs_diff,
};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace kinmerge::simd
