// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma -mf16c; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kinmerge/dtype.hpp"
#include "kinmerge/simd/kernels.hpp"

namespace kinmerge::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline float hmin(__m256 v) {
  alignas(32) float t[8];
  _mm256_store_ps(t, v);
  return *std::min_element(t, t + 8);
}

inline float hmax(__m256 v) {
  alignas(32) float t[8];
  _mm256_store_ps(t, v);
  return *std::max_element(t, t + 8);
}

void widen_f16(const std::uint16_t* in, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in + i));
    _mm256_storeu_ps(out + i, _mm256_cvtph_ps(h));
  }
  for (; i < n; ++i) out[i] = f16_to_f32(in[i]);
}

void widen_bf16(const std::uint16_t* in, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in + i));
    const __m256i w = _mm256_slli_epi32(_mm256_cvtepu16_epi32(h), 16);
    _mm256_storeu_ps(out + i, _mm256_castsi256_ps(w));
  }
  for (; i < n; ++i) out[i] = bf16_to_f32(in[i]);
}

void narrow_f16(const float* in, std::uint16_t* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm256_cvtps_ph(_mm256_loadu_ps(in + i), _MM_FROUND_TO_NEAREST_INT);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), h);
  }
  for (; i < n; ++i) out[i] = f32_to_f16(in[i]);
}

void narrow_bf16(const float* in, std::uint16_t* out, std::size_t n) {
  const __m256i abs_mask = _mm256_set1_epi32(0x7fffffff);
  const __m256i inf = _mm256_set1_epi32(0x7f800000);
  const __m256i one = _mm256_set1_epi32(1);
  const __m256i bias = _mm256_set1_epi32(0x7fff);
  const __m256i quiet = _mm256_set1_epi32(0x40);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i x = _mm256_castps_si256(_mm256_loadu_ps(in + i));
    const __m256i is_nan = _mm256_cmpgt_epi32(_mm256_and_si256(x, abs_mask), inf);
    const __m256i lsb = _mm256_and_si256(_mm256_srli_epi32(x, 16), one);
    const __m256i rounded = _mm256_srli_epi32(_mm256_add_epi32(x, _mm256_add_epi32(bias, lsb)), 16);
    const __m256i nan_bits = _mm256_or_si256(_mm256_srli_epi32(x, 16), quiet);
    const __m256i r = _mm256_blendv_epi8(rounded, nan_bits, is_nan);
    // pack 8x32 -> 8x16 without signed saturation: values fit in 16 bits
    const __m128i lo = _mm256_castsi256_si128(r);
    const __m128i hi = _mm256_extracti128_si256(r, 1);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), _mm_packus_epi32(lo, hi));
  }
  for (; i < n; ++i) out[i] = f32_to_bf16(in[i]);
}

void narrow_f64(const double* in, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm_storeu_ps(out + i, _mm256_cvtpd_ps(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) out[i] = static_cast<float>(in[i]);
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void combine2(double ca, const float* a, double cb, const float* b, float* out, std::size_t n) {
  const __m256d vca = _mm256_set1_pd(ca);
  const __m256d vcb = _mm256_set1_pd(cb);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d bv = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    const __m256d r = _mm256_add_pd(_mm256_mul_pd(vca, av), _mm256_mul_pd(vcb, bv));
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(r));
  }
  for (; i < n; ++i) {
    const double l = ca * static_cast<double>(a[i]);
    const double r = cb * static_cast<double>(b[i]);
    out[i] = static_cast<float>(l + r);
  }
}

void accumulate(double w, const float* x, double* acc, std::size_t n) {
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(vw, xv)));
  }
  for (; i < n; ++i) acc[i] = acc[i] + w * static_cast<double>(x[i]);
}

PairSums pair_sums(const float* x, const float* y, std::size_t n) {
  __m256d sx = _mm256_setzero_pd(), sy = _mm256_setzero_pd();
  __m256 mnx = _mm256_set1_ps(std::numeric_limits<float>::infinity());
  __m256 mny = mnx;
  __m256 mxx = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
  __m256 mxy = mxx;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    sx = _mm256_add_pd(sx, _mm256_cvtps_pd(_mm256_castps256_ps128(xv)));
    sx = _mm256_add_pd(sx, _mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)));
    sy = _mm256_add_pd(sy, _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
    sy = _mm256_add_pd(sy, _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
    mnx = _mm256_min_ps(xv, mnx);
    mxx = _mm256_max_ps(xv, mxx);
    mny = _mm256_min_ps(yv, mny);
    mxy = _mm256_max_ps(yv, mxy);
  }
  PairSums s;
  s.sum_x = hsum(sx);
  s.sum_y = hsum(sy);
  s.min_x = hmin(mnx);
  s.max_x = hmax(mxx);
  s.min_y = hmin(mny);
  s.max_y = hmax(mxy);
  for (; i < n; ++i) {
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
  const __m256d mx = _mm256_set1_pd(mean_x);
  const __m256d my = _mm256_set1_pd(mean_y);
  __m256d cxx = _mm256_setzero_pd(), cyy = _mm256_setzero_pd();
  __m256d cxy = _mm256_setzero_pd(), sdd = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    const __m256d yv = _mm256_cvtps_pd(_mm_loadu_ps(y + i));
    const __m256d dx = _mm256_sub_pd(xv, mx);
    const __m256d dy = _mm256_sub_pd(yv, my);
    const __m256d d = _mm256_sub_pd(xv, yv);
    cxx = _mm256_fmadd_pd(dx, dx, cxx);
    cyy = _mm256_fmadd_pd(dy, dy, cyy);
    cxy = _mm256_fmadd_pd(dx, dy, cxy);
    sdd = _mm256_fmadd_pd(d, d, sdd);
  }
  PairCentered c{hsum(cxx), hsum(cyy), hsum(cxy), hsum(sdd)};
  for (; i < n; ++i) {
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
  __m256d ab = _mm256_setzero_pd(), aa = _mm256_setzero_pd(), bb = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d bv = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    ab = _mm256_fmadd_pd(av, bv, ab);
    aa = _mm256_fmadd_pd(av, av, aa);
    bb = _mm256_fmadd_pd(bv, bv, bb);
  }
  DotNorms r{hsum(ab), hsum(aa), hsum(bb)};
  for (; i < n; ++i) {
    const double av = a[i];
    const double bv = b[i];
    r.ab += av * bv;
    r.aa += av * av;
    r.bb += bv * bv;
  }
  return r;
}

double sq_dist(const float* a, const float* b, std::size_t n) {
  __m256d s = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)),
                                    _mm256_cvtps_pd(_mm_loadu_ps(b + i)));
    s = _mm256_fmadd_pd(d, d, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    r += d * d;
  }
  return r;
}

float max_abs_diff(const float* a, const float* b, std::size_t n) {
  const __m256 sign = _mm256_set1_ps(-0.0f);
  __m256 m = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    m = _mm256_max_ps(_mm256_andnot_ps(sign, d), m);
  }
  float r = hmax(m);
  for (; i < n; ++i) r = std::max(r, std::fabs(a[i] - b[i]));
  return r;
}

constexpr KernelTable kAvx2{
    "avx2",    widen_f16,  widen_bf16, narrow_f16,    narrow_bf16, narrow_f64, sub,
    combine2,  accumulate, pair_sums,  pair_centered, dot_norms,   sq_dist,    max_abs_diff,
};

}  // namespace

const KernelTable* avx2_table_impl() noexcept { return &kAvx2; }

}  // namespace kinmerge::simd
