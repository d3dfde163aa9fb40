// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops used by the tensor store, merge operators,
// kinship and the synthetic evaluator. Every kernel has a scalar reference
// implementation; SIMD variants are selected once at runtime.
//
// Elementwise kernels are bit-identical across variants (no FMA contraction,
// identical rounding steps). Reductions may differ in summation order and are
// only required to agree within floating-point tolerance.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>

namespace kinmerge::simd {

/// Plain sums and extrema of a block of paired samples.
struct PairSums {
  double sum_x = 0.0;
  double sum_y = 0.0;
  float min_x = std::numeric_limits<float>::infinity();
  float max_x = -std::numeric_limits<float>::infinity();
  float min_y = std::numeric_limits<float>::infinity();
  float max_y = -std::numeric_limits<float>::infinity();
};

/// Second-order sums of a block around supplied means, plus the raw squared
/// distance sum Σ(x−y)² which must not be derived from centered terms.
struct PairCentered {
  double cxx = 0.0;
  double cyy = 0.0;
  double cxy = 0.0;
  double sdd = 0.0;
};

struct DotNorms {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
};

struct KernelTable {
  std::string_view name;

  void (*widen_f16)(const std::uint16_t* in, float* out, std::size_t n);
  void (*widen_bf16)(const std::uint16_t* in, float* out, std::size_t n);
  void (*narrow_f16)(const float* in, std::uint16_t* out, std::size_t n);
  void (*narrow_bf16)(const float* in, std::uint16_t* out, std::size_t n);
  void (*narrow_f64)(const double* in, float* out, std::size_t n);

  // out = a - b, in f32
  void (*sub)(const float* a, const float* b, float* out, std::size_t n);
  // out = f32(ca*a + cb*b), evaluated in f64
  void (*combine2)(double ca, const float* a, double cb, const float* b, float* out, std::size_t n);
  // acc += w*x, in f64
  void (*accumulate)(double w, const float* x, double* acc, std::size_t n);

  PairSums (*pair_sums)(const float* x, const float* y, std::size_t n);
  PairCentered (*pair_centered)(const float* x, const float* y, std::size_t n, double mean_x,
                                double mean_y);
  DotNorms (*dot_norms)(const float* a, const float* b, std::size_t n);
  // Σ(a−b)² in f64
  double (*sq_dist)(const float* a, const float* b, std::size_t n);
  // max |a−b| in f32
  float (*max_abs_diff)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

/// AVX2/FMA/F16C variant, or nullptr when the build or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

/// The active table. Chosen on first use: the best variant the CPU supports,
/// overridable with KINMERGE_SIMD=scalar|avx2.
const KernelTable& kernels() noexcept;

}  // namespace kinmerge::simd
