// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string_view>

#include "kinmerge/simd/kernels.hpp"

namespace kinmerge::simd {

#if KINMERGE_HAVE_AVX2
const KernelTable* avx2_table_impl() noexcept;
#endif

const KernelTable* avx2_kernels() noexcept {
#if KINMERGE_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") &&
                                __builtin_cpu_supports("f16c");
  return supported ? avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() noexcept {
  const char* env = std::getenv("KINMERGE_SIMD");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& kernels() noexcept {
  static const KernelTable& active = select();
  return active;
}

}  // namespace kinmerge::simd
