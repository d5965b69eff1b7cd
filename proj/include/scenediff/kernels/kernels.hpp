// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

// Inner-loop arithmetic kernels. Every variant in this file computes results
// bit-identical to the scalar reference: vector lanes only ever run across
// independent output elements, never across a reduction.
//
// Reduction order (all variants):
//   gemm_acc: C[i,j] += s, where s = 0 + A[i,0]*B[0,j] + A[i,1]*B[1,j] + ...
//             summed sequentially in increasing inner index.
namespace scenediff::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  // C[m x n] += A[m x k] * B[k x n], all row-major and dense.
  void (*gemm_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = x + y
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  // out = x * y
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
};

const KernelTable& scalar_table();
// Null when the build has no AVX2 translation unit or the CPU lacks AVX2.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Table used by tensor ops. Chosen once at startup: AVX2 when supported
// unless SCENEDIFF_KERNELS=scalar is set in the environment.
const KernelTable& active();
void set_active(Isa isa);

namespace scalar {
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void add(std::size_t n, const double* x, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);
}  // namespace scalar

#if defined(SCENEDIFF_HAVE_AVX2)
namespace avx2 {
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void add(std::size_t n, const double* x, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);
}  // namespace avx2
#endif

}  // namespace scenediff::kernels
