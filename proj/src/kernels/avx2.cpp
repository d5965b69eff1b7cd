// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 only (no -mfma): mul and add round separately, exactly
// as the scalar reference does.
#include <immintrin.h>

#include "scenediff/kernels/kernels.hpp"

namespace scenediff::kernels::avx2 {

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(arow + p);
        const double* brow = b + p * n + j;
        s0 = _mm256_add_pd(s0, _mm256_mul_pd(av, _mm256_loadu_pd(brow)));
        s1 = _mm256_add_pd(s1, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4)));
        s2 = _mm256_add_pd(s2, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 8)));
        s3 = _mm256_add_pd(s3, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 12)));
      }
      _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), s0));
      _mm256_storeu_pd(crow + j + 4, _mm256_add_pd(_mm256_loadu_pd(crow + j + 4), s1));
      _mm256_storeu_pd(crow + j + 8, _mm256_add_pd(_mm256_loadu_pd(crow + j + 8), s2));
      _mm256_storeu_pd(crow + j + 12, _mm256_add_pd(_mm256_loadu_pd(crow + j + 12), s3));
    }
    for (; j + 4 <= n; j += 4) {
      __m256d s = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(arow + p);
        s = _mm256_add_pd(s, _mm256_mul_pd(av, _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), s));
    }
    for (; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * n + j];
      crow[j] += s;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace scenediff::kernels::avx2
