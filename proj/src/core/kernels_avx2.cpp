// Compiled with -mavx2 -mfma. Nothing in this file may run unless the
// dispatcher has confirmed CPU support.

#include "tscm/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define TSCM_HAVE_AVX2 1
#else
#define TSCM_HAVE_AVX2 0
#endif

#include <stdexcept>

namespace tscm::kernels::avx2 {

#if TSCM_HAVE_AVX2

namespace {

// Lane masks for partial loads: row r enables the first r lanes.
alignas(32) const int kMask32[9][8] = {
    {0, 0, 0, 0, 0, 0, 0, 0},          {-1, 0, 0, 0, 0, 0, 0, 0},
    {-1, -1, 0, 0, 0, 0, 0, 0},        {-1, -1, -1, 0, 0, 0, 0, 0},
    {-1, -1, -1, -1, 0, 0, 0, 0},      {-1, -1, -1, -1, -1, 0, 0, 0},
    {-1, -1, -1, -1, -1, -1, 0, 0},    {-1, -1, -1, -1, -1, -1, -1, 0},
    {-1, -1, -1, -1, -1, -1, -1, -1},
};
alignas(32) const long long kMask64[5][4] = {
    {0, 0, 0, 0}, {-1, 0, 0, 0}, {-1, -1, 0, 0}, {-1, -1, -1, 0}, {-1, -1, -1, -1},
};

inline __m256i mask_ps(std::size_t lanes) {
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(kMask32[lanes]));
}
inline __m256i mask_pd(std::size_t lanes) {
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(kMask64[lanes]));
}

// 4 x 16 register block of C.
void block4x16(std::size_t k, const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
               std::size_t ldc) {
  __m256 c00 = _mm256_loadu_ps(c), c01 = _mm256_loadu_ps(c + 8);
  __m256 c10 = _mm256_loadu_ps(c + ldc), c11 = _mm256_loadu_ps(c + ldc + 8);
  __m256 c20 = _mm256_loadu_ps(c + 2 * ldc), c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
  __m256 c30 = _mm256_loadu_ps(c + 3 * ldc), c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
    __m256 av = _mm256_broadcast_ss(a + p);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a + lda + p);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a + 2 * lda + p);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a + 3 * lda + p);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c, c00);
  _mm256_storeu_ps(c + 8, c01);
  _mm256_storeu_ps(c + ldc, c10);
  _mm256_storeu_ps(c + ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20);
  _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30);
  _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

// One row of C, up to 8 columns under a lane mask.
void row_masked(std::size_t k, const float* a, const float* b, std::size_t ldb, float* c, std::size_t lanes) {
  const __m256i m = mask_ps(lanes);
  __m256 acc = _mm256_maskload_ps(c, m);
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p), _mm256_maskload_ps(b + p * ldb, m), acc);
  }
  _mm256_maskstore_ps(c, m, acc);
}

void block4x8(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
              std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

void row_masked(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c,
                std::size_t lanes) {
  const __m256i m = mask_pd(lanes);
  __m256d acc = _mm256_maskload_pd(c, m);
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_maskload_pd(b + p * ldb, m), acc);
  }
  _mm256_maskstore_pd(c, m, acc);
}

template <class S, std::size_t BlockCols, std::size_t Lanes, class Block>
void gemm_tiled(std::size_t m, std::size_t n, std::size_t k, const S* a, std::size_t lda, const S* b,
                std::size_t ldb, S* c, std::size_t ldc, Block block) {
  const std::size_t full_cols = n - n % BlockCols;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < full_cols; j += BlockCols) {
      block(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t j = full_cols; j < n; j += Lanes) {
        const std::size_t lanes = n - j < Lanes ? n - j : Lanes;
        row_masked(k, a + (i + r) * lda, b + j, ldb, c + (i + r) * ldc + j, lanes);
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; j += Lanes) {
      const std::size_t lanes = n - j < Lanes ? n - j : Lanes;
      row_masked(k, a + i * lda, b + j, ldb, c + i * ldc + j, lanes);
    }
  }
}

}  // namespace

bool compiled() { return true; }

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc) {
  gemm_tiled<float, 16, 8>(m, n, k, a, lda, b, ldb, c, ldc,
                           [](std::size_t kk, const float* aa, std::size_t la, const float* bb, std::size_t lb,
                              float* cc, std::size_t lc) { block4x16(kk, aa, la, bb, lb, cc, lc); });
}

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
  gemm_tiled<double, 8, 4>(m, n, k, a, lda, b, ldb, c, ldc,
                           [](std::size_t kk, const double* aa, std::size_t la, const double* bb,
                              std::size_t lb, double* cc, std::size_t lc) { block4x8(kk, aa, la, bb, lb, cc, lc); });
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const float* x, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 keep = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), _mm256_and_ps(keep, _mm256_loadu_ps(dy + i))));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), _mm256_and_pd(keep, _mm256_loadu_pd(dy + i))));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

#else

namespace {
[[noreturn]] void unavailable() { throw std::logic_error("AVX2 kernels were not compiled for this target"); }
}  // namespace

bool compiled() { return false; }
void gemm_acc(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t, float*,
              std::size_t) { unavailable(); }
void gemm_acc(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*, std::size_t,
              double*, std::size_t) { unavailable(); }
void axpy(std::size_t, float, const float*, float*) { unavailable(); }
void axpy(std::size_t, double, const double*, double*) { unavailable(); }
void relu(std::size_t, const float*, float*) { unavailable(); }
void relu(std::size_t, const double*, double*) { unavailable(); }
void relu_backward(std::size_t, const float*, const float*, float*) { unavailable(); }
void relu_backward(std::size_t, const double*, const double*, double*) { unavailable(); }

#endif

}  // namespace tscm::kernels::avx2
