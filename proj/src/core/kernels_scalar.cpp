#include "tscm/kernels.hpp"

namespace tscm::kernels::scalar {

template <class S>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const S* a, std::size_t lda, const S* b,
              std::size_t ldb, S* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    S* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = a[i * lda + p];
      const S* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class S>
void axpy(std::size_t n, S alpha, const S* x, S* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
void relu(std::size_t n, const S* x, S* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > S{0} ? x[i] : S{0};
}

template <class S>
void relu_backward(std::size_t n, const S* x, const S* dy, S* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > S{0}) dx[i] += dy[i];
  }
}

#define TSCM_SCALAR_KERNELS(S)                                                                        \
  template void gemm_acc<S>(std::size_t, std::size_t, std::size_t, const S*, std::size_t, const S*,  \
                            std::size_t, S*, std::size_t);                                          \
  template void axpy<S>(std::size_t, S, const S*, S*);                                               \
  template void relu<S>(std::size_t, const S*, S*);                                                  \
  template void relu_backward<S>(std::size_t, const S*, const S*, S*);

TSCM_SCALAR_KERNELS(float)
TSCM_SCALAR_KERNELS(double)
#undef TSCM_SCALAR_KERNELS

}  // namespace tscm::kernels::scalar
