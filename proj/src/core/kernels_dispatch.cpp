#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "tscm/kernels.hpp"

namespace tscm::kernels {

namespace {

Isa probe() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  if (avx2::compiled() && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa initial() {
  const char* force = std::getenv("TSCM_FORCE_SCALAR");
  if (force != nullptr && std::string(force) != "0") return Isa::scalar;
  return probe();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) {
    throw std::runtime_error("AVX2 kernels requested but not supported on this CPU");
  }
  current().store(isa, std::memory_order_relaxed);
}

template <class S>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const S* a, std::size_t lda, const S* b,
              std::size_t ldb, S* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  if (active_isa() == Isa::avx2) {
    avx2::gemm_acc(m, n, k, a, lda, b, ldb, c, ldc);
  } else {
    scalar::gemm_acc(m, n, k, a, lda, b, ldb, c, ldc);
  }
}

template <class S>
void axpy(std::size_t n, S alpha, const S* x, S* y) {
  if (active_isa() == Isa::avx2) {
    avx2::axpy(n, alpha, x, y);
  } else {
    scalar::axpy(n, alpha, x, y);
  }
}

template <class S>
void relu(std::size_t n, const S* x, S* y) {
  if (active_isa() == Isa::avx2) {
    avx2::relu(n, x, y);
  } else {
    scalar::relu(n, x, y);
  }
}

template <class S>
void relu_backward(std::size_t n, const S* x, const S* dy, S* dx) {
  if (active_isa() == Isa::avx2) {
    avx2::relu_backward(n, x, dy, dx);
  } else {
    scalar::relu_backward(n, x, dy, dx);
  }
}

template <class S>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, S alpha, const S* a,
          std::size_t lda, const S* b, std::size_t ldb, S beta, S* c, std::size_t ldc) {
  if (beta != S{1}) {
    for (std::size_t i = 0; i < m; ++i) {
      S* row = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) row[j] = beta == S{0} ? S{0} : row[j] * beta;
    }
  }
  if (m == 0 || n == 0 || k == 0 || alpha == S{0}) return;

  // The accumulate kernel wants op(A) as M x K and op(B) as K x N row-major;
  // transposed operands are packed into scratch first.
  std::vector<S> packed_a;
  const S* pa = a;
  std::size_t pla = lda;
  if (trans_a || alpha != S{1}) {
    packed_a.resize(m * k);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        packed_a[i * k + p] = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
      }
    }
    pa = packed_a.data();
    pla = k;
  }
  std::vector<S> packed_b;
  const S* pb = b;
  std::size_t plb = ldb;
  if (trans_b) {
    packed_b.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) packed_b[p * n + j] = b[j * ldb + p];
    }
    pb = packed_b.data();
    plb = n;
  }
  gemm_acc(m, n, k, pa, pla, pb, plb, c, ldc);
}

#define TSCM_DISPATCH_KERNELS(S)                                                                            \
  template void gemm_acc<S>(std::size_t, std::size_t, std::size_t, const S*, std::size_t, const S*,        \
                            std::size_t, S*, std::size_t);                                                \
  template void axpy<S>(std::size_t, S, const S*, S*);                                                     \
  template void relu<S>(std::size_t, const S*, S*);                                                        \
  template void relu_backward<S>(std::size_t, const S*, const S*, S*);                                     \
  template void gemm<S>(bool, bool, std::size_t, std::size_t, std::size_t, S, const S*, std::size_t,        \
                        const S*, std::size_t, S, S*, std::size_t);

TSCM_DISPATCH_KERNELS(float)
TSCM_DISPATCH_KERNELS(double)
#undef TSCM_DISPATCH_KERNELS

}  // namespace tscm::kernels
