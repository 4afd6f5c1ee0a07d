#pragma once

// Arithmetic inner loops. Each kernel has a portable scalar reference and an
// AVX2+FMA variant; the variant is chosen once at startup from CPUID and can be
// overridden (TSCM_FORCE_SCALAR=1 or set_isa) so the two can be compared.

#include <cstddef>
#include <string_view>

namespace tscm::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Best instruction set the running CPU supports.
Isa detected_isa();
/// Instruction set the dispatching entry points currently use.
Isa active_isa();
/// Select the instruction set; requesting one the CPU lacks throws.
void set_isa(Isa isa);

// C[M x N] += A[M x K] * B[K x N], all row-major with leading dimensions.
template <class S>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const S* a, std::size_t lda, const S* b,
              std::size_t ldb, S* c, std::size_t ldc);

// y += alpha * x
template <class S>
void axpy(std::size_t n, S alpha, const S* x, S* y);

// y = max(x, 0)
template <class S>
void relu(std::size_t n, const S* x, S* y);

// dx += (x > 0) ? dy : 0
template <class S>
void relu_backward(std::size_t n, const S* x, const S* dy, S* dx);

/// General matrix product with optional transposes:
/// C = alpha * op(A) * op(B) + beta * C. op(A) is M x K, op(B) is K x N.
template <class S>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, S alpha, const S* a,
          std::size_t lda, const S* b, std::size_t ldb, S beta, S* c, std::size_t ldc);

namespace scalar {
template <class S>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const S* a, std::size_t lda, const S* b,
              std::size_t ldb, S* c, std::size_t ldc);
template <class S>
void axpy(std::size_t n, S alpha, const S* x, S* y);
template <class S>
void relu(std::size_t n, const S* x, S* y);
template <class S>
void relu_backward(std::size_t n, const S* x, const S* dy, S* dx);
}  // namespace scalar

namespace avx2 {
bool compiled();
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc);
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void relu(std::size_t n, const float* x, float* y);
void relu(std::size_t n, const double* x, double* y);
void relu_backward(std::size_t n, const float* x, const float* dy, float* dx);
void relu_backward(std::size_t n, const double* x, const double* dy, double* dx);
}  // namespace avx2

}  // namespace tscm::kernels
