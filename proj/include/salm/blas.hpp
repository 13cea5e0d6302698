#pragma once

#include <cblas-openblas.h>

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace salm::blas {

/// OpenBLAS picks its kernels from CPUID at load time. Virtualized hosts
/// often report an unknown model while still exposing AVX2/AVX-512, which
/// lands on a slow generic kernel. Pin the core type before first use
/// unless the user already chose one.
inline void select_kernel_once() {
    static const bool done = [] {
        if (std::getenv("OPENBLAS_CORETYPE") == nullptr) {
#if defined(__x86_64__)
            if (__builtin_cpu_supports("avx512f"))
                setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
            else if (__builtin_cpu_supports("avx2"))
                setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
#endif
        }
        return true;
    }();
    (void)done;
}

inline void set_threads(int n) {
    select_kernel_once();
    openblas_set_num_threads(n > 0 ? n : 1);
}

/// C[m,n] = alpha * op(A) op(B) + beta * C, row-major.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    select_kernel_once();
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    select_kernel_once();
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace salm::blas
