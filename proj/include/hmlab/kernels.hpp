#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

// Matrix-multiply kernels. Each form exists twice: a plain serial loop that
// serves as the reference, and an OpenMP version that parallelizes over
// independent output rows. Both run the same per-row arithmetic, so their
// results are bit-identical and runs stay deterministic under any thread
// count.
namespace hmlab::kernels {

inline bool& parallel_enabled() {
    static bool enabled = true;
    return enabled;
}

// Row count below which the OpenMP fork is not worth it.
inline constexpr int64_t kParallelMinRows = 16;
inline constexpr int64_t kParallelMinFlops = 1 << 16;

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename Real>
void gemm_nn_serial(const Real* A, const Real* B, Real* C,
                    int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        Real* ci = C + i * n;
        if (!accumulate)
            for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
        const Real* ai = A + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const Real a = ai[p];
            const Real* bp = B + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

template <typename Real>
void gemm_nn_parallel(const Real* A, const Real* B, Real* C,
                      int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i)
        gemm_nn_serial(A + i * k, B, C + i * n, 1, k, n, accumulate);
}

// C[m x n] (+)= A^T * B with A stored [k x m]
template <typename Real>
void gemm_tn_serial(const Real* A, const Real* B, Real* C,
                    int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        Real* ci = C + i * n;
        if (!accumulate)
            for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
        for (int64_t p = 0; p < k; ++p) {
            const Real a = A[p * m + i];
            const Real* bp = B + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

template <typename Real>
void gemm_tn_parallel(const Real* A, const Real* B, Real* C,
                      int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        Real* ci = C + i * n;
        if (!accumulate)
            for (int64_t j = 0; j < n; ++j) ci[j] = Real(0);
        for (int64_t p = 0; p < k; ++p) {
            const Real a = A[p * m + i];
            const Real* bp = B + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

// C[m x n] (+)= A * B^T with B stored [n x k]
template <typename Real>
void gemm_nt_serial(const Real* A, const Real* B, Real* C,
                    int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        const Real* ai = A + i * k;
        Real* ci = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const Real* bj = B + j * k;
            Real acc = accumulate ? ci[j] : Real(0);
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
}

template <typename Real>
void gemm_nt_parallel(const Real* A, const Real* B, Real* C,
                      int64_t m, int64_t k, int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i)
        gemm_nt_serial(A + i * k, B, C + i * n, 1, k, n, accumulate);
}

template <typename Real>
bool use_parallel(int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
    return parallel_enabled() && m >= kParallelMinRows && m * k * n >= kParallelMinFlops;
#else
    (void)m; (void)k; (void)n;
    return false;
#endif
}

template <typename Real>
void gemm_nn(const Real* A, const Real* B, Real* C,
             int64_t m, int64_t k, int64_t n, bool accumulate = false) {
    if (use_parallel<Real>(m, k, n))
        gemm_nn_parallel(A, B, C, m, k, n, accumulate);
    else
        gemm_nn_serial(A, B, C, m, k, n, accumulate);
}

template <typename Real>
void gemm_tn(const Real* A, const Real* B, Real* C,
             int64_t m, int64_t k, int64_t n, bool accumulate = false) {
    if (use_parallel<Real>(m, k, n))
        gemm_tn_parallel(A, B, C, m, k, n, accumulate);
    else
        gemm_tn_serial(A, B, C, m, k, n, accumulate);
}

template <typename Real>
void gemm_nt(const Real* A, const Real* B, Real* C,
             int64_t m, int64_t k, int64_t n, bool accumulate = false) {
    if (use_parallel<Real>(m, k, n))
        gemm_nt_parallel(A, B, C, m, k, n, accumulate);
    else
        gemm_nt_serial(A, B, C, m, k, n, accumulate);
}

}  // namespace hmlab::kernels
