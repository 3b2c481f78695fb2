#include "cstn/blas.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

#ifdef CSTN_HAVE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace cstn {

namespace {

std::atomic<GemmMode> g_mode{GemmMode::Fast};

int env_threads() {
    if (const char* s = std::getenv("CSTN_THREADS")) {
        int n = std::atoi(s);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_threads{0};  // 0 = not yet initialized

void apply_blas_threads(int n) {
#ifdef CSTN_HAVE_OPENBLAS
    openblas_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace

GemmMode gemm_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_gemm_mode(GemmMode m) { g_mode.store(m, std::memory_order_relaxed); }

int threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n == 0) {
        n = env_threads();
        g_threads.store(n, std::memory_order_relaxed);
        apply_blas_threads(n);
    }
    return n;
}

void set_threads(int n) {
    if (n < 1) n = 1;
    g_threads.store(n, std::memory_order_relaxed);
    apply_blas_threads(n);
}

namespace {

// Reference kernel, double accumulation. Deterministic regardless of threads.
void gemm_precise(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha,
                  const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
                  float* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                float av = ta ? a[p * lda + i] : a[i * lda + p];
                float bv = tb ? b[j * ldb + p] : b[p * ldb + j];
                acc += static_cast<double>(av) * static_cast<double>(bv);
            }
            float* dst = c + i * ldc + j;
            *dst = static_cast<float>(alpha * acc) + (beta == 0.0f ? 0.0f : beta * *dst);
        }
    }
}

#ifndef CSTN_HAVE_OPENBLAS
// Blocked f32 fallback used when BLAS is absent.
void gemm_fast_fallback(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha,
                        const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
                        float* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            float* dst = c + i * ldc + j;
            *dst = beta == 0.0f ? 0.0f : beta * *dst;
        }
    }
    constexpr int64_t kc = 64;
    for (int64_t p0 = 0; p0 < k; p0 += kc) {
        int64_t p1 = std::min(k, p0 + kc);
        for (int64_t i = 0; i < m; ++i) {
            float* crow = c + i * ldc;
            for (int64_t p = p0; p < p1; ++p) {
                float av = alpha * (ta ? a[p * lda + i] : a[i * lda + p]);
                if (av == 0.0f) continue;
                if (!tb) {
                    const float* brow = b + p * ldb;
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                } else {
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
                }
            }
        }
    }
}
#endif

}  // namespace

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
          int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
    if (m <= 0 || n <= 0) return;
    if (k == 0) {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                float* dst = c + i * ldc + j;
                *dst = beta == 0.0f ? 0.0f : beta * *dst;
            }
        return;
    }
    if (gemm_mode() == GemmMode::Precise) {
        gemm_precise(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
        return;
    }
#ifdef CSTN_HAVE_OPENBLAS
    threads();  // ensures the thread cap has been applied to BLAS
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
#else
    gemm_fast_fallback(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

}  // namespace cstn
