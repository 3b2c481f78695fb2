#pragma once

#include <cstdint>

namespace cstn {

// Fast routes large contractions through BLAS (f32 accumulation); Precise uses
// the in-repo kernel with double accumulators. Gradient-check harnesses switch
// to Precise; training and inference stay on Fast. Both modes are
// deterministic for a fixed thread count.
enum class GemmMode { Fast, Precise };

GemmMode gemm_mode();
void set_gemm_mode(GemmMode m);

// Thread budget, capped by the CSTN_THREADS environment variable.
int threads();
void set_threads(int n);

// Row-major C[m,n] = alpha * op(A) * op(B) + beta * C
// op(A) is A[m,k] (trans_a=false, lda>=k) or A[k,m] read transposed.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
          int64_t ldc);

}  // namespace cstn
