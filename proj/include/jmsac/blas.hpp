#pragma once

#include <cstdint>
#include <functional>

namespace jmsac::blas {

// Global worker count for row-partitioned kernels. Partitioning never changes
// the accumulation order of any output element, so results are bit-identical
// for every thread count.
void set_threads(int n);
int threads();

// Runs fn(begin, end) over a static contiguous partition of [0, n).
void parallel_ranges(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

// Row-major C[M,N] = alpha * op(A) * op(B) + beta * C.
// op is identity or transpose; lda/ldb are the leading dimensions of the
// stored (untransposed) matrices.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
          int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
          int64_t ldc);

} // namespace jmsac::blas
