#pragma once

#include <cstddef>
#include <cstdint>

namespace rdm::kernels {

// Low-level dense kernels. The OpenMP variants parallelize over output rows
// only; every output element is computed by a single thread with a fixed
// summation order, so results are bit-identical to the serial reference for
// any thread count. The serial namespace is kept as the reference the tests
// and kernel_bench compare against.

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_transposed_a(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_transposed_b(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
}  // namespace serial

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m,n] += or = A^T B where A is [k,m]: used by backward passes.
void matmul_transposed_a(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m,n] = A B^T where B is [n,k].
void matmul_transposed_b(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// Rows*cols threshold below which the parallel paths fall back to serial.
// At typical model sizes here everything is below it; the dispatch exists so
// big eval/bench workloads can still scale.
inline constexpr int64_t kParallelMinWork = 64 * 1024;

}  // namespace rdm::kernels
