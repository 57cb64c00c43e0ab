#include "rdm/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdm::kernels {

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_transposed_a(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  // a is [k, m], result c = a^T b is [m, n]
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_transposed_b(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  // b is [n, k], result c = a b^T is [m, n]
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

}  // namespace serial

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  if (m * n < kParallelMinWork || m < 2) {
    serial::matmul(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_transposed_a(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  if (m * n < kParallelMinWork || m < 2) {
    serial::matmul_transposed_a(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_transposed_b(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  if (m * n < kParallelMinWork || m < 2) {
    serial::matmul_transposed_b(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

}  // namespace rdm::kernels
