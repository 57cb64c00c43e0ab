// Times the OpenMP kernels against the serial reference and verifies they
// agree bit-for-bit at each size.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "rdm/kernels.hpp"
#include "rdm/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count() / reps;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif
  std::printf("size,serial_ms,parallel_ms,speedup,bitwise_equal\n");

  rdm::Rng rng(99);
  for (int n : {64, 128, 256, 512}) {
    std::vector<double> a(static_cast<size_t>(n) * n), b(a.size()), c_ser(a.size()), c_par(a.size());
    rng.fill_normal(a.data(), a.size());
    rng.fill_normal(b.data(), b.size());

    const int reps = n <= 128 ? 20 : 5;
    const double t_ser =
        time_ms([&]() { rdm::kernels::serial::matmul(a.data(), b.data(), c_ser.data(), n, n, n); }, reps);
    const double t_par =
        time_ms([&]() { rdm::kernels::matmul(a.data(), b.data(), c_par.data(), n, n, n); }, reps);
    const bool equal = std::memcmp(c_ser.data(), c_par.data(), c_ser.size() * sizeof(double)) == 0;
    std::printf("%d,%.3f,%.3f,%.2f,%s\n", n, t_ser, t_par, t_ser / t_par, equal ? "yes" : "NO");
    if (!equal) return 1;
  }
  return 0;
}
