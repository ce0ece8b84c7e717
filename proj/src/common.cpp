#include "maskedntk/common.hpp"

#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace maskedntk {

double Rng::next_normal() {
  double u1 = next_unit();
  double u2 = next_unit();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

namespace {

double pairwise_sum_impl(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(x, half) + pairwise_sum_impl(x + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> x) { return pairwise_sum_impl(x.data(), x.size()); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

int effective_threads() {
  int hw = 1;
#ifdef _OPENMP
  hw = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("MASKED_NTK_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(v < hw ? v : hw);
  }
  return hw;
}

void apply_thread_cap() {
#ifdef _OPENMP
  omp_set_num_threads(effective_threads());
#endif
}

}  // namespace maskedntk
