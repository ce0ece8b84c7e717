// Timing comparison between the OpenMP kernels and their serial references,
// with a bit-for-bit equality check on every compared pair.

#include <chrono>
#include <cstdio>
#include <functional>

#include "maskedntk/analytic.hpp"
#include "maskedntk/mc.hpp"
#include "maskedntk/ntk.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace maskedntk;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace

int main() {
  apply_thread_cap();
  const int threads = effective_threads();
  std::printf("threads for parallel runs: %d\n\n", threads);
  std::printf("%-28s %12s %12s %8s %s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "identical");

  // Exact expected loss, Theta(n m^2) coupled moments.
  {
    const Dataset data = make_synthetic_dataset(160, 12, 11);
    const NetworkState net = init_network(48, 12, 0.6, 12, 13);
    const double kappa = 0.3;
    double serial_v = 0.0, parallel_v = 0.0;
    set_threads(1);
    const double ts = time_ms([&] { serial_v = expected_loss_exact_serial(net, data, kappa); }, 3);
    set_threads(threads);
    const double tp = time_ms([&] { parallel_v = expected_loss_exact(net, data, kappa); }, 3);
    std::printf("%-28s %12.2f %12.2f %7.2fx %s\n", "expected_loss_exact", ts, tp, ts / tp,
                serial_v == parallel_v ? "yes" : "NO");
  }

  // Full-batch surrogate gradient.
  {
    const Dataset data = make_synthetic_dataset(500, 20, 21);
    const NetworkState net = init_network(100, 20, 0.5, 22, 23);
    const MaskBatch masks = sample_masks(500, 20, 0.2, 24);
    Matrix gs, gp;
    set_threads(1);
    const double ts = time_ms([&] { gs = masked_gradient_serial(net, data, masks); }, 20);
    set_threads(threads);
    const double tp = time_ms([&] { gp = masked_gradient(net, data, masks); }, 20);
    std::printf("%-28s %12.2f %12.2f %7.2fx %s\n", "masked_gradient", ts, tp, ts / tp,
                gs.data == gp.data ? "yes" : "NO");
  }

  // Chunked Monte Carlo loss oracle.
  {
    const Dataset data = make_synthetic_dataset(8, 6, 31);
    const NetworkState net = init_network(10, 6, 0.6, 32, 33);
    McScalar a, b;
    set_threads(1);
    const double ts = time_ms([&] { a = mc_masked_loss(net, data, 0.25, 200000, 7); }, 2);
    set_threads(threads);
    const double tp = time_ms([&] { b = mc_masked_loss(net, data, 0.25, 200000, 7); }, 2);
    std::printf("%-28s %12.2f %12.2f %7.2fx %s\n", "mc_masked_loss", ts, tp, ts / tp,
                (a.mean == b.mean && a.std_error == b.std_error) ? "yes" : "NO");
  }

  // Expected gradient row (second-moment actions).
  {
    const Dataset data = make_synthetic_dataset(200, 10, 41);
    const NetworkState net = init_network(60, 10, 0.5, 42, 43);
    std::vector<double> g1, g2;
    set_threads(1);
    const double ts = time_ms([&] { g1 = expected_gradient_exact(net, data, 0.3, 0); }, 3);
    set_threads(threads);
    const double tp = time_ms([&] { g2 = expected_gradient_exact(net, data, 0.3, 0); }, 3);
    std::printf("%-28s %12.2f %12.2f %7.2fx %s\n", "expected_gradient_exact", ts, tp, ts / tp,
                g1 == g2 ? "yes" : "NO");
  }

  // Kernel assembly at width 10^4.
  {
    const Dataset data = make_synthetic_dataset(120, 8, 51);
    const NetworkState net = init_network(10000, 8, 1.0, 52, 53);
    KernelMatrix k1, k2;
    set_threads(1);
    const double ts = time_ms([&] { k1 = empirical_ntk(net, data); }, 3);
    set_threads(threads);
    const double tp = time_ms([&] { k2 = empirical_ntk(net, data); }, 3);
    std::printf("%-28s %12.2f %12.2f %7.2fx %s\n", "empirical_ntk", ts, tp, ts / tp,
                k1.entries.data == k2.entries.data ? "yes" : "NO");
  }
  return 0;
}
