#pragma once

#include <cstdint>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskedntk {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 6.28318530717958647692;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Splittable counter-free PRNG. Streams are derived from a base seed plus an
// integer path, so any (seed, index...) pair names a reproducible stream
// independently of call order or thread scheduling. Normal variates come from
// Box-Muller on 53-bit uniforms; the sequence is fully specified here rather
// than delegated to std::normal_distribution, which differs across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc908ull)) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix(seed ^ 0x6a09e667f3bcc908ull);
    std::uint64_t salt = 0x9e3779b97f4a7c15ull;
    for (std::uint64_t p : path) {
      salt += 0x9e3779b97f4a7c15ull;
      s = mix(s ^ mix(p + salt));
    }
    Rng r(0);
    r.state_ = s;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal. Consumes exactly two uniforms per call.
  double next_normal();

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Index-ordered pairwise summation. The reduction tree depends only on the
// element count, so parallel producers that fill `x` by index and then call
// this get results independent of scheduling.
double pairwise_sum(std::span<const double> x);

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Number of worker threads the process should use. Honors the
// MASKED_NTK_THREADS environment variable; defaults to the machine cores.
int effective_threads();
// Applies effective_threads() to the OpenMP runtime (no-op in serial builds).
void apply_thread_cap();

}  // namespace maskedntk
