#pragma once

#include <cstdint>
#include <functional>

#include "maskedntk/model.hpp"

namespace maskedntk {

// Sample-mean estimate with its standard error. Reproducible from the seed
// and, by the fixed chunking scheme, independent of thread count.
struct McScalar {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct McVector {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

// Fixed chunk size: chunk c consumes the stream derive(seed, {c}) serially,
// so partial results are tied to chunk indices rather than threads.
inline constexpr std::size_t kMcChunk = 4096;

// Generic scalar expectation. `statistic` maps one RNG draw to one value and
// must consume the stream deterministically. Throws if a draw produces a
// non-finite value (the message carries the draw index).
McScalar mc_expectation(std::uint64_t seed, std::uint64_t n_samples,
                        const std::function<double(Rng&)>& statistic);

// Vector-valued variant; `statistic` fills `out` for one draw.
McVector mc_expectation_vec(std::uint64_t seed, std::uint64_t n_samples, std::size_t dim,
                            const std::function<void(Rng&, std::span<double>)>& statistic);

// E_C[L_C(W)] estimated over fresh independent mask batches.
McScalar mc_masked_loss(const NetworkState& net, const Dataset& data, double kappa,
                        std::uint64_t n_batches, std::uint64_t seed);

// E_C[grad_{w_r} L_C(W)] estimated over fresh mask batches.
McVector mc_masked_gradient(const NetworkState& net, const Dataset& data, double kappa,
                            std::size_t r, std::uint64_t n_batches, std::uint64_t seed);

// E_c[max(0, w^T (x o c))].
McScalar mc_activation_expectation(std::span<const double> w, std::span<const double> x,
                                   double kappa, std::uint64_t n_samples, std::uint64_t seed);

}  // namespace maskedntk
