#include "maskedntk/mc.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace maskedntk {

namespace {

struct ChunkLayout {
  std::uint64_t n_chunks;
  std::uint64_t n_samples;

  std::uint64_t chunk_begin(std::uint64_t c) const { return c * kMcChunk; }
  std::uint64_t chunk_size(std::uint64_t c) const {
    const std::uint64_t b = chunk_begin(c);
    return std::min<std::uint64_t>(kMcChunk, n_samples - b);
  }
};

ChunkLayout layout_for(std::uint64_t n_samples) {
  if (n_samples < 2) throw std::invalid_argument("mc: n_samples must be >= 2");
  return {(n_samples + kMcChunk - 1) / kMcChunk, n_samples};
}

}  // namespace

McScalar mc_expectation(std::uint64_t seed, std::uint64_t n_samples,
                        const std::function<double(Rng&)>& statistic) {
  const ChunkLayout lay = layout_for(n_samples);
  std::vector<double> sums(lay.n_chunks, 0.0);
  std::vector<double> sumsqs(lay.n_chunks, 0.0);
  std::atomic<std::int64_t> first_bad{-1};

#pragma omp parallel for schedule(dynamic)
  for (long long c = 0; c < static_cast<long long>(lay.n_chunks); ++c) {
    Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(c)});
    double s = 0.0, sq = 0.0;
    const std::uint64_t count = lay.chunk_size(c);
    for (std::uint64_t k = 0; k < count; ++k) {
      const double v = statistic(rng);
      if (!std::isfinite(v)) {
        std::int64_t expected = -1;
        first_bad.compare_exchange_strong(expected,
                                          static_cast<std::int64_t>(lay.chunk_begin(c) + k));
        break;
      }
      s += v;
      sq += v * v;
    }
    sums[c] = s;
    sumsqs[c] = sq;
  }
  if (first_bad.load() >= 0)
    throw std::runtime_error("mc_expectation: non-finite statistic at draw " +
                             std::to_string(first_bad.load()));

  McScalar est;
  est.seed = seed;
  est.n_samples = n_samples;
  const double n = static_cast<double>(n_samples);
  est.mean = pairwise_sum(sums) / n;
  const double ssq = pairwise_sum(sumsqs);
  const double var = std::max(0.0, (ssq - n * est.mean * est.mean) / (n - 1.0));
  est.std_error = std::sqrt(var / n);
  return est;
}

McVector mc_expectation_vec(std::uint64_t seed, std::uint64_t n_samples, std::size_t dim,
                            const std::function<void(Rng&, std::span<double>)>& statistic) {
  const ChunkLayout lay = layout_for(n_samples);
  Matrix sums(lay.n_chunks, dim);
  Matrix sumsqs(lay.n_chunks, dim);
  std::atomic<std::int64_t> first_bad{-1};

#pragma omp parallel
  {
    std::vector<double> buf(dim);
#pragma omp for schedule(dynamic)
    for (long long c = 0; c < static_cast<long long>(lay.n_chunks); ++c) {
      Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(c)});
      double* s = sums.row(c);
      double* sq = sumsqs.row(c);
      const std::uint64_t count = lay.chunk_size(c);
      for (std::uint64_t k = 0; k < count; ++k) {
        statistic(rng, buf);
        bool finite = true;
        for (double v : buf) finite = finite && std::isfinite(v);
        if (!finite) {
          std::int64_t expected = -1;
          first_bad.compare_exchange_strong(expected,
                                            static_cast<std::int64_t>(lay.chunk_begin(c) + k));
          break;
        }
        for (std::size_t j = 0; j < dim; ++j) {
          s[j] += buf[j];
          sq[j] += buf[j] * buf[j];
        }
      }
    }
  }
  if (first_bad.load() >= 0)
    throw std::runtime_error("mc_expectation_vec: non-finite statistic at draw " +
                             std::to_string(first_bad.load()));

  McVector est;
  est.seed = seed;
  est.n_samples = n_samples;
  est.mean.resize(dim);
  est.std_error.resize(dim);
  const double n = static_cast<double>(n_samples);
  std::vector<double> col(lay.n_chunks);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::uint64_t c = 0; c < lay.n_chunks; ++c) col[c] = sums.at(c, j);
    est.mean[j] = pairwise_sum(col) / n;
    for (std::uint64_t c = 0; c < lay.n_chunks; ++c) col[c] = sumsqs.at(c, j);
    const double var =
        std::max(0.0, (pairwise_sum(col) - n * est.mean[j] * est.mean[j]) / (n - 1.0));
    est.std_error[j] = std::sqrt(var / n);
  }
  return est;
}

McScalar mc_masked_loss(const NetworkState& net, const Dataset& data, double kappa,
                        std::uint64_t n_batches, std::uint64_t seed) {
  if (kappa == 0.0) {
    // Every batch is the all-ones mask; the estimator is the constant itself.
    layout_for(n_batches);
    return {clean_loss(net, data), 0.0, n_batches, seed};
  }
  const std::size_t n = data.n(), d = data.d(), m = net.m;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  return mc_expectation(seed, n_batches, [&, n, d, m, inv_sqrt_m, kappa](Rng& rng) {
    double total = 0.0;
    std::vector<double> xc(d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = data.inputs.row(i);
      for (std::size_t j = 0; j < d; ++j) xc[j] = x[j] * (1.0 + kappa * rng.next_normal());
      double f = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double z = dot(net.w(r), xc);
        if (z > 0.0) f += net.signs[r] * z;
      }
      const double res = f * inv_sqrt_m - data.targets[i];
      total += 0.5 * res * res;
    }
    return total;
  });
}

McVector mc_masked_gradient(const NetworkState& net, const Dataset& data, double kappa,
                            std::size_t r, std::uint64_t n_batches, std::uint64_t seed) {
  if (kappa == 0.0) {
    layout_for(n_batches);
    const Matrix cg = clean_gradient(net, data);
    McVector est;
    est.mean.assign(cg.row(r), cg.row(r) + net.d);
    est.std_error.assign(net.d, 0.0);
    est.n_samples = n_batches;
    est.seed = seed;
    return est;
  }
  const std::size_t n = data.n(), d = data.d(), m = net.m;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const double scale = net.signs[r] * inv_sqrt_m;
  return mc_expectation_vec(
      seed, n_batches, d, [&, n, d, m, inv_sqrt_m, scale, kappa, r](Rng& rng, std::span<double> out) {
        for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
        std::vector<double> xc(d);
        for (std::size_t i = 0; i < n; ++i) {
          const double* x = data.inputs.row(i);
          for (std::size_t j = 0; j < d; ++j) xc[j] = x[j] * (1.0 + kappa * rng.next_normal());
          double f = 0.0;
          double zr = 0.0;
          for (std::size_t rr = 0; rr < m; ++rr) {
            const double z = dot(net.w(rr), xc);
            if (rr == r) zr = z;
            if (z > 0.0) f += net.signs[rr] * z;
          }
          if (zr <= 0.0) continue;
          const double coef = scale * (f * inv_sqrt_m - data.targets[i]);
          for (std::size_t j = 0; j < d; ++j) out[j] += coef * xc[j];
        }
      });
}

McScalar mc_activation_expectation(std::span<const double> w, std::span<const double> x,
                                   double kappa, std::uint64_t n_samples, std::uint64_t seed) {
  const std::size_t d = w.size();
  return mc_expectation(seed, n_samples, [&, d, kappa](Rng& rng) {
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j] * (1.0 + kappa * rng.next_normal());
    return z > 0.0 ? z : 0.0;
  });
}

}  // namespace maskedntk
