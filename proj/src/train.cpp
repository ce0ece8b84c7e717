#include "maskedntk/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace maskedntk {

namespace {

constexpr double kDivergenceThreshold = 1e12;

double max_row_drift(const Matrix& w, const Matrix& w0) {
  double mx = 0.0;
  for (std::size_t r = 0; r < w.rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) {
      const double d = w.at(r, j) - w0.at(r, j);
      sq += d * d;
    }
    mx = std::max(mx, std::sqrt(sq));
  }
  return mx;
}

void apply_step(NetworkState& net, const Matrix& grad, double eta) {
  for (std::size_t i = 0; i < net.W.data.size(); ++i) net.W.data[i] -= eta * grad.data[i];
}

}  // namespace

void gd_step(NetworkState& net, const Dataset& data, double kappa, double eta,
             std::uint64_t base_seed, std::uint64_t step) {
  if (!(eta > 0.0)) throw std::invalid_argument("gd_step: eta must be > 0");
  const MaskBatch masks = sample_step_masks(data.n(), data.d(), kappa, base_seed, step, 0);
  const Matrix grad = masked_gradient(net, data, masks);
  for (double g : grad.data)
    if (!std::isfinite(g)) throw TrainDivergedError("gd_step: non-finite gradient");
  apply_step(net, grad, eta);
}

Trajectory train(NetworkState net, const Dataset& data, const TrainConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("train: eta must be > 0");
  if (cfg.iters < 1) throw std::invalid_argument("train: iters must be >= 1");
  if (cfg.record_every < 1) throw std::invalid_argument("train: record_every must be >= 1");

  const Matrix w0 = net.W;
  Trajectory traj;
  for (std::size_t k = 0; k < cfg.iters; ++k) {
    const MaskBatch masks = sample_step_masks(data.n(), data.d(), cfg.kappa, cfg.base_seed, k, 0);
    if (k % cfg.record_every == 0) {
      const double cl = clean_loss(net, data);
      if (!(cl < kDivergenceThreshold))
        throw TrainDivergedError("train: clean loss exceeded 1e12 at iteration " +
                                 std::to_string(k) + " (eta=" + std::to_string(cfg.eta) +
                                 ", kappa=" + std::to_string(cfg.kappa) + ")");
      traj.iterations.push_back(k);
      traj.clean_loss.push_back(cl);
      traj.masked_loss.push_back(masked_loss(net, data, masks));
      traj.weight_drift.push_back(max_row_drift(net.W, w0));
    }
    const Matrix grad = masked_gradient(net, data, masks);
    for (double g : grad.data)
      if (!std::isfinite(g)) throw TrainDivergedError("train: non-finite gradient");
    apply_step(net, grad, cfg.eta);
  }
  return traj;
}

double plateau_loss(const Trajectory& traj, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw std::invalid_argument("plateau_loss: tail_fraction in (0, 1]");
  const std::size_t n = traj.clean_loss.size();
  if (n == 0) throw std::invalid_argument("plateau_loss: empty trajectory");
  std::size_t count = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n);
  const std::size_t begin = n - count;
  return pairwise_sum({traj.clean_loss.data() + begin, count}) / static_cast<double>(count);
}

ConvergenceReport convergence_report(const Trajectory& traj, double lambda0, double eta,
                                     const EpsilonBounds& eps, const NetMeta& meta) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("convergence_report: lambda0 must be > 0");
  const double plateau = plateau_loss(traj, 0.1);
  // Pre-plateau segment: everything still a factor 3 above the tail level.
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t < traj.clean_loss.size(); ++t) {
    if (traj.clean_loss[t] > 3.0 * plateau && traj.clean_loss[t] > 0.0) {
      xs.push_back(static_cast<double>(traj.iterations[t]));
      ys.push_back(std::log(traj.clean_loss[t]));
    }
  }
  if (xs.size() < 5)
    throw std::invalid_argument("convergence_report: fewer than 5 pre-plateau points");

  const double nn = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / nn;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / nn;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    sxy += (xs[t] - mx) * (ys[t] - my);
    sxx += (xs[t] - mx) * (xs[t] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("convergence_report: degenerate fit");

  ConvergenceReport rep;
  rep.fit_points = xs.size();
  rep.fitted_decay = std::exp(sxy / sxx);
  rep.theory_decay = 1.0 - eta * lambda0 / 2.0;
  rep.floor_estimate = static_cast<double>(meta.m) * static_cast<double>(meta.n) /
                           (lambda0 * lambda0) * eps.eps2 * eps.eps2 +
                       eps.eps1;
  rep.max_weight_drift =
      traj.weight_drift.empty() ? 0.0 : *std::max_element(traj.weight_drift.begin(),
                                                          traj.weight_drift.end());
  rep.drift_scale = meta.tau * lambda0 / static_cast<double>(meta.n);
  return rep;
}

std::vector<FedRoundRecord> fedavg_simulate(const NetworkState& net0, const Dataset& data,
                                            const FedConfig& cfg) {
  if (cfg.workers < 1 || cfg.local_steps < 1 || cfg.rounds < 1)
    throw std::invalid_argument("fedavg_simulate: counts must be >= 1");
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("fedavg_simulate: eta must be > 0");

  const std::size_t n = data.n();
  const std::size_t P = cfg.workers;
  if (P > n) throw std::invalid_argument("fedavg_simulate: more workers than samples");

  // Contiguous equal shards of a seeded shuffle.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng = Rng::derive(cfg.base_seed, {0x5/*shard*/, 0xF1});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = shuffle_rng.next_below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  // Contiguous blocks of the shuffled order, then sorted: shard membership is
  // random but iteration order inside a shard is canonical, so the one-worker
  // full-batch case reduces bit-exactly to centralized training.
  std::vector<std::vector<std::size_t>> shards(P);
  for (std::size_t w = 0; w < P; ++w) {
    const std::size_t begin = w * n / P;
    const std::size_t end = (w + 1) * n / P;
    shards[w].assign(perm.begin() + begin, perm.begin() + end);
    std::sort(shards[w].begin(), shards[w].end());
  }

  std::vector<FedRoundRecord> records;
  records.reserve(cfg.rounds);
  NetworkState global = net0;
  std::vector<Matrix> worker_w(P);

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    for (std::size_t w = 0; w < P; ++w) {
      NetworkState local = global;
      const std::vector<std::size_t>& shard = shards[w];
      for (std::size_t s = 0; s < cfg.local_steps; ++s) {
        const std::uint64_t step_index = round * cfg.local_steps + s;
        std::vector<std::size_t> batch;
        if (cfg.batch_size == 0 || cfg.batch_size >= shard.size()) {
          batch = shard;
        } else {
          // Without-replacement mini-batch via a partial Fisher-Yates pass.
          Rng batch_rng = Rng::derive(cfg.base_seed, {step_index, w, 0xBA});
          std::vector<std::size_t> pool = shard;
          for (std::size_t t = 0; t < cfg.batch_size; ++t) {
            const std::size_t j = t + batch_rng.next_below(pool.size() - t);
            std::swap(pool[t], pool[j]);
          }
          batch.assign(pool.begin(), pool.begin() + cfg.batch_size);
        }
        const MaskBatch masks = sample_step_masks_rows(n, data.d(), cfg.kappa, cfg.base_seed,
                                                       step_index, w, batch);
        const Matrix grad = masked_gradient_subset(local, data, masks, batch);
        for (double g : grad.data)
          if (!std::isfinite(g)) throw TrainDivergedError("fedavg_simulate: non-finite gradient");
        for (std::size_t t = 0; t < local.W.data.size(); ++t)
          local.W.data[t] -= cfg.eta * grad.data[t];
      }
      worker_w[w] = std::move(local.W);
    }
    // Aggregate in fixed worker order.
    Matrix& gw = global.W;
    std::fill(gw.data.begin(), gw.data.end(), 0.0);
    for (std::size_t w = 0; w < P; ++w)
      for (std::size_t t = 0; t < gw.data.size(); ++t) gw.data[t] += worker_w[w].data[t];
    const double inv_p = 1.0 / static_cast<double>(P);
    for (double& t : gw.data) t *= inv_p;

    const double cl = clean_loss(global, data);
    if (!(cl < kDivergenceThreshold))
      throw TrainDivergedError("fedavg_simulate: clean loss exceeded 1e12 at round " +
                               std::to_string(round));
    records.push_back({round, cl});
  }
  return records;
}

}  // namespace maskedntk
