#pragma once

#include "maskedntk/analytic.hpp"
#include "maskedntk/model.hpp"

namespace maskedntk {

struct TrainConfig {
  double eta = 0.0;
  std::size_t iters = 0;
  double kappa = 0.0;
  std::uint64_t base_seed = 0;
  std::size_t record_every = 1;
};

// Recorded at iteration k before the update: clean loss L(W_k), surrogate
// loss L_{C_k}(W_k) under that step's masks, and max_r ||w_{k,r} - w_{0,r}||.
struct Trajectory {
  std::vector<std::size_t> iterations;
  std::vector<double> clean_loss;
  std::vector<double> masked_loss;
  std::vector<double> weight_drift;
};

struct FedConfig {
  std::size_t workers = 1;
  std::size_t local_steps = 1;
  std::size_t rounds = 1;
  double kappa = 0.0;
  double eta = 0.0;
  std::size_t batch_size = 0;  // 0 or >= shard size means full shard
  std::uint64_t base_seed = 0;
};

struct FedRoundRecord {
  std::size_t round;
  double clean_loss;
};

struct TrainDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One full-batch masked GD step; masks come from (base_seed, step) through the
// canonical stream, so trajectories replay without storing masks.
void gd_step(NetworkState& net, const Dataset& data, double kappa, double eta,
             std::uint64_t base_seed, std::uint64_t step);

Trajectory train(NetworkState net, const Dataset& data, const TrainConfig& cfg);

// Mean clean loss over the final tail_fraction of recorded points.
double plateau_loss(const Trajectory& traj, double tail_fraction);

struct ConvergenceReport {
  double fitted_decay = 0.0;     // per-iteration factor from the log-linear fit
  double theory_decay = 0.0;     // 1 - eta lambda0 / 2
  double floor_estimate = 0.0;   // m n / lambda0^2 * eps2^2 + eps1
  double max_weight_drift = 0.0;
  double drift_scale = 0.0;      // tau lambda0 / n
  std::size_t fit_points = 0;
};

struct NetMeta {
  std::size_t m;
  std::size_t n;
  double tau;
};

// Fits the pre-plateau segment (records with loss > 3x the tail-10% plateau)
// and evaluates the stochastic-training floor expression. Needs >= 5 fit points.
ConvergenceReport convergence_report(const Trajectory& traj, double lambda0, double eta,
                                     const EpsilonBounds& eps, const NetMeta& meta);

// Parameter-server training: every round each worker runs local masked
// mini-batch GD from the broadcast weights on its shard, then the server
// averages worker weights. Shards are contiguous splits of a seeded shuffle.
std::vector<FedRoundRecord> fedavg_simulate(const NetworkState& net0, const Dataset& data,
                                            const FedConfig& cfg);

}  // namespace maskedntk
