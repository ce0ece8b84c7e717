#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "maskedntk/common.hpp"

namespace maskedntk {

// Regression dataset with rows in the unit l2 ball and bounded targets.
struct Dataset {
  Matrix inputs;                 // n x d
  std::vector<double> targets;   // n
  double target_bound = 1.0;

  std::size_t n() const { return inputs.rows; }
  std::size_t d() const { return inputs.cols; }
  std::span<const double> x(std::size_t i) const { return {inputs.row(i), inputs.cols}; }
};

enum class DatasetIssue { kNone, kNormViolation, kTargetViolation, kZeroVector, kCollinearPair };

struct DatasetValidation {
  bool ok = true;
  DatasetIssue issue = DatasetIssue::kNone;
  std::size_t index_i = 0;  // offending sample (first of the pair for collinearity)
  std::size_t index_j = 0;
  std::string detail;
};

// Checks norms, target bounds, zero vectors, and pairwise collinearity.
// Collinearity is flagged when |x_i^ x_j| > 1 - 1e-12 on normalized vectors.
DatasetValidation validate_dataset(const Dataset& data);

// Two-layer ReLU network under 1/sqrt(m) output scaling. Second-layer signs
// are fixed; only W trains.
struct NetworkState {
  Matrix W;                 // m x d, rows w_r
  std::vector<double> signs;  // m entries in {-1, +1}
  std::size_t m = 0;
  std::size_t d = 0;
  double tau = 0.0;

  std::span<const double> w(std::size_t r) const { return {W.row(r), W.cols}; }
};

// w_r ~ N(0, tau^2 I) from weight_seed, signs uniform +-1 from sign_seed.
NetworkState init_network(std::size_t m, std::size_t d, double tau, std::uint64_t sign_seed,
                          std::uint64_t weight_seed);

// f(W, x) = (1/sqrt(m)) sum_r a_r max(0, w_r^T x).
double forward(const NetworkState& net, std::span<const double> x);

// One multiplicative mask vector per sample, entries i.i.d. N(1, kappa^2).
struct MaskBatch {
  Matrix masks;  // n x d
  double kappa = 0.0;
  std::uint64_t seed = 0;

  std::span<const double> c(std::size_t i) const { return {masks.row(i), masks.cols}; }
};

MaskBatch sample_masks(std::size_t n, std::size_t d, double kappa, std::uint64_t seed);

// Canonical mask stream for training: iteration k of worker w draws from
// derive(base_seed, {k, worker}). Centralized training uses worker = 0.
MaskBatch sample_step_masks(std::size_t n, std::size_t d, double kappa, std::uint64_t base_seed,
                            std::uint64_t step, std::uint64_t worker);

// Same stream, but only the listed rows are drawn (in the listed order); other
// rows stay at 1. Listing all rows in ascending order reproduces
// sample_step_masks exactly, which keeps the one-worker FedAvg reduction
// bit-identical to centralized training.
MaskBatch sample_step_masks_rows(std::size_t n, std::size_t d, double kappa,
                                 std::uint64_t base_seed, std::uint64_t step, std::uint64_t worker,
                                 std::span<const std::size_t> rows);

// L_C(W) = 1/2 sum_i (f(W, x_i o c_i) - y_i)^2.
double masked_loss(const NetworkState& net, const Dataset& data, const MaskBatch& masks);

// Gradient of the surrogate loss with respect to W. Row r is
// (a_r/sqrt(m)) sum_i (f - y_i)(x_i o c_i) 1{w_r^T (x_i o c_i) > 0}.
// Exactly-zero preactivations contribute 0 (measure-zero event under masks).
Matrix masked_gradient(const NetworkState& net, const Dataset& data, const MaskBatch& masks);
Matrix masked_gradient_serial(const NetworkState& net, const Dataset& data,
                              const MaskBatch& masks);

double clean_loss(const NetworkState& net, const Dataset& data);
Matrix clean_gradient(const NetworkState& net, const Dataset& data);

// Restricted losses/gradients over a subset of sample indices (FedAvg shards).
double masked_loss_subset(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                          std::span<const std::size_t> idx);
Matrix masked_gradient_subset(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                              std::span<const std::size_t> idx);

// High-probability mask sup-norm level 1 + kappa sqrt(2 log(2d/delta)).
double mask_linf_bound(double kappa, std::size_t d, double delta);

// Synthetic regression task: unit-ball inputs, targets tanh(v^T x) + 0.05 xi
// clipped to [-1, 1], with v and xi drawn from the seed.
Dataset make_synthetic_dataset(std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace maskedntk
