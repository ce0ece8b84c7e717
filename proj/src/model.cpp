#include "maskedntk/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maskedntk {

namespace {

constexpr double kCollinearTol = 1e-12;

double masked_pre(const NetworkState& net, std::span<const double> x, std::span<const double> c,
                  std::size_t r) {
  const double* w = net.W.row(r);
  double s = 0.0;
  for (std::size_t j = 0; j < net.d; ++j) s += w[j] * x[j] * c[j];
  return s;
}

}  // namespace

DatasetValidation validate_dataset(const Dataset& data) {
  DatasetValidation v;
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  if (n < 1 || d < 1) {
    v.ok = false;
    v.issue = DatasetIssue::kNormViolation;
    v.detail = "empty dataset";
    return v;
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm2(data.x(i));
    if (norms[i] == 0.0) {
      v.ok = false;
      v.issue = DatasetIssue::kZeroVector;
      v.index_i = i;
      v.detail = "zero input vector";
      return v;
    }
    if (norms[i] > 1.0 + 1e-12) {
      v.ok = false;
      v.issue = DatasetIssue::kNormViolation;
      v.index_i = i;
      v.detail = "input norm exceeds 1";
      return v;
    }
    if (std::abs(data.targets[i]) > data.target_bound + 1e-12) {
      v.ok = false;
      v.issue = DatasetIssue::kTargetViolation;
      v.index_i = i;
      v.detail = "target exceeds declared bound";
      return v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = std::abs(dot(data.x(i), data.x(j))) / (norms[i] * norms[j]);
      if (c > 1.0 - kCollinearTol) {
        v.ok = false;
        v.issue = DatasetIssue::kCollinearPair;
        v.index_i = i;
        v.index_j = j;
        v.detail = "collinear input pair";
        return v;
      }
    }
  }
  return v;
}

NetworkState init_network(std::size_t m, std::size_t d, double tau, std::uint64_t sign_seed,
                          std::uint64_t weight_seed) {
  if (m < 1 || d < 1) throw std::invalid_argument("init_network: m and d must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("init_network: tau must be > 0");
  NetworkState net;
  net.m = m;
  net.d = d;
  net.tau = tau;
  net.W = Matrix(m, d);
  net.signs.resize(m);
  Rng wr = Rng::derive(weight_seed, {0x57});
  for (double& w : net.W.data) w = tau * wr.next_normal();
  Rng sr = Rng::derive(sign_seed, {0xA5});
  for (double& a : net.signs) a = (sr.next_u64() & 1ull) ? 1.0 : -1.0;
  return net;
}

double forward(const NetworkState& net, std::span<const double> x) {
  if (x.size() != net.d) throw std::invalid_argument("forward: dimension mismatch");
  double s = 0.0;
  for (std::size_t r = 0; r < net.m; ++r) {
    const double z = dot(net.w(r), x);
    if (z > 0.0) s += net.signs[r] * z;
  }
  return s / std::sqrt(static_cast<double>(net.m));
}

MaskBatch sample_masks(std::size_t n, std::size_t d, double kappa, std::uint64_t seed) {
  if (kappa < 0.0) throw std::invalid_argument("sample_masks: kappa must be >= 0");
  MaskBatch b;
  b.kappa = kappa;
  b.seed = seed;
  b.masks = Matrix(n, d, 1.0);
  if (kappa > 0.0) {
    Rng rng = Rng::derive(seed, {0xC0});
    for (double& c : b.masks.data) c = 1.0 + kappa * rng.next_normal();
  }
  return b;
}

MaskBatch sample_step_masks(std::size_t n, std::size_t d, double kappa, std::uint64_t base_seed,
                            std::uint64_t step, std::uint64_t worker) {
  if (kappa < 0.0) throw std::invalid_argument("sample_step_masks: kappa must be >= 0");
  MaskBatch b;
  b.kappa = kappa;
  b.seed = base_seed;
  b.masks = Matrix(n, d, 1.0);
  if (kappa > 0.0) {
    Rng rng = Rng::derive(base_seed, {step, worker});
    for (double& c : b.masks.data) c = 1.0 + kappa * rng.next_normal();
  }
  return b;
}

MaskBatch sample_step_masks_rows(std::size_t n, std::size_t d, double kappa,
                                 std::uint64_t base_seed, std::uint64_t step, std::uint64_t worker,
                                 std::span<const std::size_t> rows) {
  if (kappa < 0.0) throw std::invalid_argument("sample_step_masks_rows: kappa must be >= 0");
  MaskBatch b;
  b.kappa = kappa;
  b.seed = base_seed;
  b.masks = Matrix(n, d, 1.0);
  if (kappa > 0.0) {
    Rng rng = Rng::derive(base_seed, {step, worker});
    for (std::size_t i : rows) {
      double* c = b.masks.row(i);
      for (std::size_t j = 0; j < d; ++j) c[j] = 1.0 + kappa * rng.next_normal();
    }
  }
  return b;
}

namespace {

void check_shapes(const NetworkState& net, const Dataset& data, const MaskBatch& masks) {
  if (data.d() != net.d || masks.masks.cols != net.d || masks.masks.rows != data.n())
    throw std::invalid_argument("shape mismatch between network, dataset, and masks");
}

double masked_loss_impl(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                        std::span<const std::size_t> idx) {
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(net.m));
  std::vector<double> per_sample(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const std::size_t i = idx[t];
    double f = 0.0;
    for (std::size_t r = 0; r < net.m; ++r) {
      const double z = masked_pre(net, data.x(i), masks.c(i), r);
      if (z > 0.0) f += net.signs[r] * z;
    }
    f *= inv_sqrt_m;
    const double res = f - data.targets[i];
    per_sample[t] = 0.5 * res * res;
  }
  return pairwise_sum(per_sample);
}

// One gradient row; used unchanged by the serial and OpenMP drivers so the
// two are bit-identical.
void gradient_row(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                  std::span<const std::size_t> idx, std::span<const double> residuals,
                  std::size_t r, double* out) {
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(net.m));
  const std::size_t d = net.d;
  for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const std::size_t i = idx[t];
    const double z = masked_pre(net, data.x(i), masks.c(i), r);
    if (z <= 0.0) continue;
    const double coef = residuals[t];
    const double* x = data.inputs.row(i);
    const double* c = masks.masks.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] += coef * x[j] * c[j];
  }
  const double scale = net.signs[r] * inv_sqrt_m;
  for (std::size_t j = 0; j < d; ++j) out[j] *= scale;
}

Matrix masked_gradient_impl(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                            std::span<const std::size_t> idx, bool parallel) {
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(net.m));
  std::vector<double> residuals(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const std::size_t i = idx[t];
    double f = 0.0;
    for (std::size_t r = 0; r < net.m; ++r) {
      const double z = masked_pre(net, data.x(i), masks.c(i), r);
      if (z > 0.0) f += net.signs[r] * z;
    }
    residuals[t] = f * inv_sqrt_m - data.targets[i];
  }
  Matrix grad(net.m, net.d);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < static_cast<long long>(net.m); ++r)
      gradient_row(net, data, masks, idx, residuals, static_cast<std::size_t>(r), grad.row(r));
  } else {
    for (std::size_t r = 0; r < net.m; ++r)
      gradient_row(net, data, masks, idx, residuals, r, grad.row(r));
  }
  return grad;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

double masked_loss(const NetworkState& net, const Dataset& data, const MaskBatch& masks) {
  check_shapes(net, data, masks);
  return masked_loss_impl(net, data, masks, all_indices(data.n()));
}

Matrix masked_gradient(const NetworkState& net, const Dataset& data, const MaskBatch& masks) {
  check_shapes(net, data, masks);
  return masked_gradient_impl(net, data, masks, all_indices(data.n()), true);
}

Matrix masked_gradient_serial(const NetworkState& net, const Dataset& data,
                              const MaskBatch& masks) {
  check_shapes(net, data, masks);
  return masked_gradient_impl(net, data, masks, all_indices(data.n()), false);
}

double clean_loss(const NetworkState& net, const Dataset& data) {
  MaskBatch ones = sample_masks(data.n(), data.d(), 0.0, 0);
  return masked_loss(net, data, ones);
}

Matrix clean_gradient(const NetworkState& net, const Dataset& data) {
  MaskBatch ones = sample_masks(data.n(), data.d(), 0.0, 0);
  return masked_gradient(net, data, ones);
}

double masked_loss_subset(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                          std::span<const std::size_t> idx) {
  check_shapes(net, data, masks);
  return masked_loss_impl(net, data, masks, idx);
}

Matrix masked_gradient_subset(const NetworkState& net, const Dataset& data, const MaskBatch& masks,
                              std::span<const std::size_t> idx) {
  check_shapes(net, data, masks);
  return masked_gradient_impl(net, data, masks, idx, true);
}

double mask_linf_bound(double kappa, std::size_t d, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("mask_linf_bound: delta in (0,1)");
  if (d < 1) throw std::invalid_argument("mask_linf_bound: d >= 1");
  if (kappa < 0.0) throw std::invalid_argument("mask_linf_bound: kappa >= 0");
  return 1.0 + kappa * std::sqrt(2.0 * std::log(2.0 * static_cast<double>(d) / delta));
}

Dataset make_synthetic_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Dataset data;
  data.inputs = Matrix(n, d);
  data.targets.resize(n);
  data.target_bound = 1.0;
  Rng xr = Rng::derive(seed, {0xD0});
  Rng vr = Rng::derive(seed, {0xD1});
  Rng er = Rng::derive(seed, {0xD2});
  std::vector<double> v(d);
  for (double& vi : v) vi = vr.next_normal();
  for (std::size_t i = 0; i < n; ++i) {
    double* x = data.inputs.row(i);
    for (std::size_t j = 0; j < d; ++j) x[j] = xr.next_normal();
    // Scale into the unit ball with a spread of radii so no two rows collide.
    const double nx = norm2({x, d});
    const double radius = 0.2 + 0.79 * xr.next_unit();
    for (std::size_t j = 0; j < d; ++j) x[j] *= radius / nx;
    const double clean = std::tanh(dot({x, d}, v));
    data.targets[i] = std::clamp(clean + 0.05 * er.next_normal(), -1.0, 1.0);
  }
  return data;
}

}  // namespace maskedntk
