#include "maskedntk/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "maskedntk/ntk.hpp"

namespace maskedntk {

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

// Per-sample mask-direction geometry: u_r = w_r o x_i, z_r = w_r^T x_i = 1^T u_r.
struct SampleGeometry {
  Matrix u;               // m x d
  std::vector<double> z;  // m
  std::vector<double> s;  // m, kappa * ||u_r||
  std::vector<double> nu;  // m, ||u_r||
};

SampleGeometry sample_geometry(const NetworkState& net, std::span<const double> x, double kappa,
                               std::size_t sample_index, bool require_nonzero) {
  SampleGeometry g;
  g.u = Matrix(net.m, net.d);
  g.z.resize(net.m);
  g.s.resize(net.m);
  g.nu.resize(net.m);
  for (std::size_t r = 0; r < net.m; ++r) {
    const double* w = net.W.row(r);
    double* u = g.u.row(r);
    double z = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < net.d; ++j) {
      u[j] = w[j] * x[j];
      z += u[j];
      sq += u[j] * u[j];
    }
    g.z[r] = z;
    g.nu[r] = std::sqrt(sq);
    g.s[r] = kappa * g.nu[r];
    if (require_nonzero && g.nu[r] == 0.0) throw DegenerateMaskDirectionError(sample_index, r);
  }
  return g;
}

// E[(f(W, x o c) - y)^2] for one sample from its geometry.
double expected_sq_residual(const NetworkState& net, const SampleGeometry& g, double y) {
  const std::size_t m = net.m;
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_sqrt_m = std::sqrt(inv_m);

  double e_f = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double t = g.z[r] / g.s[r];
    e_f += net.signs[r] * (g.s[r] * std_normal_pdf(t) + g.z[r] * std_normal_cdf(t));
  }
  e_f *= inv_sqrt_m;

  double e_f2 = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const UnivariateGaussian gr{g.z[r], g.s[r]};
    e_f2 += degenerate_relu_second_moment(gr);  // r = r' diagonal
    for (std::size_t rp = r + 1; rp < m; ++rp) {
      const double rho =
          std::clamp(dot({g.u.row(r), net.d}, {g.u.row(rp), net.d}) / (g.nu[r] * g.nu[rp]), -1.0,
                     1.0);
      double val;
      if (rho >= 1.0 - kEpsRho) {
        val = relu_product_degenerate(g.z[r], g.s[r], g.z[rp], g.s[rp], +1);
      } else if (rho <= -(1.0 - kEpsRho)) {
        val = relu_product_degenerate(g.z[r], g.s[r], g.z[rp], g.s[rp], -1);
      } else {
        val = relu_product_expectation({g.z[r], g.s[r], g.z[rp], g.s[rp], rho, 0.0, 0.0});
      }
      e_f2 += 2.0 * net.signs[r] * net.signs[rp] * val;
    }
  }
  e_f2 *= inv_m;

  return e_f2 - 2.0 * y * e_f + y * y;
}

std::vector<double> per_sample_expected_losses(const NetworkState& net, const Dataset& data,
                                               double kappa, bool parallel) {
  if (!(kappa > 0.0)) throw std::invalid_argument("expected_loss_exact: kappa must be > 0");
  if (data.d() != net.d) throw std::invalid_argument("expected_loss_exact: dimension mismatch");
  const std::size_t n = data.n();
  std::vector<double> per(n, 0.0);

  if (parallel) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        const SampleGeometry g = sample_geometry(net, data.x(i), kappa, i, true);
        per[i] = 0.5 * expected_sq_residual(net, g, data.targets[i]);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const SampleGeometry g = sample_geometry(net, data.x(i), kappa, i, true);
      per[i] = 0.5 * expected_sq_residual(net, g, data.targets[i]);
    }
  }
  return per;
}

}  // namespace

double smoothed_activation(std::span<const double> w, std::span<const double> x, double kappa) {
  double z = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double u = w[j] * x[j];
    z += u;
    sq += u * u;
  }
  const double s = kappa * std::sqrt(sq);
  if (s == 0.0) return relu(z);
  return z * std_normal_cdf(z / s);
}

double exact_masked_activation_expectation(std::span<const double> w, std::span<const double> x,
                                           double kappa) {
  double z = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double u = w[j] * x[j];
    z += u;
    sq += u * u;
  }
  const double s = kappa * std::sqrt(sq);
  if (s == 0.0) return relu(z);
  const double t = z / s;
  return s * std_normal_pdf(t) + z * std_normal_cdf(t);
}

double smoothed_network(const NetworkState& net, std::span<const double> x, double kappa) {
  double f = 0.0;
  for (std::size_t r = 0; r < net.m; ++r) f += net.signs[r] * smoothed_activation(net.w(r), x, kappa);
  return f / std::sqrt(static_cast<double>(net.m));
}

DefQuantities def_quantities(const NetworkState& net, const Dataset& data, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("def_quantities: kappa must be > 0");
  DefQuantities q;
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double v : data.x(i)) q.b_x = std::max(q.b_x, std::abs(v));
    q.b_y = std::max(q.b_y, std::abs(data.targets[i]));
  }
  for (std::size_t r = 0; r < net.m; ++r) q.r_w = std::max(q.r_w, norm2(net.w(r)));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double* x = data.inputs.row(i);
    for (std::size_t r = 0; r < net.m; ++r) {
      const double* w = net.W.row(r);
      double z = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < net.d; ++j) {
        const double u = w[j] * x[j];
        z += u;
        sq += u * u;
      }
      const double nu = std::sqrt(sq);
      q.r_u = std::max(q.r_u, nu);
      if (nu == 0.0) continue;  // inert pair: deterministic zero preactivation
      const double arg = z / (2.0 * kappa * nu);
      q.phi_max = std::max(q.phi_max, sq_exp_phi(arg));
      q.psi_max = std::max(q.psi_max, abs_sq_exp_psi(arg));
    }
  }
  return q;
}

double data_sigma_max(const Dataset& data) {
  const std::size_t n = data.n(), d = data.d();
  Matrix gram(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += data.inputs.at(i, a) * data.inputs.at(i, b);
      gram.at(a, b) = s;
      gram.at(b, a) = s;
    }
  const std::vector<double> ev = sym_eigenvalues(gram);
  double mx = 0.0;
  for (double v : ev) mx = std::max(mx, v);
  return std::sqrt(std::max(0.0, mx));
}

double expected_loss_exact(const NetworkState& net, const Dataset& data, double kappa) {
  const std::vector<double> per = per_sample_expected_losses(net, data, kappa, true);
  return pairwise_sum(per);
}

double expected_loss_exact_serial(const NetworkState& net, const Dataset& data, double kappa) {
  const std::vector<double> per = per_sample_expected_losses(net, data, kappa, false);
  return pairwise_sum(per);
}

LossBreakdown expected_loss_decomposition(const NetworkState& net, const Dataset& data,
                                          double kappa) {
  const DefQuantities q = def_quantities(net, data, kappa);
  const double sqrt_m = std::sqrt(static_cast<double>(net.m));
  if (!(q.b_y <= 3.0 * sqrt_m * q.r_w))
    throw std::invalid_argument("expected_loss_decomposition: hypothesis B_y <= 3 sqrt(m) R_w fails");

  LossBreakdown out;
  out.exact = expected_loss_exact(net, data, kappa);

  const std::size_t n = data.n(), d = data.d(), m = net.m;
  std::vector<double> weighted(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double fhat = smoothed_network(net, data.x(i), kappa);
    const double res = fhat - data.targets[i];
    out.t1_smoothed += 0.5 * res * res;

    std::fill(weighted.begin(), weighted.end(), 0.0);
    const double* x = data.inputs.row(i);
    for (std::size_t r = 0; r < m; ++r) {
      const double* w = net.W.row(r);
      double z = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double u = w[j] * x[j];
        z += u;
        sq += u * u;
      }
      const double s = kappa * std::sqrt(sq);
      const double gate = s > 0.0 ? std_normal_cdf(z / s) : (z >= 0.0 ? 1.0 : 0.0);
      const double coef = net.signs[r] * gate;
      for (std::size_t j = 0; j < d; ++j) weighted[j] += coef * w[j] * x[j];
    }
    out.t2_regularizer += dot(weighted, weighted);
  }
  out.t2_regularizer *= kappa * kappa / (2.0 * static_cast<double>(m));

  out.residual = out.exact - out.t1_smoothed - out.t2_regularizer;
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  out.residual_bound = mn * (kappa * kappa * q.r_u * q.r_u * q.psi_max * q.psi_max +
                             (kappa * kappa * q.r_u * q.r_u + kappa * q.r_w) * q.phi_max * q.phi_max);
  return out;
}

std::vector<double> conditional_mean(std::span<const double> mu, double kappa,
                                     std::span<const double> u, std::span<const double> v,
                                     double z1, double z2) {
  (void)kappa;
  const double uu = dot(u, u), vv = dot(v, v), uv = dot(u, v);
  const double det = uu * vv - uv * uv;
  if (!(det > 1e-14 * uu * vv))
    throw std::invalid_argument("conditional_mean: u and v are (near-)parallel");
  const double du = z1 - dot(mu, u);
  const double dv = z2 - dot(mu, v);
  const double cu = (vv * du - uv * dv) / det;
  const double cv = (uu * dv - uv * du) / det;
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out[j] = mu[j] + cu * u[j] + cv * v[j];
  return out;
}

Matrix conditional_cov(double kappa, std::span<const double> u, std::span<const double> v) {
  const double uu = dot(u, u), vv = dot(v, v), uv = dot(u, v);
  const double det = uu * vv - uv * uv;
  if (!(det > 1e-14 * uu * vv))
    throw std::invalid_argument("conditional_cov: u and v are (near-)parallel");
  const std::size_t d = u.size();
  // kappa^2 (I - [u v] G^{-1} [u v]^T), the PSD Schur-complement form.
  Matrix cov(d, d);
  const double k2 = kappa * kappa;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      const double proj =
          (vv * u[a] * u[b] - uv * (u[a] * v[b] + v[a] * u[b]) + uu * v[a] * v[b]) / det;
      cov.at(a, b) = k2 * ((a == b ? 1.0 : 0.0) - proj);
    }
  }
  return cov;
}

std::vector<double> expected_indicator_vector(std::span<const double> mu, double kappa,
                                              std::span<const double> u) {
  if (!(kappa > 0.0)) throw std::invalid_argument("expected_indicator_vector: kappa must be > 0");
  const double nu = norm2(u);
  if (nu == 0.0) throw std::invalid_argument("expected_indicator_vector: u must be nonzero");
  const double h = dot(mu, u) / (kappa * nu);
  const double cdf = std_normal_cdf(h);
  const double pdf = std_normal_pdf(h);
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out[j] = mu[j] * cdf + kappa * pdf * u[j] / nu;
  return out;
}

std::vector<double> expected_second_moment_action(std::span<const double> mu, double kappa,
                                                  std::span<const double> u,
                                                  std::span<const double> v) {
  if (!(kappa > 0.0))
    throw std::invalid_argument("expected_second_moment_action: kappa must be > 0");
  const std::size_t d = mu.size();
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0)
    throw std::invalid_argument("expected_second_moment_action: zero direction vector");
  const double rho = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  const double mu_v = dot(mu, v);
  std::vector<double> out(d, 0.0);

  if (rho >= 1.0 - kEpsRho) {
    // Both half-spaces coincide; condition on c^T u only.
    const double h = dot(mu, u) / (kappa * nu);
    const double cdf = std_normal_cdf(h);
    const double pdf = std_normal_pdf(h);
    const double uh_v = dot(u, v) / nu;
    const double k2 = kappa * kappa;
    for (std::size_t j = 0; j < d; ++j) {
      const double uh = u[j] / nu;
      out[j] = cdf * (k2 * v[j] + mu[j] * mu_v) + kappa * pdf * (mu[j] * uh_v + uh * mu_v) -
               k2 * h * pdf * uh_v * uh;
    }
    return out;
  }
  if (rho <= -(1.0 - kEpsRho)) return out;  // opposite half-spaces: null event

  const double a = -dot(mu, u) / (kappa * nu);
  const double b = -mu_v / (kappa * nv);
  const double rr = 1.0 - rho * rho;
  const double sq = std::sqrt(rr);
  const double cross = std::exp(-0.5 * a * a) * std::exp(-0.5 * (b - rho * a) * (b - rho * a) / rr);
  const double e_term = sq * cross / kTwoPi;
  const double f_term = bvn_cdf(-a, -b, rho);
  const double t1 = std::exp(-0.5 * a * a) * std_normal_cdf((rho * a - b) / sq);
  const double t2 = std::exp(-0.5 * b * b) * std_normal_cdf((rho * b - a) / sq);
  const double k2 = kappa * kappa;

  const double coef_u = k2 * nv * (e_term + rho * a * t1 / kSqrt2Pi) + kappa * mu_v * t1 / kSqrt2Pi;
  const double coef_v_hat = k2 * nv * (f_term + b * t2 / kSqrt2Pi) + kappa * mu_v * t2 / kSqrt2Pi;
  const double coef_mu = kappa * nv * (t2 + rho * t1) / kSqrt2Pi + f_term * mu_v;
  for (std::size_t j = 0; j < d; ++j)
    out[j] = coef_u * u[j] / nu + coef_v_hat * v[j] / nv + coef_mu * mu[j];
  return out;
}

std::vector<double> expected_gradient_exact(const NetworkState& net, const Dataset& data,
                                            double kappa, std::size_t r) {
  if (!(kappa > 0.0)) throw std::invalid_argument("expected_gradient_exact: kappa must be > 0");
  if (r >= net.m) throw std::invalid_argument("expected_gradient_exact: row out of range");
  const std::size_t n = data.n(), d = data.d(), m = net.m;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const std::vector<double> ones(d, 1.0);

  Matrix per_sample(n, d);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      const SampleGeometry g = sample_geometry(net, data.x(i), kappa, i, true);
      const double* x = data.inputs.row(i);
      std::vector<double> acc(d, 0.0);
      for (std::size_t rp = 0; rp < m; ++rp) {
        const std::vector<double> s =
            expected_second_moment_action(ones, kappa, {g.u.row(r), d}, {g.u.row(rp), d});
        const double sign = net.signs[rp];
        for (std::size_t j = 0; j < d; ++j) acc[j] += sign * x[j] * s[j];
      }
      const std::vector<double> ind = expected_indicator_vector(ones, kappa, {g.u.row(r), d});
      double* out = per_sample.row(i);
      for (std::size_t j = 0; j < d; ++j)
        out[j] = acc[j] * inv_sqrt_m - data.targets[i] * x[j] * ind[j];
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<double> row(d);
  std::vector<double> col(n);
  const double scale = net.signs[r] * inv_sqrt_m;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = per_sample.at(i, j);
    row[j] = scale * pairwise_sum(col);
  }
  return row;
}

std::vector<double> regularizer_t3(const NetworkState& net, const Dataset& data, double kappa,
                                   std::size_t r) {
  if (kappa < 0.0) throw std::invalid_argument("regularizer_t3: kappa must be >= 0");
  const std::size_t n = data.n(), d = data.d(), m = net.m;
  std::vector<double> out(d, 0.0);
  if (kappa == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (dot(net.w(r), data.x(i)) < 0.0) continue;
    const double* x = data.inputs.row(i);
    for (std::size_t rp = 0; rp < m; ++rp) {
      if (dot(net.w(rp), data.x(i)) < 0.0) continue;
      const double* w = net.W.row(rp);
      const double sign = net.signs[rp];
      for (std::size_t j = 0; j < d; ++j) out[j] += sign * x[j] * x[j] * w[j];
    }
  }
  const double scale = 3.0 * kappa * kappa * net.signs[r] / static_cast<double>(m);
  for (double& v : out) v *= scale;
  return out;
}

GradientDecomposition gradient_decomposition(const NetworkState& net, const Dataset& data,
                                             double kappa, std::size_t r) {
  if (!(kappa <= 1.0)) throw std::invalid_argument("gradient_decomposition: requires kappa <= 1");
  GradientDecomposition out;
  const Matrix cg = clean_gradient(net, data);
  out.clean_grad_row.assign(cg.row(r), cg.row(r) + net.d);
  out.t3_row = regularizer_t3(net, data, kappa, r);
  out.exact_expected_row = expected_gradient_exact(net, data, kappa, r);
  out.residual_row.resize(net.d);
  for (std::size_t j = 0; j < net.d; ++j)
    out.residual_row[j] = out.exact_expected_row[j] - out.clean_grad_row[j] - out.t3_row[j];

  const DefQuantities q = def_quantities(net, data, kappa);
  const double n = static_cast<double>(data.n());
  const double sqrt_d = std::sqrt(static_cast<double>(data.d()));
  const double sqrt_m = std::sqrt(static_cast<double>(net.m));
  const double loss = clean_loss(net, data);
  out.residual_bound =
      (6.0 * n * kappa * kappa * q.b_x * q.b_x * q.r_w + 5.0 * n * kappa * q.r_u * sqrt_d) *
          q.phi_max +
      data_sigma_max(data) / sqrt_m * q.phi_max * std::sqrt(loss) +
      6.0 * n * kappa * q.r_u * q.psi_max;
  return out;
}

EpsilonBounds epsilon_bounds(const NetworkState& net, const Dataset& data, double kappa) {
  const DefQuantities q = def_quantities(net, data, kappa);
  const double sqrt_m = std::sqrt(static_cast<double>(net.m));
  if (!(q.b_y <= 3.0 * sqrt_m * q.r_w))
    throw std::invalid_argument("epsilon_bounds: hypothesis B_y <= 3 sqrt(m) R_w fails");
  const double n = static_cast<double>(data.n());
  const double m = static_cast<double>(net.m);
  const double sqrt_d = std::sqrt(static_cast<double>(data.d()));
  const double k = kappa, k2 = kappa * kappa;
  const double ru2 = q.r_u * q.r_u;

  EpsilonBounds e;
  e.eps1 = 2.0 * m * n * k2 * ru2 + m * n * (k2 * ru2 + k * q.r_w) * q.phi_max * q.phi_max +
           m * n * k2 * (ru2 + 1.0) * q.psi_max * q.psi_max;
  e.eps2 = (n * k2 * q.b_x * q.b_x * q.r_w + n * k * q.r_u * sqrt_d) * q.phi_max +
           n * k * q.r_u * q.psi_max + k2 * sqrt_m * q.b_x * q.b_x * q.r_w;
  e.eps3 = data_sigma_max(data) * q.phi_max / sqrt_m;
  return e;
}

}  // namespace maskedntk
