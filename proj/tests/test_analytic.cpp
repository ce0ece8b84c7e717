#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskedntk/analytic.hpp"
#include "maskedntk/mc.hpp"
#include "maskedntk/ntk.hpp"
#include "oracle_helpers.hpp"

using namespace maskedntk;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
  std::vector<double> v(d);
  for (double& t : v) t = scale * rng.next_normal();
  return v;
}

}  // namespace

TEST_CASE("smoothed activation point values") {
  // z = 0 gives exactly 0.
  const std::vector<double> w0{1.0, -1.0};
  const std::vector<double> x0{0.5, 0.5};
  CHECK(smoothed_activation(w0, x0, 0.7) == 0.0);

  // z = 0.77 with kappa ||w o x|| = 0.2.
  const std::vector<double> w{1.0, 1.0};
  std::vector<double> x(2);
  // Solve x1 + x2 = 0.77, x1^2 + x2^2 = 0.04 has no real solution; instead fix
  // u = w o x directly with two coordinates.
  const double z = 0.77, s = 0.2;
  const double t = std::sqrt(s * s / 2.0 - z * z / 4.0 >= 0 ? 0.0 : 0.0);
  (void)t;
  // Use u = (z/2 + q, z/2 - q) with 2 q^2 = s^2 - z^2/2 when possible; here
  // z^2/2 > s^2, so take a 16-dimensional spread instead.
  const std::size_t d = 16;
  std::vector<double> wd(d, 1.0), xd(d, z / static_cast<double>(d));
  const double spread = std::sqrt(s * s - z * z / static_cast<double>(d));
  for (std::size_t j = 0; j < d; ++j)
    xd[j] += (j % 2 == 0 ? spread : -spread) / std::sqrt(static_cast<double>(d));
  CHECK(smoothed_activation(wd, xd, 1.0) ==
        doctest::Approx(0.77 * std_normal_cdf(0.77 / 0.2)).epsilon(1e-12));
  CHECK(smoothed_activation(wd, xd, 1.0) == doctest::Approx(0.76995).epsilon(1e-4));

  // kappa -> 0 with negative preactivation collapses to 0.
  const std::vector<double> wneg{1.0, 0.0};
  const std::vector<double> xneg{-1.0, 0.0};
  CHECK(smoothed_activation(wneg, xneg, 1e-9) == doctest::Approx(0.0).epsilon(1e-12));
  // Degenerate ||w o x|| = 0 falls back to ReLU.
  const std::vector<double> worth{0.0, 1.0};
  const std::vector<double> xorth{1.0, 0.0};
  CHECK(smoothed_activation(worth, xorth, 0.5) == 0.0);
}

TEST_CASE("exact masked activation expectation") {
  const std::size_t d = 16;
  const std::vector<double> w(d, 1.0);
  // z = 0: expectation is s / sqrt(2 pi).
  std::vector<double> x0(d, 0.0);
  const double s0 = 0.9;
  for (std::size_t j = 0; j < d; ++j)
    x0[j] = (j % 2 == 0 ? s0 : -s0) / std::sqrt(static_cast<double>(d));
  CHECK(exact_masked_activation_expectation(w, x0, 1.0) ==
        doctest::Approx(s0 * kInvSqrt2Pi).epsilon(1e-12));

  // Deep negative tail.
  std::vector<double> xneg(d, -5.0 / static_cast<double>(d));
  CHECK(exact_masked_activation_expectation(w, xneg, 0.02) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // MC agreement across a kappa range at z ~ 0.77 (the exact form carries the
  // density term sigma_hat misses).
  Rng rng(3001);
  std::vector<double> xr(d);
  for (double& v : xr) v = 0.25 * rng.next_normal();
  std::uint64_t seed = 4000;
  for (double kappa : {0.01, 0.05, 0.1, 0.2}) {
    const double exact = exact_masked_activation_expectation(w, xr, kappa);
    const McScalar mc = mc_activation_expectation(w, xr, kappa, 1000000, ++seed);
    CHECK(std::abs(exact - mc.mean) <= 4.0 * mc.std_error);
    CHECK(exact >= smoothed_activation(w, xr, kappa) - 1e-15);
  }
}

TEST_CASE("smoothed activation is monotone in z past its minimum") {
  // z Phi(z/s) has its global minimum where Phi(t) = -t phiN(t), at
  // t = z/s ~ -0.7518; it is nondecreasing to the right of that point.
  const std::size_t d = 16;
  const std::vector<double> w(d, 1.0);
  const double s = 1.0;
  double prev = -1e300;
  for (int i = 0; i <= 100; ++i) {
    const double z = -0.7518 + 4.7 * i / 100.0;
    std::vector<double> x(d, z / static_cast<double>(d));
    const double spread =
        std::sqrt(std::max(0.0, s * s - z * z / static_cast<double>(d)));
    for (std::size_t j = 0; j < d; ++j)
      x[j] += (j % 2 == 0 ? spread : -spread) / std::sqrt(static_cast<double>(d));
    const double v = smoothed_activation(w, x, 1.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("smoothed network limits and loop oracle") {
  const Dataset data = make_synthetic_dataset(3, 5, 77);
  const NetworkState net = init_network(6, 5, 0.8, 78, 79);

  CHECK(smoothed_network(net, data.x(0), 1e-12) ==
        doctest::Approx(forward(net, data.x(0))).epsilon(1e-10));

  double manual = 0.0;
  for (std::size_t r = 0; r < net.m; ++r)
    manual += net.signs[r] * smoothed_activation(net.w(r), data.x(1), 0.3);
  manual /= std::sqrt(6.0);
  CHECK(smoothed_network(net, data.x(1), 0.3) == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("smoothed-vs-clean network gap bound") {
  Rng rng(81);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t s = 300 + trial;
    const std::size_t d = 2 + rng.next_below(6);
    const std::size_t m = 2 + rng.next_below(8);
    const Dataset data = make_synthetic_dataset(2, d, s);
    const NetworkState net = init_network(m, d, 0.9, s + 1, s + 2);
    const double kappa = 0.05 + 0.5 * rng.next_unit();
    const DefQuantities q = def_quantities(net, data, kappa);
    const double bound = 2.0 * std::sqrt(static_cast<double>(m)) * kappa * q.r_u * q.psi_max;
    for (std::size_t i = 0; i < 2; ++i) {
      const double gap =
          std::abs(smoothed_network(net, data.x(i), kappa) - forward(net, data.x(i)));
      CHECK(gap <= bound + 1e-12);
    }
  }
}

TEST_CASE("def_quantities single-pair example") {
  Dataset data;
  data.inputs = Matrix(1, 2);
  data.inputs.at(0, 0) = 1.0;
  data.targets = {0.3};
  NetworkState net;
  net.m = 1;
  net.d = 2;
  net.tau = 1.0;
  net.W = Matrix(1, 2);
  net.W.at(0, 0) = 2.0;
  net.signs = {1.0};

  const DefQuantities q = def_quantities(net, data, 1.0);
  CHECK(q.b_x == 1.0);
  CHECK(q.b_y == 0.3);
  CHECK(q.r_w == 2.0);
  CHECK(q.r_u == 2.0);
  CHECK(q.phi_max == doctest::Approx(std::exp(-0.25)).epsilon(1e-14));
  CHECK(q.psi_max == doctest::Approx(0.5 * std::exp(-0.25)).epsilon(1e-14));
}

TEST_CASE("def_quantities respects the psi range") {
  Rng rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t s = 900 + trial;
    const Dataset data = make_synthetic_dataset(4, 5, s);
    const NetworkState net = init_network(5, 5, 0.7, s + 1, s + 2);
    const double kappa = 0.05 + rng.next_unit();
    const DefQuantities q = def_quantities(net, data, kappa);
    CHECK(q.psi_max <= 1.0 / std::sqrt(2.0 * std::exp(1.0)) + 1e-15);
    CHECK(q.phi_max <= 1.0 + 1e-15);
    CHECK(q.r_u <= q.b_x * q.r_w * std::sqrt(static_cast<double>(net.d)) + 1e-12);
  }
}

TEST_CASE("expected loss: single-neuron collapse") {
  // m = 1, n = 1 reduces to univariate truncated moments of the preactivation.
  Dataset data;
  data.inputs = Matrix(1, 3);
  data.inputs.at(0, 0) = 0.6;
  data.inputs.at(0, 1) = -0.3;
  data.inputs.at(0, 2) = 0.2;
  data.targets = {0.4};
  NetworkState net;
  net.m = 1;
  net.d = 3;
  net.tau = 1.0;
  net.W = Matrix(1, 3);
  net.W.at(0, 0) = 0.9;
  net.W.at(0, 1) = 0.4;
  net.W.at(0, 2) = -1.1;
  net.signs = {1.0};
  const double kappa = 0.45;

  std::vector<double> u(3);
  for (std::size_t j = 0; j < 3; ++j) u[j] = net.W.at(0, j) * data.inputs.at(0, j);
  const double z = u[0] + u[1] + u[2];
  const double s = kappa * norm2(u);
  const UnivariateGaussian g{z, s};
  const double expect =
      0.5 * (degenerate_relu_second_moment(g) - 2.0 * 0.4 * truncated_first_moment(g, 0.0) +
             0.16);
  CHECK(expected_loss_exact(net, data, kappa) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("expected loss: small-kappa limit is the clean loss") {
  const Dataset data = make_synthetic_dataset(5, 4, 111);
  const NetworkState net = init_network(6, 4, 0.8, 112, 113);
  const double clean = clean_loss(net, data);
  const double exact = expected_loss_exact(net, data, 1e-4);
  CHECK(std::abs(exact - clean) <= 1e-4 * std::max(1.0, clean));
}

TEST_CASE("expected loss matches MC over mask batches") {
  const Dataset data = make_synthetic_dataset(4, 3, 121);
  const NetworkState net = init_network(6, 3, 0.8, 122, 123);
  const double kappa = 0.3;
  const double exact = expected_loss_exact(net, data, kappa);
  const McScalar mc = mc_masked_loss(net, data, kappa, 1000000, 9);
  CHECK(std::abs(exact - mc.mean) <= 4.0 * mc.std_error);
  CHECK(expected_loss_exact_serial(net, data, kappa) == exact);
}

TEST_CASE("expected loss reports degenerate directions") {
  Dataset data;
  data.inputs = Matrix(2, 2);
  data.inputs.at(0, 0) = 1.0;
  data.inputs.at(1, 1) = 1.0;
  data.targets = {0.0, 0.0};
  NetworkState net;
  net.m = 1;
  net.d = 2;
  net.tau = 1.0;
  net.W = Matrix(1, 2);
  net.W.at(0, 0) = 1.0;  // w o x_1 = 0
  net.signs = {1.0};
  CHECK_THROWS_AS(expected_loss_exact(net, data, 0.3), DegenerateMaskDirectionError);
}

TEST_CASE("loss decomposition invariants") {
  const Dataset data = make_synthetic_dataset(6, 4, 131);
  const NetworkState net = init_network(7, 4, 0.8, 132, 133);
  for (double kappa : {0.05, 0.2, 0.5}) {
    const LossBreakdown b = expected_loss_decomposition(net, data, kappa);
    CHECK(b.t1_smoothed >= 0.0);
    CHECK(b.t2_regularizer >= 0.0);
    CHECK(std::abs(b.residual) <= b.residual_bound);
    CHECK(b.exact ==
          doctest::Approx(b.t1_smoothed + b.t2_regularizer + b.residual).epsilon(1e-12));
  }
  // Every bound term carries kappa, so the limit collapses to the clean loss.
  const LossBreakdown tiny = expected_loss_decomposition(net, data, 1e-7);
  CHECK(tiny.t1_smoothed == doctest::Approx(clean_loss(net, data)).epsilon(1e-6));
  CHECK(tiny.t2_regularizer <= 1e-10);
  CHECK(tiny.residual_bound <= 1e-4);
}

TEST_CASE("loss decomposition hypothesis check") {
  Dataset data = make_synthetic_dataset(3, 4, 141);
  data.targets = {50.0, 50.0, 50.0};
  data.target_bound = 50.0;
  const NetworkState net = init_network(4, 4, 0.01, 142, 143);
  CHECK_THROWS_AS(expected_loss_decomposition(net, data, 0.2), std::invalid_argument);
}

TEST_CASE("t2 equals the tangent-feature quadratic form") {
  const Dataset data = make_synthetic_dataset(5, 4, 151);
  const NetworkState net = init_network(6, 4, 0.8, 152, 153);
  const double kappa = 0.35;
  const LossBreakdown b = expected_loss_decomposition(net, data, kappa);

  // Independent assembly: coordinate-wise tangent features
  // g_{i,j,r} = a_r x_{i,j} Phi1(z_{i,r} / (kappa ||u_{i,r}||)) / sqrt(m),
  // summed as (kappa^2/2) sum_i sum_j (sum_r W_{r,j} g_{i,j,r})^2.
  const std::size_t n = data.n(), d = data.d(), m = net.m;
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        double z = 0.0, sq = 0.0;
        for (std::size_t jj = 0; jj < d; ++jj) {
          const double u = net.W.at(r, jj) * data.inputs.at(i, jj);
          z += u;
          sq += u * u;
        }
        const double gate = std_normal_cdf(z / (kappa * std::sqrt(sq)));
        acc += net.W.at(r, j) * net.signs[r] * data.inputs.at(i, j) * gate /
               std::sqrt(static_cast<double>(m));
      }
      quad += acc * acc;
    }
  }
  quad *= 0.5 * kappa * kappa;
  CHECK(b.t2_regularizer == doctest::Approx(quad).epsilon(1e-8));
}

TEST_CASE("conditional mean") {
  Rng rng(161);
  const std::size_t d = 5;
  const std::vector<double> mu = random_vec(rng, d);
  const std::vector<double> u = random_vec(rng, d);
  const std::vector<double> v = random_vec(rng, d);

  // Conditioning at the mean returns the mean.
  const std::vector<double> at_mean = conditional_mean(mu, 0.7, u, v, dot(mu, u), dot(mu, v));
  for (std::size_t j = 0; j < d; ++j) CHECK(at_mean[j] == doctest::Approx(mu[j]).epsilon(1e-12));

  // Orthonormal directions give unit regression coefficients.
  std::vector<double> e1(d, 0.0), e2(d, 0.0);
  e1[0] = 1.0;
  e2[1] = 1.0;
  const std::vector<double> ortho = conditional_mean(mu, 0.7, e1, e2, dot(mu, e1) + 2.0,
                                                     dot(mu, e2) - 1.0);
  CHECK(ortho[0] == doctest::Approx(mu[0] + 2.0).epsilon(1e-12));
  CHECK(ortho[1] == doctest::Approx(mu[1] - 1.0).epsilon(1e-12));
  CHECK(ortho[2] == doctest::Approx(mu[2]).epsilon(1e-12));

  // Regression-coefficient oracle via the 2x2 normal equations.
  const double z1 = dot(mu, u) + 0.8, z2 = dot(mu, v) - 0.4;
  const std::vector<double> got = conditional_mean(mu, 0.7, u, v, z1, z2);
  const double uu = dot(u, u), vv = dot(v, v), uv = dot(u, v);
  const double det = uu * vv - uv * uv;
  const double c1 = (vv * 0.8 - uv * -0.4) / det;
  const double c2 = (uu * -0.4 - uv * 0.8) / det;
  for (std::size_t j = 0; j < d; ++j)
    CHECK(got[j] == doctest::Approx(mu[j] + c1 * u[j] + c2 * v[j]).epsilon(1e-12));

  std::vector<double> upar = u;
  CHECK_THROWS_AS(conditional_mean(mu, 0.7, u, upar, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("conditional covariance") {
  const std::size_t d = 5;
  std::vector<double> e1(d, 0.0), e2(d, 0.0);
  e1[0] = 1.0;
  e2[1] = 1.0;
  const double kappa = 0.6;
  const Matrix cov = conditional_cov(kappa, e1, e2);
  // Conditioning kills the span and leaves kappa^2 on the complement.
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const double expect = (a == b && a >= 2) ? kappa * kappa : 0.0;
      CHECK(cov.at(a, b) == doctest::Approx(expect).epsilon(1e-13));
    }

  // d = 2 is fully conditioned.
  const std::vector<double> u2{0.8, -0.3}, v2{0.2, 0.9};
  const Matrix cov2 = conditional_cov(kappa, u2, v2);
  for (double t : cov2.data) CHECK(t == doctest::Approx(0.0).epsilon(1e-12));

  // Schur-complement oracle on a random 5-D instance, plus PSD.
  Rng rng(171);
  const std::vector<double> u = random_vec(rng, d);
  const std::vector<double> v = random_vec(rng, d);
  const Matrix got = conditional_cov(kappa, u, v);
  const double uu = dot(u, u), vv = dot(v, v), uv = dot(u, v);
  const double det = uu * vv - uv * uv;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const double proj =
          (vv * u[a] * u[b] - uv * (u[a] * v[b] + v[a] * u[b]) + uu * v[a] * v[b]) / det;
      const double expect = kappa * kappa * ((a == b ? 1.0 : 0.0) - proj);
      CHECK(got.at(a, b) == doctest::Approx(expect).epsilon(1e-10));
    }
  const std::vector<double> ev = sym_eigenvalues(got);
  for (double lam : ev) CHECK(lam >= -1e-12);
}

TEST_CASE("expected indicator vector") {
  const std::size_t d = 4;
  std::vector<double> mu(d, 1.0);

  // mu^T u = 0: value is mu/2 + kappa u / (sqrt(2 pi) ||u||).
  std::vector<double> u0{1.0, -1.0, 1.0, -1.0};
  const double kappa = 0.6;
  const std::vector<double> v0 = expected_indicator_vector(mu, kappa, u0);
  for (std::size_t j = 0; j < d; ++j)
    CHECK(v0[j] == doctest::Approx(0.5 + kappa * u0[j] / (kSqrt2Pi * 2.0)).epsilon(1e-12));

  // Saturated indicator returns the mean.
  std::vector<double> usat(d, 1.0);  // mu^T u = 4 = 20 kappa ||u|| with kappa = 0.1
  const std::vector<double> vsat = expected_indicator_vector(mu, 0.1, usat);
  for (std::size_t j = 0; j < d; ++j) CHECK(vsat[j] == doctest::Approx(1.0).epsilon(1e-10));

  // MC componentwise.
  Rng rng(181);
  const std::vector<double> u = random_vec(rng, d);
  const std::vector<double> closed = expected_indicator_vector(mu, 0.5, u);
  const McVector mc = mc_expectation_vec(19, 2000000, d, [&](Rng& r, std::span<double> out) {
    std::vector<double> c(d);
    for (std::size_t j = 0; j < d; ++j) c[j] = 1.0 + 0.5 * r.next_normal();
    const bool on = dot(c, u) >= 0.0;
    for (std::size_t j = 0; j < d; ++j) out[j] = on ? c[j] : 0.0;
  });
  for (std::size_t j = 0; j < d; ++j)
    CHECK(std::abs(closed[j] - mc.mean[j]) <= 4.0 * mc.std_error[j]);
}

TEST_CASE("expected second moment action: saturation and symmetry") {
  const std::size_t d = 4;
  std::vector<double> mu(d, 1.0);
  // kappa -> 0 with both means positive saturates to mu (mu^T v).
  std::vector<double> u{1.0, 0.5, 0.25, 0.8}, v{0.5, 1.0, 0.7, 0.1};
  const std::vector<double> sat = expected_second_moment_action(mu, 1e-3, u, v);
  const double mu_v = dot(mu, v);
  for (std::size_t j = 0; j < d; ++j) CHECK(sat[j] == doctest::Approx(mu_v).epsilon(1e-6));

  // mu = 0, orthonormal u, v: closed symmetry case against MC.
  std::vector<double> zero(d, 0.0);
  std::vector<double> e1(d, 0.0), e2(d, 0.0);
  e1[0] = 1.0;
  e2[1] = 1.0;
  const std::vector<double> got = expected_second_moment_action(zero, 1.0, e1, e2);
  CHECK(got[0] == doctest::Approx(1.0 / kTwoPi).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(got[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("expected second moment action against MC") {
  const std::size_t d = 4;
  Rng rng(191);
  std::vector<double> mu(d, 1.0);
  std::uint64_t seed = 23;
  for (int trial = 0; trial < 4; ++trial) {
    const std::vector<double> u = random_vec(rng, d);
    const std::vector<double> v = random_vec(rng, d);
    const double kappa = 0.3 + 0.5 * rng.next_unit();
    const std::vector<double> closed = expected_second_moment_action(mu, kappa, u, v);
    const McVector mc =
        mc_expectation_vec(++seed, 2000000, d, [&](Rng& r, std::span<double> out) {
          std::vector<double> c(d);
          for (std::size_t j = 0; j < d; ++j) c[j] = 1.0 + kappa * r.next_normal();
          const bool on = dot(c, u) >= 0.0 && dot(c, v) >= 0.0;
          const double cv = dot(c, v);
          for (std::size_t j = 0; j < d; ++j) out[j] = on ? c[j] * cv : 0.0;
        });
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(closed[j] - mc.mean[j]) <= 4.0 * mc.std_error[j]);
  }
}

TEST_CASE("expected second moment action: degenerate branches") {
  const std::size_t d = 3;
  std::vector<double> mu(d, 1.0);
  std::vector<double> u{0.4, -0.2, 0.8};
  std::vector<double> v_almost{0.4000001, -0.2, 0.8};
  std::vector<double> v_anti{-0.4, 0.2, -0.8};
  const double kappa = 0.5;

  // Same-direction fallback agrees with MC.
  const std::vector<double> par = expected_second_moment_action(mu, kappa, u, v_almost);
  const McVector mc = mc_expectation_vec(31, 2000000, d, [&](Rng& r, std::span<double> out) {
    std::vector<double> c(d);
    for (std::size_t j = 0; j < d; ++j) c[j] = 1.0 + kappa * r.next_normal();
    const bool on = dot(c, u) >= 0.0 && dot(c, v_almost) >= 0.0;
    const double cv = dot(c, v_almost);
    for (std::size_t j = 0; j < d; ++j) out[j] = on ? c[j] * cv : 0.0;
  });
  for (std::size_t j = 0; j < d; ++j)
    CHECK(std::abs(par[j] - mc.mean[j]) <= 4.0 * mc.std_error[j]);

  // Antiparallel: the joint event is null.
  const std::vector<double> anti = expected_second_moment_action(mu, kappa, u, v_anti);
  for (double t : anti) CHECK(t == 0.0);
}

TEST_CASE("expected gradient: small-kappa limit and MC") {
  const Dataset data = make_synthetic_dataset(3, 4, 201);
  const NetworkState net = init_network(5, 4, 0.8, 202, 203);

  const Matrix cg = clean_gradient(net, data);
  const std::vector<double> tiny = expected_gradient_exact(net, data, 1e-4, 0);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    num += (tiny[j] - cg.at(0, j)) * (tiny[j] - cg.at(0, j));
    den += cg.at(0, j) * cg.at(0, j);
  }
  CHECK(std::sqrt(num) <= 1e-3 * std::max(1.0, std::sqrt(den)));

  const double kappa = 0.3;
  const std::vector<double> exact = expected_gradient_exact(net, data, kappa, 0);
  const McVector mc = mc_masked_gradient(net, data, kappa, 0, 1000000, 37);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(std::abs(exact[j] - mc.mean[j]) <= 4.0 * mc.std_error[j]);
}

TEST_CASE("expected gradient of a zero-residual network is near zero") {
  Dataset data = make_synthetic_dataset(3, 4, 211);
  const NetworkState net = init_network(5, 4, 0.8, 212, 213);
  for (std::size_t i = 0; i < 3; ++i) data.targets[i] = forward(net, data.x(i));
  data.target_bound = 10.0;
  const std::vector<double> g = expected_gradient_exact(net, data, 1e-4, 1);
  CHECK(norm2(g) <= 1e-3);
}

TEST_CASE("regularizer t3") {
  const Dataset data = make_synthetic_dataset(4, 5, 221);
  const NetworkState net = init_network(6, 5, 0.8, 222, 223);

  const std::vector<double> zero = regularizer_t3(net, data, 0.0, 0);
  for (double t : zero) CHECK(t == 0.0);

  // Loop oracle.
  const double kappa = 0.4;
  const std::vector<double> got = regularizer_t3(net, data, kappa, 2);
  std::vector<double> expect(5, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    if (dot(net.w(2), data.x(i)) < 0.0) continue;
    for (std::size_t rp = 0; rp < 6; ++rp) {
      if (dot(net.w(rp), data.x(i)) < 0.0) continue;
      for (std::size_t j = 0; j < 5; ++j)
        expect[j] += net.signs[rp] * data.inputs.at(i, j) * data.inputs.at(i, j) *
                     net.W.at(rp, j);
    }
  }
  for (std::size_t j = 0; j < 5; ++j) {
    expect[j] *= 3.0 * kappa * kappa * net.signs[2] / 6.0;
    CHECK(got[j] == doctest::Approx(expect[j]).epsilon(1e-12));
  }

  // Exact kappa^2 homogeneity.
  const std::vector<double> doubled = regularizer_t3(net, data, 2.0 * kappa, 2);
  for (std::size_t j = 0; j < 5; ++j)
    CHECK(doubled[j] == doctest::Approx(4.0 * got[j]).epsilon(1e-15));

  // All indicators off.
  NetworkState neg = net;
  for (double& w : neg.W.data) w = -std::abs(w) - 0.1;
  Dataset pos = data;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) pos.inputs.at(i, j) = std::abs(pos.inputs.at(i, j)) + 0.01;
  // Renormalize into the unit ball.
  for (std::size_t i = 0; i < 4; ++i) {
    const double nx = norm2(pos.x(i));
    for (std::size_t j = 0; j < 5; ++j) pos.inputs.at(i, j) /= (nx * 1.01);
  }
  const std::vector<double> off = regularizer_t3(neg, pos, 0.3, 0);
  for (double t : off) CHECK(t == 0.0);
}

TEST_CASE("gradient decomposition invariants") {
  const Dataset data = make_synthetic_dataset(5, 4, 231);
  const NetworkState net = init_network(6, 4, 0.6, 232, 233);
  for (double kappa : {0.05, 0.3, 1.0}) {
    const GradientDecomposition g = gradient_decomposition(net, data, kappa, 0);
    CHECK(norm2(g.residual_row) <= g.residual_bound);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(g.exact_expected_row[j] ==
            doctest::Approx(g.clean_grad_row[j] + g.t3_row[j] + g.residual_row[j])
                .epsilon(1e-12));
  }
  CHECK_THROWS_AS(gradient_decomposition(net, data, 1.5, 0), std::invalid_argument);

  // t3 norm scales as kappa^2 within 1%.
  const GradientDecomposition a = gradient_decomposition(net, data, 1e-3, 0);
  const GradientDecomposition b = gradient_decomposition(net, data, 1e-2, 0);
  const double ra = norm2(a.t3_row) / 1e-6;
  const double rb = norm2(b.t3_row) / 1e-4;
  CHECK(ra == doctest::Approx(rb).epsilon(0.01));
}

TEST_CASE("epsilon bounds") {
  const Dataset data = make_synthetic_dataset(5, 4, 241);
  const NetworkState net = init_network(6, 4, 0.7, 242, 243);

  // Formula oracle recomputed by hand.
  const double kappa = 0.25;
  const EpsilonBounds e = epsilon_bounds(net, data, kappa);
  const DefQuantities q = def_quantities(net, data, kappa);
  const double n = 5.0, m = 6.0, sd = 2.0, sm = std::sqrt(6.0);
  const double ru2 = q.r_u * q.r_u;
  const double eps1 = 2.0 * m * n * kappa * kappa * ru2 +
                      m * n * (kappa * kappa * ru2 + kappa * q.r_w) * q.phi_max * q.phi_max +
                      m * n * kappa * kappa * (ru2 + 1.0) * q.psi_max * q.psi_max;
  const double eps2 =
      (n * kappa * kappa * q.b_x * q.b_x * q.r_w + n * kappa * q.r_u * sd) * q.phi_max +
      n * kappa * q.r_u * q.psi_max + kappa * kappa * sm * q.b_x * q.b_x * q.r_w;
  CHECK(e.eps1 == doctest::Approx(eps1).epsilon(1e-12));
  CHECK(e.eps2 == doctest::Approx(eps2).epsilon(1e-12));
  CHECK(e.eps3 == doctest::Approx(data_sigma_max(data) * q.phi_max / sm).epsilon(1e-12));

  // kappa -> 0 sends eps1, eps2 to zero.
  const EpsilonBounds tiny = epsilon_bounds(net, data, 1e-9);
  CHECK(tiny.eps1 <= 1e-8);
  CHECK(tiny.eps2 <= 1e-6);

  // Polynomial growth structure: doubling kappa at most quadruples eps2 with
  // the phi/psi factors frozen (they only shrink the value further).
  CHECK(e.eps1 >= 0.0);
  CHECK(e.eps2 >= 0.0);
  CHECK(e.eps3 >= 0.0);
}

TEST_CASE("data sigma_max matches a power-iteration oracle") {
  const Dataset data = make_synthetic_dataset(8, 5, 251);
  Matrix gram(5, 5);
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < 8; ++i) s += data.inputs.at(i, a) * data.inputs.at(i, b);
      gram.at(a, b) = s;
    }
  // lambda_max(G) = -lambda_min(-G), with the power-iteration oracle.
  Matrix neg(5, 5);
  for (std::size_t i = 0; i < 25; ++i) neg.data[i] = -gram.data[i];
  const double lam_max = -oracle::min_eigenvalue_power(neg);
  CHECK(data_sigma_max(data) == doctest::Approx(std::sqrt(lam_max)).epsilon(1e-8));
}
