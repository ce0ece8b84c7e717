#pragma once

#include "maskedntk/gaussmath.hpp"

namespace maskedntk {

// Correlations closer than this to +-1 are routed to the degenerate
// (perfectly correlated) branches; the coupled closed forms divide by 1-rho^2.
inline constexpr double kEpsRho = 1e-7;

// Parameters of a correlated Gaussian pair z1 ~ N(mu1, kappa1^2),
// z2 ~ N(mu2, kappa2^2) with corr(z1, z2) = rho, truncated at z1 >= a, z2 >= b.
struct BivariateMomentParams {
  double mu1, kappa1;
  double mu2, kappa2;
  double rho;
  double a = 0.0;
  double b = 0.0;
};

// Truncated moments of a standard Gaussian pair over {z1 >= a, z2 >= b}.
struct CoupledMoments {
  double e_z1;    // E[z1 1]
  double e_z2;    // E[z2 1]
  double e_z1sq;  // E[z1^2 1]
  double e_z2sq;  // E[z2^2 1]
  double e_z1z2;  // E[z1 z2 1]
  double prob;    // P(z1 >= a, z2 >= b) = Phi2(-a, -b, rho)
};

// Owen's T function T(h, a). Exposed because tests pin it against quadrature.
double owens_t(double h, double a);

// Standard bivariate normal CDF Phi2(a, b, rho) = P(Z1 <= a, Z2 <= b).
double bvn_cdf(double a, double b, double rho);

// Gaussian copula C(a, b, rho) = Phi2(a, b, rho) - Phi1(a) Phi1(b).
double gaussian_copula(double a, double b, double rho);

// Bound (|rho|/4) exp(-(a^2+b^2)/4) on |gaussian_copula(a, b, rho)|.
double copula_bound(double a, double b, double rho);

// All coupled truncated moments of a standard pair; requires |rho| < 1 - kEpsRho.
CoupledMoments coupled_standard_moments(double a, double b, double rho);

// E[z1 z2 1{z1 >= a, z2 >= b}] for the general pair. Requires |rho| < 1 - kEpsRho;
// callers hold the degenerate direction and dispatch to the branches below.
double relu_product_expectation(const BivariateMomentParams& p);

// E[z1 z2 1{z1 >= 0, z2 >= 0}] when z2 = mu2 + sign*(kappa2/kappa1)*(z1 - mu1)
// exactly (rho = +-1). Used for near-parallel mask directions.
double relu_product_degenerate(double mu1, double kappa1, double mu2, double kappa2, int sign);

// E[sigma(z)^2] = E[z^2 1{z >= 0}] for z ~ N(mu, kappa^2); the rho = 1 diagonal.
double degenerate_relu_second_moment(const UnivariateGaussian& g);

// Bound 2 exp(-min(a,b)^2/2) on |Phi2(a,b,rho) - 1{a>=0, b>=0}| (signed min).
double indicator_joint_gap_bound(double a, double b);

}  // namespace maskedntk
