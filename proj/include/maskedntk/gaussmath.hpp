#pragma once

#include "maskedntk/common.hpp"

namespace maskedntk {

// Scalar Gaussian with mean mu and standard deviation kappa > 0.
struct UnivariateGaussian {
  double mu;
  double kappa;
};

// Standard normal CDF, computed through erfc for full relative accuracy in
// both tails. Saturates cleanly at 0/1 for large |x|.
double std_normal_cdf(double x);

// Standard normal density.
double std_normal_pdf(double x);

// phi(x) = exp(-x^2), range (0, 1].
double sq_exp_phi(double x);

// psi(x) = |x| * exp(-x^2), range [0, 1/sqrt(2e)].
double abs_sq_exp_psi(double x);

// E[z * 1{z >= a}] for z ~ N(mu, kappa^2). Evaluated in the standardized
// variable to stay stable when |mu/kappa| is large.
double truncated_first_moment(const UnivariateGaussian& g, double a);

// E[z^2 * 1{z >= a}] for z ~ N(mu, kappa^2).
double truncated_second_moment(const UnivariateGaussian& g, double a);

// Upper bound exp(-alpha^2/2) on |Phi1(alpha) - 1{alpha >= 0}|.
double cdf_indicator_gap_bound(double alpha);

}  // namespace maskedntk
