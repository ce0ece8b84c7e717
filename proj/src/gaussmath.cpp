#include "maskedntk/gaussmath.hpp"

#include <cmath>
#include <stdexcept>

namespace maskedntk {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double sq_exp_phi(double x) { return std::exp(-x * x); }

double abs_sq_exp_psi(double x) { return std::abs(x) * std::exp(-x * x); }

namespace {

void require_positive_kappa(const UnivariateGaussian& g) {
  if (!(g.kappa > 0.0)) throw std::invalid_argument("UnivariateGaussian: kappa must be > 0");
}

}  // namespace

double truncated_first_moment(const UnivariateGaussian& g, double a) {
  require_positive_kappa(g);
  const double alpha = (a - g.mu) / g.kappa;
  return g.kappa * std_normal_pdf(alpha) + g.mu * std_normal_cdf(-alpha);
}

double truncated_second_moment(const UnivariateGaussian& g, double a) {
  require_positive_kappa(g);
  const double alpha = (a - g.mu) / g.kappa;
  return (g.kappa * g.kappa + g.mu * g.mu) * std_normal_cdf(-alpha) +
         g.kappa * (a + g.mu) * std_normal_pdf(alpha);
}

double cdf_indicator_gap_bound(double alpha) { return std::exp(-0.5 * alpha * alpha); }

}  // namespace maskedntk
