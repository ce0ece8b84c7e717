#include "maskedntk/bivariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace maskedntk {

namespace {

// 48-point Gauss-Legendre rule on [-1, 1]. The Owen integrand is analytic on
// [0, 1] with poles at +-i, so this rule is converged to double precision.
constexpr int kGlOrder = 24;  // symmetric half; 48 nodes total
constexpr double kGlNode[kGlOrder] = {
    3.2380170962869367e-02, 9.7004699209462697e-02, 1.6122235606889171e-01,
    2.2476379039468905e-01, 2.8736248735545555e-01, 3.4875588629216075e-01,
    4.0868648199071672e-01, 4.6690290475095841e-01, 5.2316097472223300e-01,
    5.7722472608397268e-01, 6.2886739677651360e-01, 6.7787237963266389e-01,
    7.2403413092381463e-01, 7.6715903251574036e-01, 8.0706620402944262e-01,
    8.4358826162439349e-01, 8.7657202027424785e-01, 9.0587913671556963e-01,
    9.3138669070655433e-01, 9.5298770316043091e-01, 9.7059159254624727e-01,
    9.8412458372282685e-01, 9.9353017226635076e-01, 9.9877100725242607e-01};
constexpr double kGlWeight[kGlOrder] = {
    6.4737696812683682e-02, 6.4466164435949838e-02, 6.3924238584647949e-02,
    6.3114192286253784e-02, 6.2039423159892464e-02, 6.0704439165893583e-02,
    5.9114839698395483e-02, 5.7277292100402930e-02, 5.5199503699984054e-02,
    5.2890189485193487e-02, 5.0359035553854278e-02, 4.7616658492490284e-02,
    4.4674560856694100e-02, 4.1545082943464554e-02, 3.8241351065830674e-02,
    3.4777222564770657e-02, 3.1167227832798339e-02, 2.7426509708356882e-02,
    2.3570760839324092e-02, 1.9616160457355297e-02, 1.5579315722942928e-02,
    1.1477234579234974e-02, 7.3275539012764923e-03, 3.1533460523091796e-03};

// T(h, a) for 0 <= a <= 1 by Gauss-Legendre on [0, a].
double owens_t_core(double h, double a) {
  if (a == 0.0) return 0.0;
  const double hh = 0.5 * h * h;
  const double half = 0.5 * a;
  double s = 0.0;
  for (int i = 0; i < kGlOrder; ++i) {
    const double t1 = half * (1.0 + kGlNode[i]);
    const double t2 = half * (1.0 - kGlNode[i]);
    s += kGlWeight[i] * (std::exp(-hh * (1.0 + t1 * t1)) / (1.0 + t1 * t1) +
                         std::exp(-hh * (1.0 + t2 * t2)) / (1.0 + t2 * t2));
  }
  return half * s / kTwoPi;
}

}  // namespace

double owens_t(double h, double a) {
  h = std::abs(h);
  double sign = 1.0;
  if (a < 0.0) {
    sign = -1.0;
    a = -a;
  }
  if (a == 0.0) return 0.0;
  if (std::isinf(a)) return sign * 0.5 * std_normal_cdf(-h);
  if (a <= 1.0) return sign * owens_t_core(h, a);
  // Owen's reduction T(h,a) = (Phi(h)+Phi(ah))/2 - Phi(h)Phi(ah) - T(ah, 1/a).
  const double ah = a * h;
  const double ph = std_normal_cdf(h);
  const double pah = std_normal_cdf(ah);
  return sign * (0.5 * (ph + pah) - ph * pah - owens_t_core(ah, 1.0 / a));
}

double bvn_cdf(double a, double b, double rho) {
  if (std::abs(rho) > 1.0) throw std::invalid_argument("bvn_cdf: |rho| must be <= 1");
  if (!(std::isfinite(rho))) throw std::invalid_argument("bvn_cdf: rho must be finite");
  if (rho == 0.0) return std_normal_cdf(a) * std_normal_cdf(b);
  if (rho >= 1.0) return std_normal_cdf(std::min(a, b));
  if (rho <= -1.0) return std::max(0.0, std_normal_cdf(a) + std_normal_cdf(b) - 1.0);
  if (a == 0.0 && b == 0.0) return 0.25 + std::asin(rho) / kTwoPi;

  const double rr = std::sqrt((1.0 - rho) * (1.0 + rho));
  double ta, tb;
  if (a == 0.0) {
    ta = (b >= 0.0) ? 0.25 : -0.25;
  } else {
    ta = owens_t(a, (b - rho * a) / (a * rr));
  }
  if (b == 0.0) {
    tb = (a >= 0.0) ? 0.25 : -0.25;
  } else {
    tb = owens_t(b, (a - rho * b) / (b * rr));
  }
  double beta = 0.0;
  if (a * b < 0.0 || (a * b == 0.0 && a + b < 0.0)) beta = 0.5;
  double v = 0.5 * (std_normal_cdf(a) + std_normal_cdf(b)) - ta - tb - beta;
  return std::clamp(v, 0.0, 1.0);
}

double gaussian_copula(double a, double b, double rho) {
  if (rho == 0.0) return 0.0;
  return bvn_cdf(a, b, rho) - std_normal_cdf(a) * std_normal_cdf(b);
}

double copula_bound(double a, double b, double rho) {
  return 0.25 * std::abs(rho) * std::exp(-0.25 * (a * a + b * b));
}

CoupledMoments coupled_standard_moments(double a, double b, double rho) {
  if (std::abs(rho) >= 1.0 - kEpsRho)
    throw std::invalid_argument("coupled_standard_moments: |rho| too close to 1");
  const double rr = 1.0 - rho * rho;
  const double sq = std::sqrt(rr);
  const double t1 = std::exp(-0.5 * a * a) * std_normal_cdf((rho * a - b) / sq);
  const double t2 = std::exp(-0.5 * b * b) * std_normal_cdf((rho * b - a) / sq);
  // Cross exponent factored as exp(-a^2/2) exp(-(b-rho a)^2/(2 rr)) to avoid
  // overflow in the quadratic form.
  const double cross =
      std::exp(-0.5 * a * a) * std::exp(-0.5 * (b - rho * a) * (b - rho * a) / rr);
  const double prob = bvn_cdf(-a, -b, rho);

  CoupledMoments m;
  m.prob = prob;
  m.e_z1 = (t1 + rho * t2) / kSqrt2Pi;
  m.e_z2 = (t2 + rho * t1) / kSqrt2Pi;
  m.e_z1sq = rho * sq * cross / kTwoPi + prob + (a * t1 + rho * rho * b * t2) / kSqrt2Pi;
  m.e_z2sq = rho * sq * cross / kTwoPi + prob + (b * t2 + rho * rho * a * t1) / kSqrt2Pi;
  m.e_z1z2 = sq * cross / kTwoPi + rho * prob + rho * (a * t1 + b * t2) / kSqrt2Pi;
  return m;
}

double relu_product_expectation(const BivariateMomentParams& p) {
  if (!(p.kappa1 > 0.0) || !(p.kappa2 > 0.0))
    throw std::invalid_argument("relu_product_expectation: kappa must be > 0");
  const double ah = (p.a - p.mu1) / p.kappa1;
  const double bh = (p.b - p.mu2) / p.kappa2;
  const CoupledMoments m = coupled_standard_moments(ah, bh, p.rho);
  return p.kappa1 * p.kappa2 * m.e_z1z2 + p.mu1 * p.mu2 * m.prob + p.kappa1 * p.mu2 * m.e_z1 +
         p.kappa2 * p.mu1 * m.e_z2;
}

double relu_product_degenerate(double mu1, double kappa1, double mu2, double kappa2, int sign) {
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0))
    throw std::invalid_argument("relu_product_degenerate: kappa must be > 0");
  const UnivariateGaussian g{mu1, kappa1};
  const double beta = kappa2 / kappa1;
  if (sign > 0) {
    // z2 = alpha + beta z1; joint indicator is z1 >= max(0, -alpha/beta).
    const double alpha = mu2 - beta * mu1;
    const double t = alpha >= 0.0 ? 0.0 : -alpha / beta;
    return beta * truncated_second_moment(g, t) + alpha * truncated_first_moment(g, t);
  }
  // z2 = alpha - beta z1; joint indicator is 0 <= z1 <= alpha/beta.
  const double alpha = mu2 + beta * mu1;
  if (alpha <= 0.0) return 0.0;
  const double s = alpha / beta;
  return alpha * (truncated_first_moment(g, 0.0) - truncated_first_moment(g, s)) -
         beta * (truncated_second_moment(g, 0.0) - truncated_second_moment(g, s));
}

double degenerate_relu_second_moment(const UnivariateGaussian& g) {
  return truncated_second_moment(g, 0.0);
}

double indicator_joint_gap_bound(double a, double b) {
  const double m = std::min(a, b);
  return 2.0 * std::exp(-0.5 * m * m);
}

}  // namespace maskedntk
