#pragma once

#include "maskedntk/bivariate.hpp"
#include "maskedntk/model.hpp"

namespace maskedntk {

// Data/weight scale quantities entering the residual bounds. phi_max/psi_max
// are maxima of phi, psi at argument w_r^T x_i / (2 kappa ||w_r o x_i||).
struct DefQuantities {
  double b_x = 0.0;      // max_i ||x_i||_inf
  double b_y = 0.0;      // max_i |y_i|
  double r_w = 0.0;      // max_r ||w_r||_2
  double r_u = 0.0;      // max_{r,i} ||w_r o x_i||_2
  double phi_max = 0.0;
  double psi_max = 0.0;
};

// Expected surrogate loss split into the smoothed-network term, the
// kappa^2 regularizer, and the bounded remainder.
struct LossBreakdown {
  double exact = 0.0;           // E_C[L_C(W)]
  double t1_smoothed = 0.0;     // 1/2 sum_i (fhat(W,x_i) - y_i)^2
  double t2_regularizer = 0.0;  // kappa^2/(2m) sum_i || sum_r a_r u_{i,r} Phi1(...) ||^2
  double residual = 0.0;        // exact - t1 - t2
  double residual_bound = 0.0;  // mn (kappa^2 R_u^2 psi_max^2 + (kappa^2 R_u^2 + kappa R_w) phi_max^2)
};

// Expected surrogate gradient row split into clean gradient, kappa^2
// regularizer term, and bounded remainder.
struct GradientDecomposition {
  std::vector<double> clean_grad_row;
  std::vector<double> t3_row;
  std::vector<double> exact_expected_row;
  std::vector<double> residual_row;  // exact - clean - t3
  double residual_bound = 0.0;
};

// Thrown when some ||w_r o x_i|| vanishes where a closed form divides by it.
struct DegenerateMaskDirectionError : std::runtime_error {
  std::size_t sample;
  std::size_t neuron;
  DegenerateMaskDirectionError(std::size_t i, std::size_t r)
      : std::runtime_error("degenerate mask direction: ||w_r o x_i|| = 0 at sample " +
                           std::to_string(i) + ", neuron " + std::to_string(r)),
        sample(i),
        neuron(r) {}
};

// sigma_hat(w, x) = w^T x * Phi1(w^T x / (kappa ||w o x||)). Falls back to
// ReLU(w^T x) when kappa ||w o x|| = 0.
double smoothed_activation(std::span<const double> w, std::span<const double> x, double kappa);

// E_c[ReLU(w^T (x o c))] = s phiN(z/s) + z Phi1(z/s), z = w^T x, s = kappa ||w o x||.
double exact_masked_activation_expectation(std::span<const double> w, std::span<const double> x,
                                           double kappa);

// fhat(W, x) = (1/sqrt(m)) sum_r a_r sigma_hat(w_r, x).
double smoothed_network(const NetworkState& net, std::span<const double> x, double kappa);

DefQuantities def_quantities(const NetworkState& net, const Dataset& data, double kappa);

// Largest singular value of the n x d data matrix.
double data_sigma_max(const Dataset& data);

// Closed-form E_C[L_C(W)]; Theta(n m^2) coupled-moment evaluations.
double expected_loss_exact(const NetworkState& net, const Dataset& data, double kappa);
double expected_loss_exact_serial(const NetworkState& net, const Dataset& data, double kappa);

// Requires B_y <= 3 sqrt(m) R_w.
LossBreakdown expected_loss_decomposition(const NetworkState& net, const Dataset& data,
                                          double kappa);

// E[c | c^T u = z1, c^T v = z2] for c ~ N(mu, kappa^2 I); u, v must not be parallel.
std::vector<double> conditional_mean(std::span<const double> mu, double kappa,
                                     std::span<const double> u, std::span<const double> v,
                                     double z1, double z2);

// Cov(c | c^T u, c^T v) = kappa^2 (I - P_span{u,v}); symmetric PSD.
Matrix conditional_cov(double kappa, std::span<const double> u, std::span<const double> v);

// E[c 1{c^T u >= 0}] for c ~ N(mu, kappa^2 I).
std::vector<double> expected_indicator_vector(std::span<const double> mu, double kappa,
                                              std::span<const double> u);

// E[c c^T 1{c^T u >= 0, c^T v >= 0}] v, exact. Near-parallel directions route
// to the single-indicator second moment; antiparallel directions give 0.
std::vector<double> expected_second_moment_action(std::span<const double> mu, double kappa,
                                                  std::span<const double> u,
                                                  std::span<const double> v);

// Closed-form E_C[grad_{w_r} L_C(W)].
std::vector<double> expected_gradient_exact(const NetworkState& net, const Dataset& data,
                                            double kappa, std::size_t r);

// (3 kappa^2 a_r / m) sum_i sum_{r'} a_{r'} Diag(x_i)^2 w_{r'} 1{w_r^T x_i >= 0} 1{w_{r'}^T x_i >= 0}.
std::vector<double> regularizer_t3(const NetworkState& net, const Dataset& data, double kappa,
                                   std::size_t r);

// Requires kappa <= 1.
GradientDecomposition gradient_decomposition(const NetworkState& net, const Dataset& data,
                                             double kappa, std::size_t r);

struct EpsilonBounds {
  double eps1 = 0.0;
  double eps2 = 0.0;
  double eps3 = 0.0;
};

// Leading-constant-1 evaluations of the expected-loss / expected-gradient
// error levels. Requires B_y <= 3 sqrt(m) R_w.
EpsilonBounds epsilon_bounds(const NetworkState& net, const Dataset& data, double kappa);

}  // namespace maskedntk
