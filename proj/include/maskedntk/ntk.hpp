#pragma once

#include "maskedntk/model.hpp"

namespace maskedntk {

enum class KernelKind { kInfinite, kEmpirical };

struct KernelMatrix {
  Matrix entries;  // n x n, symmetric
  KernelKind kind = KernelKind::kInfinite;

  std::size_t n() const { return entries.rows; }
};

// Infinite-width NTK: H_ij = x_i^T x_j (pi - theta_ij) / (2 pi) with theta_ij
// the angle between x_i and x_j. Rejects zero input vectors.
KernelMatrix h_infinity(const Dataset& data);

// Finite-width kernel at the given weights:
// H_ij = (x_i^T x_j / m) sum_r 1{w_r^T x_i >= 0} 1{w_r^T x_j >= 0}.
KernelMatrix empirical_ntk(const NetworkState& net, const Dataset& data);

// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations.
std::vector<double> sym_eigenvalues(const Matrix& a);

double min_eigenvalue(const KernelMatrix& k);

double kernel_frobenius_distance(const KernelMatrix& k1, const KernelMatrix& k2);

}  // namespace maskedntk
