#include "maskedntk/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maskedntk {

KernelMatrix h_infinity(const Dataset& data) {
  const std::size_t n = data.n();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm2(data.x(i));
    if (norms[i] == 0.0) throw std::invalid_argument("h_infinity: zero input vector");
  }
  KernelMatrix k;
  k.kind = KernelKind::kInfinite;
  k.entries = Matrix(n, n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    k.entries.at(i, i) = 0.5 * norms[i] * norms[i];  // theta = 0 on the diagonal
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ip = dot(data.x(i), data.x(j));
      const double cosang = std::clamp(ip / (norms[i] * norms[j]), -1.0, 1.0);
      const double theta = std::acos(cosang);
      const double v = ip * (kPi - theta) / kTwoPi;
      k.entries.at(i, j) = v;
      k.entries.at(j, i) = v;
    }
  }
  return k;
}

KernelMatrix empirical_ntk(const NetworkState& net, const Dataset& data) {
  if (data.d() != net.d) throw std::invalid_argument("empirical_ntk: dimension mismatch");
  const std::size_t n = data.n(), m = net.m;
  // Precompute activation patterns once; entries then reduce to popcount-style sums.
  Matrix active(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r)
      active.at(i, r) = dot(net.w(r), data.x(i)) >= 0.0 ? 1.0 : 0.0;

  KernelMatrix k;
  k.kind = KernelKind::kEmpirical;
  k.entries = Matrix(n, n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double shared = dot({active.row(i), m}, {active.row(j), m});
      const double v = dot(data.x(i), data.x(j)) * shared / static_cast<double>(m);
      k.entries.at(i, j) = v;
      k.entries.at(j, i) = v;
    }
  }
  return k;
}

std::vector<double> sym_eigenvalues(const Matrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("sym_eigenvalues: matrix must be square");
  const std::size_t n = a.rows;
  Matrix w = a;
  // Symmetrize and check finiteness.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(w.at(i, j)))
        throw std::invalid_argument("sym_eigenvalues: non-finite entry");
      const double v = 0.5 * (w.at(i, j) + w.at(j, i));
      w.at(i, j) = v;
      w.at(j, i) = v;
    }

  double frob_sq = 0.0;
  for (double v : w.data) frob_sq += v * v;
  const double off_tol = 1e-28 * std::max(1.0, frob_sq);

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += w.at(p, q) * w.at(p, q);
    if (off < off_tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = w.at(p, q);
        if (apq == 0.0) continue;
        const double app = w.at(p, p);
        const double aqq = w.at(q, q);
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = w.at(k, p);
          const double akq = w.at(k, q);
          w.at(k, p) = c * akp - s * akq;
          w.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = w.at(p, k);
          const double aqk = w.at(q, k);
          w.at(p, k) = c * apk - s * aqk;
          w.at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = w.at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double min_eigenvalue(const KernelMatrix& k) {
  const std::vector<double> ev = sym_eigenvalues(k.entries);
  return ev.front();
}

double kernel_frobenius_distance(const KernelMatrix& k1, const KernelMatrix& k2) {
  if (k1.n() != k2.n()) throw std::invalid_argument("kernel_frobenius_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < k1.entries.data.size(); ++i) {
    const double dlt = k1.entries.data[i] - k2.entries.data[i];
    s += dlt * dlt;
  }
  return std::sqrt(s);
}

}  // namespace maskedntk
