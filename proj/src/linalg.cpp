#include "maglab/linalg.hpp"

#include <lapacke.h>

#include <stdexcept>

#include "maglab/errors.hpp"

namespace maglab {

namespace {
// Plain Thomas algorithm; the matrices here are diagonally dominant.
Eigen::VectorXd thomas(std::vector<double> a, std::vector<double> b, std::vector<double> c, Eigen::VectorXd d) {
  const int n = static_cast<int>(b.size());
  for (int i = 1; i < n; ++i) {
    const double m = a[i] / b[i - 1];
    b[i] -= m * c[i - 1];
    d[i] -= m * d[i - 1];
  }
  Eigen::VectorXd x(n);
  x[n - 1] = d[n - 1] / b[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
  return x;
}
}  // namespace

Eigen::VectorXd cyclic_tridiag_solve(const std::vector<double>& sub, const std::vector<double>& diag,
                                     const std::vector<double>& sup, const Eigen::VectorXd& rhs) {
  const int n = static_cast<int>(diag.size());
  // Sherman-Morrison on the corner entries sub[0] (0, n-1) and sup[n-1] (n-1, 0).
  const double gamma = -diag[0];
  std::vector<double> a(sub), b(diag), c(sup);
  a[0] = 0.0;
  c[n - 1] = 0.0;
  b[0] -= gamma;
  b[n - 1] -= sup[n - 1] * sub[0] / gamma;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  u[0] = gamma;
  u[n - 1] = sup[n - 1];
  const Eigen::VectorXd x = thomas(a, b, c, rhs);
  const Eigen::VectorXd q = thomas(a, b, c, u);
  const double vx = x[0] + sub[0] / gamma * x[n - 1];
  const double vq = q[0] + sub[0] / gamma * q[n - 1];
  return x - q * (vx / (1.0 + vq));
}

HermitianBand::HermitianBand(int n, int kd) : n_(n), kd_(kd), ab_(static_cast<size_t>(kd + 1) * n) {}

void HermitianBand::add(int i, int j, std::complex<double> v) {
  if (i > j) {
    std::swap(i, j);
    v = std::conj(v);
  }
  if (j - i > kd_) throw std::logic_error("HermitianBand: entry outside band");
  ab_[static_cast<size_t>(j) * (kd_ + 1) + (kd_ + i - j)] += (i == j) ? std::complex<double>(v.real(), 0.0) : v;
}

Eigen::VectorXd HermitianBand::eigenvalues() const {
  std::vector<lapack_complex_double> ab(ab_.size());
  for (size_t k = 0; k < ab_.size(); ++k) ab[k] = lapack_make_complex_double(ab_[k].real(), ab_[k].imag());
  Eigen::VectorXd w(n_);
  const lapack_int info =
      LAPACKE_zhbev(LAPACK_COL_MAJOR, 'N', 'U', n_, kd_, ab.data(), kd_ + 1, w.data(), nullptr, 1);
  if (info != 0) throw NumericalError("eigensolver", "zhbev failed");
  return w;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A) {
  Eigen::MatrixXd a = A;
  Eigen::VectorXd w(A.rows());
  const lapack_int n = static_cast<lapack_int>(A.rows());
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'U', n, a.data(), n, w.data());
  if (info != 0) throw NumericalError("eigensolver", "dsyevd failed");
  return w;
}

}  // namespace maglab
