#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace maglab {

// Solves a cyclic tridiagonal system: sub[i] couples i to i-1, sup[i] couples i to i+1
// (indices mod n). Requires n >= 3.
Eigen::VectorXd cyclic_tridiag_solve(const std::vector<double>& sub, const std::vector<double>& diag,
                                     const std::vector<double>& sup, const Eigen::VectorXd& rhs);

// Hermitian band matrix in LAPACK upper storage: entry (i, j), j >= i, j - i <= kd.
class HermitianBand {
 public:
  HermitianBand(int n, int kd);
  void add(int i, int j, std::complex<double> v);  // adds v at (i, j) and conj at (j, i)
  Eigen::VectorXd eigenvalues() const;              // ascending
  int size() const { return n_; }

 private:
  int n_, kd_;
  std::vector<std::complex<double>> ab_;
};

// Sorted eigenvalues of a dense real symmetric matrix.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A);

}  // namespace maglab
