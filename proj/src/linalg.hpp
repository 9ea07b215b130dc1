#pragma once

#include <span>
#include <vector>

#include "expr.hpp"

namespace qem {

/// Metric evaluation produced a matrix that is not usably positive definite.
class SingularMetricError : public Error {
  using Error::Error;
};

/// Dense row-major n×n matrix; sized for chart dimensions (n ≤ 10 or so).
struct Mat {
  int n = 0;
  std::vector<double> a;

  Mat() = default;
  explicit Mat(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

  static Mat identity(int n);
  double max_abs() const;
  double max_asymmetry() const;
};

/// T(k,i,j); used for Christoffel symbols Γ^k_ij.
struct Tensor3 {
  int n = 0;
  std::vector<double> a;

  Tensor3() = default;
  explicit Tensor3(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_ * n_, 0.0) {}

  double& operator()(int k, int i, int j) {
    return a[(static_cast<std::size_t>(k) * n + i) * n + j];
  }
  double operator()(int k, int i, int j) const {
    return a[(static_cast<std::size_t>(k) * n + i) * n + j];
  }
  double max_abs() const;
};

/// T(l,i,j,k); used for the curvature tensor R^l_ijk and for ∂_m Γ^k_ij.
struct Tensor4 {
  int n = 0;
  std::vector<double> a;

  Tensor4() = default;
  explicit Tensor4(int n_)
      : n(n_), a(static_cast<std::size_t>(n_) * n_ * n_ * n_, 0.0) {}

  double& operator()(int l, int i, int j, int k) {
    return a[((static_cast<std::size_t>(l) * n + i) * n + j) * n + k];
  }
  double operator()(int l, int i, int j, int k) const {
    return a[((static_cast<std::size_t>(l) * n + i) * n + j) * n + k];
  }
  double max_abs() const;
};

/// LDLᵀ factorization of a symmetric positive-definite matrix, without
/// pivoting. Factorization doubles as the SPD check: it throws
/// SingularMetricError when a pivot is non-positive or smaller than
/// 1e-12 times the largest pivot seen.
class Ldlt {
 public:
  static Ldlt compute(const Mat& A);

  int n() const { return l_.n; }
  void solve(std::span<const double> b, std::span<double> x) const;
  Mat inverse() const;
  double det() const;

 private:
  Mat l_;                  // unit lower triangle
  std::vector<double> d_;  // pivots
};

}  // namespace qem
