#include "linalg.hpp"

#include <cmath>

namespace qem {

Mat Mat::identity(int n) {
  Mat m(n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double Mat::max_abs() const {
  double r = 0.0;
  for (double v : a) r = std::max(r, std::abs(v));
  return r;
}

double Mat::max_asymmetry() const {
  double r = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      r = std::max(r, std::abs((*this)(i, j) - (*this)(j, i)));
  return r;
}

double Tensor3::max_abs() const {
  double r = 0.0;
  for (double v : a) r = std::max(r, std::abs(v));
  return r;
}

double Tensor4::max_abs() const {
  double r = 0.0;
  for (double v : a) r = std::max(r, std::abs(v));
  return r;
}

Ldlt Ldlt::compute(const Mat& A) {
  const int n = A.n;
  Ldlt f;
  f.l_ = Mat::identity(n);
  f.d_.assign(n, 0.0);
  constexpr double kPivotRatio = 1e-12;
  double max_pivot = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = A(j, j);
    for (int k = 0; k < j; ++k) d -= f.l_(j, k) * f.l_(j, k) * f.d_[k];
    if (!(d > 0.0))
      throw SingularMetricError("matrix is not positive definite (pivot " +
                                std::to_string(j) + " non-positive)");
    max_pivot = std::max(max_pivot, d);
    if (d <= kPivotRatio * max_pivot)
      throw SingularMetricError("matrix is numerically singular (pivot " +
                                std::to_string(j) + " collapsed)");
    f.d_[j] = d;
    for (int i = j + 1; i < n; ++i) {
      double s = A(i, j);
      for (int k = 0; k < j; ++k) s -= f.l_(i, k) * f.l_(j, k) * f.d_[k];
      f.l_(i, j) = s / d;
    }
  }
  return f;
}

void Ldlt::solve(std::span<const double> b, std::span<double> x) const {
  const int n = l_.n;
  // L y = b
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l_(i, k) * x[k];
    x[i] = s;
  }
  // D z = y
  for (int i = 0; i < n; ++i) x[i] /= d_[i];
  // Lᵀ w = z
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < n; ++k) s -= l_(k, i) * x[k];
    x[i] = s;
  }
}

Mat Ldlt::inverse() const {
  const int n = l_.n;
  Mat inv(n);
  std::vector<double> e(n, 0.0), col(n, 0.0);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    solve(e, col);
    for (int i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  // Symmetrize: the inverse of a symmetric matrix is symmetric, and the
  // downstream curvature formulas rely on exact symmetry of g^{ij}.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  }
  return inv;
}

double Ldlt::det() const {
  double d = 1.0;
  for (double v : d_) d *= v;
  return d;
}

}  // namespace qem
