#pragma once

#include <span>
#include <vector>

#include "expr.hpp"
#include "linalg.hpp"

namespace qem {

/// Symmetric d×d matrix of expressions; only the upper triangle is stored,
/// so the two index orders always read the same entry.
class SymExprMatrix {
 public:
  explicit SymExprMatrix(int dim)
      : dim_(dim), entries_(static_cast<std::size_t>(dim) * (dim + 1) / 2) {}

  int dim() const { return dim_; }
  const Expr& at(int i, int j) const { return entries_[index(i, j)]; }
  Expr& at(int i, int j) { return entries_[index(i, j)]; }

  static SymExprMatrix zero(int dim);
  static SymExprMatrix diag(std::vector<Expr> d);

 private:
  std::size_t index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * dim_ - static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int dim_;
  std::vector<Expr> entries_;
};

/// Riemannian metric in one chart: g_ij as expressions in the coordinates.
struct MetricField {
  Chart chart;
  SymExprMatrix g;

  MetricField(Chart chart_, SymExprMatrix g_);
  int dim() const { return chart.dim(); }
};

/// Vector field in one chart: components X^i as expressions.
struct VectorField {
  Chart chart;
  std::vector<Expr> components;

  VectorField(Chart chart_, std::vector<Expr> components_);
  int dim() const { return chart.dim(); }
};

/// Covariant 2-tensor evaluated at a point.
struct Tensor2At {
  int dim = 0;
  std::vector<double> point;
  std::vector<double> v;  // row-major d×d

  Tensor2At() = default;
  Tensor2At(int d, std::span<const double> p)
      : dim(d), point(p.begin(), p.end()), v(static_cast<std::size_t>(d) * d, 0.0) {}

  double& operator()(int i, int j) { return v[static_cast<std::size_t>(i) * dim + j]; }
  double operator()(int i, int j) const { return v[static_cast<std::size_t>(i) * dim + j]; }
  double max_abs() const;
  double max_asymmetry() const;
};

/// Metric, potential f, dimension parameter m ∈ (0,∞], and the constant λ of
/// the generalized Einstein condition Ric + ∇²f − (1/m)df⊗df = λg. At
/// m = ∞ the (1/m) term is dropped at the term level, which is the gradient
/// Ricci soliton equation.
struct QEStructure {
  MetricField metric;
  Expr f;
  double m;
  double lambda;

  QEStructure(MetricField metric_, Expr f_, double m_, double lambda_);
  bool m_infinite() const;
};

/// Metric, inverse, Christoffel symbols and their first derivatives at p.
/// dgamma(m,k,i,j) = ∂_m Γ^k_ij; dg[k](i,j) = ∂_k g_ij.
struct ConnectionData {
  int d = 0;
  std::vector<double> point;
  Mat g;
  Mat ginv;
  std::vector<Mat> dg;
  Tensor3 gamma;
  Tensor4 dgamma;
};

ConnectionData connection_at(const MetricField& g, std::span<const double> p);

/// Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij), indexed (k,i,j).
Tensor3 christoffel(const MetricField& g, std::span<const double> p);

/// R(l,i,j,k) = (R(∂_i,∂_j)∂_k)^l
///            = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_ip Γ^p_jk − Γ^l_jp Γ^p_ik.
/// With this sign the hyperbolic plane has sectional curvature −1.
Tensor4 riemann(const MetricField& g, std::span<const double> p);

/// Ric_jk = Σ_i R(i,i,j,k).
Tensor2At ricci(const MetricField& g, std::span<const double> p);

/// R = g^jk Ric_jk.
double scalar_curvature(const MetricField& g, std::span<const double> p);

/// (∇²f)_ij = ∂_i∂_j f − Γ^k_ij ∂_k f.
Tensor2At hessian_scalar(const MetricField& g, const Expr& f, std::span<const double> p);

/// Δf = g^ij (∇²f)_ij.
double laplacian(const MetricField& g, const Expr& f, std::span<const double> p);

/// |∇f|² = g^ij ∂_i f ∂_j f.
double grad_norm_sq(const MetricField& g, const Expr& f, std::span<const double> p);

/// (L_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k.
Tensor2At lie_derivative_metric(const MetricField& g, const VectorField& X,
                                std::span<const double> p);

/// [X,Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i.
std::vector<double> lie_bracket(const VectorField& X, const VectorField& Y,
                                std::span<const double> p);

/// (∇_X Y)^k = X^i (∂_i Y^k + Γ^k_ij Y^j).
std::vector<double> covariant_derivative_vector(const MetricField& g, const VectorField& X,
                                                const VectorField& Y,
                                                std::span<const double> p);

/// X♭: (X♭)_i = g_ij X^j.
std::vector<double> lower_index(const MetricField& g, const VectorField& X,
                                std::span<const double> p);

/// Ric + ∇²f − (1/m) df⊗df; the last term is omitted entirely at m = ∞.
Tensor2At bakry_emery(const QEStructure& s, std::span<const double> p);

/// Vector-field variant Ric + ½ L_X g − (1/m) X♭⊗X♭; for X = ∇f it agrees
/// with bakry_emery since ½ L_{∇f} g = ∇²f.
Tensor2At bakry_emery_x(const MetricField& g, const VectorField& X, double m,
                        std::span<const double> p);

/// bakry_emery(s) − λ g; identically zero exactly when s satisfies the
/// generalized Einstein condition.
Tensor2At qe_residual(const QEStructure& s, std::span<const double> p);

/// M(a,b) = T(E_a, E_b) for a frame of d vector fields at p. Throws
/// InvalidArgument when the frame is degenerate at p.
Mat frame_components(const Tensor2At& T, std::span<const VectorField> frame,
                     std::span<const double> p);

/// (∇_a ∇_b h)_kl for a symmetric 2-tensor field h, indexed D2(a,b,k,l).
/// Needed for the second-order terms of the Einstein linearization.
struct SecondCovariantDeriv {
  int d = 0;
  std::vector<double> v;
  double& operator()(int a, int b, int k, int l) {
    return v[((static_cast<std::size_t>(a) * d + b) * d + k) * d + l];
  }
  double operator()(int a, int b, int k, int l) const {
    return v[((static_cast<std::size_t>(a) * d + b) * d + k) * d + l];
  }
};

SecondCovariantDeriv second_covariant_tensor2(const MetricField& g, const SymExprMatrix& h,
                                              std::span<const double> p);

/// Evaluate a symmetric expression matrix at p.
Tensor2At eval_sym_matrix(const SymExprMatrix& h, std::span<const double> p);

}  // namespace qem
