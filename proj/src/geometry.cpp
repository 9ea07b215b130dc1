#include "geometry.hpp"

#include <cmath>
#include <utility>

namespace qem {

namespace {

void check_point(const Chart& chart, std::span<const double> p) {
  if (static_cast<int>(p.size()) != chart.dim())
    throw InvalidArgument("point dimension does not match chart");
  if (!chart.in_bounds(p)) throw InvalidArgument("point outside chart bounds");
}

}  // namespace

SymExprMatrix SymExprMatrix::zero(int dim) {
  SymExprMatrix m(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) m.at(i, j) = Expr::constant(0.0);
  return m;
}

SymExprMatrix SymExprMatrix::diag(std::vector<Expr> d) {
  SymExprMatrix m(static_cast<int>(d.size()));
  for (int i = 0; i < m.dim(); ++i)
    for (int j = i; j < m.dim(); ++j)
      m.at(i, j) = (i == j) ? std::move(d[i]) : Expr::constant(0.0);
  return m;
}

MetricField::MetricField(Chart chart_, SymExprMatrix g_)
    : chart(std::move(chart_)), g(std::move(g_)) {
  if (g.dim() != chart.dim())
    throw InvalidArgument("metric dimension does not match chart");
}

VectorField::VectorField(Chart chart_, std::vector<Expr> components_)
    : chart(std::move(chart_)), components(std::move(components_)) {
  if (static_cast<int>(components.size()) != chart.dim())
    throw InvalidArgument("vector field dimension does not match chart");
}

QEStructure::QEStructure(MetricField metric_, Expr f_, double m_, double lambda_)
    : metric(std::move(metric_)), f(std::move(f_)), m(m_), lambda(lambda_) {
  if (std::isnan(m) || m <= 0.0)
    throw InvalidArgument("m must be positive (finite or infinite)");
  if (!std::isfinite(lambda)) throw InvalidArgument("lambda must be finite");
  if (f.empty()) throw InvalidArgument("potential expression is empty");
}

bool QEStructure::m_infinite() const { return std::isinf(m); }

double Tensor2At::max_abs() const {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

double Tensor2At::max_asymmetry() const {
  double r = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      r = std::max(r, std::abs((*this)(i, j) - (*this)(j, i)));
  return r;
}

// ---------------------------------------------------------------------------
// Connection

ConnectionData connection_at(const MetricField& gf, std::span<const double> p) {
  check_point(gf.chart, p);
  const int d = gf.dim();

  ConnectionData c;
  c.d = d;
  c.point.assign(p.begin(), p.end());
  c.g = Mat(d);
  c.dg.assign(d, Mat(d));
  // ddg[m*d+i](j,l) = ∂_m ∂_i g_jl
  std::vector<Mat> ddg(static_cast<std::size_t>(d) * d, Mat(d));

  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      Jet2 J = eval_jet2(gf.g.at(i, j), p);
      c.g(i, j) = J.value();
      c.g(j, i) = J.value();
      for (int k = 0; k < d; ++k) {
        c.dg[k](i, j) = J.grad(k);
        c.dg[k](j, i) = J.grad(k);
        for (int l = 0; l < d; ++l) {
          ddg[static_cast<std::size_t>(k) * d + l](i, j) = J.hess(k, l);
          ddg[static_cast<std::size_t>(k) * d + l](j, i) = J.hess(k, l);
        }
      }
    }
  }

  c.ginv = Ldlt::compute(c.g).inverse();

  // ∂_m g^kl = −g^ka (∂_m g_ab) g^bl
  std::vector<Mat> dginv(d, Mat(d));
  for (int m = 0; m < d; ++m) {
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        double s = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) s += c.ginv(k, a) * c.dg[m](a, b) * c.ginv(b, l);
        dginv[m](k, l) = -s;
      }
    }
  }

  // Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)
  c.gamma = Tensor3(d);
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        double s = 0.0;
        for (int l = 0; l < d; ++l)
          s += c.ginv(k, l) * (c.dg[i](j, l) + c.dg[j](i, l) - c.dg[l](i, j));
        c.gamma(k, i, j) = 0.5 * s;
        c.gamma(k, j, i) = 0.5 * s;
      }
    }
  }

  // ∂_m Γ^k_ij, by the product rule on the formula above; second metric
  // derivatives come from the jet Hessians, so no finite differencing.
  c.dgamma = Tensor4(d);
  for (int m = 0; m < d; ++m) {
    for (int k = 0; k < d; ++k) {
      for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
          double s = 0.0;
          for (int l = 0; l < d; ++l) {
            s += dginv[m](k, l) * (c.dg[i](j, l) + c.dg[j](i, l) - c.dg[l](i, j));
            const Mat& dmi = ddg[static_cast<std::size_t>(m) * d + i];
            const Mat& dmj = ddg[static_cast<std::size_t>(m) * d + j];
            const Mat& dml = ddg[static_cast<std::size_t>(m) * d + l];
            s += c.ginv(k, l) * (dmi(j, l) + dmj(i, l) - dml(i, j));
          }
          c.dgamma(m, k, i, j) = 0.5 * s;
          c.dgamma(m, k, j, i) = 0.5 * s;
        }
      }
    }
  }
  return c;
}

Tensor3 christoffel(const MetricField& g, std::span<const double> p) {
  return connection_at(g, p).gamma;
}

// ---------------------------------------------------------------------------
// Curvature

namespace {

Tensor4 riemann_from(const ConnectionData& c) {
  const int d = c.d;
  Tensor4 R(d);
  for (int l = 0; l < d; ++l) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) {
          double s = c.dgamma(i, l, j, k) - c.dgamma(j, l, i, k);
          for (int q = 0; q < d; ++q)
            s += c.gamma(l, i, q) * c.gamma(q, j, k) - c.gamma(l, j, q) * c.gamma(q, i, k);
          R(l, i, j, k) = s;
        }
      }
    }
  }
  return R;
}

Tensor2At ricci_from(const ConnectionData& c) {
  const int d = c.d;
  Tensor2At ric(d, c.point);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < d; ++k) {
      // Ric_jk = ∂_i Γ^i_jk − ∂_j Γ^i_ik + Γ^i_iq Γ^q_jk − Γ^i_jq Γ^q_ik
      double s = 0.0;
      for (int i = 0; i < d; ++i) {
        s += c.dgamma(i, i, j, k) - c.dgamma(j, i, i, k);
        for (int q = 0; q < d; ++q)
          s += c.gamma(i, i, q) * c.gamma(q, j, k) - c.gamma(i, j, q) * c.gamma(q, i, k);
      }
      ric(j, k) = s;
    }
  }
  return ric;
}

Tensor2At hessian_from(const ConnectionData& c, const Expr& f) {
  const int d = c.d;
  Jet2 J = eval_jet2(f, c.point);
  Tensor2At h(d, c.point);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double s = J.hess(i, j);
      for (int k = 0; k < d; ++k) s -= c.gamma(k, i, j) * J.grad(k);
      h(i, j) = s;
    }
  }
  return h;
}

}  // namespace

Tensor4 riemann(const MetricField& g, std::span<const double> p) {
  return riemann_from(connection_at(g, p));
}

Tensor2At ricci(const MetricField& g, std::span<const double> p) {
  return ricci_from(connection_at(g, p));
}

double scalar_curvature(const MetricField& g, std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  Tensor2At ric = ricci_from(c);
  double s = 0.0;
  for (int i = 0; i < c.d; ++i)
    for (int j = 0; j < c.d; ++j) s += c.ginv(i, j) * ric(i, j);
  return s;
}

Tensor2At hessian_scalar(const MetricField& g, const Expr& f, std::span<const double> p) {
  return hessian_from(connection_at(g, p), f);
}

double laplacian(const MetricField& g, const Expr& f, std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  Tensor2At h = hessian_from(c, f);
  double s = 0.0;
  for (int i = 0; i < c.d; ++i)
    for (int j = 0; j < c.d; ++j) s += c.ginv(i, j) * h(i, j);
  return s;
}

double grad_norm_sq(const MetricField& g, const Expr& f, std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  Jet2 J = eval_jet2(f, p);
  double s = 0.0;
  for (int i = 0; i < c.d; ++i)
    for (int j = 0; j < c.d; ++j) s += c.ginv(i, j) * J.grad(i) * J.grad(j);
  return s;
}

// ---------------------------------------------------------------------------
// Vector fields

Tensor2At lie_derivative_metric(const MetricField& gf, const VectorField& X,
                                std::span<const double> p) {
  check_point(gf.chart, p);
  const int d = gf.dim();
  if (X.dim() != d) throw InvalidArgument("vector field dimension mismatch");

  std::vector<Jet2> Jx;
  Jx.reserve(d);
  for (int k = 0; k < d; ++k) Jx.push_back(eval_jet2(X.components[k], p));

  Mat g(d);
  std::vector<Mat> dg(d, Mat(d));
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      Jet2 J = eval_jet2(gf.g.at(i, j), p);
      g(i, j) = J.value();
      g(j, i) = J.value();
      for (int k = 0; k < d; ++k) {
        dg[k](i, j) = J.grad(k);
        dg[k](j, i) = J.grad(k);
      }
    }
  }

  Tensor2At L(d, p);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        s += Jx[k].value() * dg[k](i, j);
        s += g(k, j) * Jx[k].grad(i);
        s += g(i, k) * Jx[k].grad(j);
      }
      L(i, j) = s;
    }
  }
  return L;
}

std::vector<double> lie_bracket(const VectorField& X, const VectorField& Y,
                                std::span<const double> p) {
  check_point(X.chart, p);
  const int d = X.dim();
  if (Y.dim() != d) throw InvalidArgument("vector field dimension mismatch");
  std::vector<Jet2> Jx, Jy;
  for (int i = 0; i < d; ++i) {
    Jx.push_back(eval_jet2(X.components[i], p));
    Jy.push_back(eval_jet2(Y.components[i], p));
  }
  std::vector<double> b(d, 0.0);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j)
      s += Jx[j].value() * Jy[i].grad(j) - Jy[j].value() * Jx[i].grad(j);
    b[i] = s;
  }
  return b;
}

std::vector<double> covariant_derivative_vector(const MetricField& g, const VectorField& X,
                                                const VectorField& Y,
                                                std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  const int d = c.d;
  if (X.dim() != d || Y.dim() != d)
    throw InvalidArgument("vector field dimension mismatch");
  std::vector<double> xv(d);
  std::vector<Jet2> Jy;
  for (int i = 0; i < d; ++i) {
    xv[i] = eval_value(X.components[i], p);
    Jy.push_back(eval_jet2(Y.components[i], p));
  }
  std::vector<double> out(d, 0.0);
  for (int k = 0; k < d; ++k) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      s += xv[i] * Jy[k].grad(i);
      for (int j = 0; j < d; ++j) s += xv[i] * c.gamma(k, i, j) * Jy[j].value();
    }
    out[k] = s;
  }
  return out;
}

std::vector<double> lower_index(const MetricField& gf, const VectorField& X,
                                std::span<const double> p) {
  check_point(gf.chart, p);
  const int d = gf.dim();
  if (X.dim() != d) throw InvalidArgument("vector field dimension mismatch");
  Mat g(d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double v = eval_value(gf.g.at(i, j), p);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  std::vector<double> xv(d), out(d, 0.0);
  for (int j = 0; j < d; ++j) xv[j] = eval_value(X.components[j], p);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += g(i, j) * xv[j];
    out[i] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generalized Einstein tensors

Tensor2At bakry_emery(const QEStructure& s, std::span<const double> p) {
  ConnectionData c = connection_at(s.metric, p);
  Tensor2At ric = ricci_from(c);
  Tensor2At hess = hessian_from(c, s.f);
  Tensor2At out(c.d, p);
  if (s.m_infinite()) {
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = ric.v[i] + hess.v[i];
    return out;
  }
  Jet2 J = eval_jet2(s.f, p);
  const double inv_m = 1.0 / s.m;
  for (int i = 0; i < c.d; ++i)
    for (int j = 0; j < c.d; ++j)
      out(i, j) = ric(i, j) + hess(i, j) - inv_m * J.grad(i) * J.grad(j);
  return out;
}

Tensor2At bakry_emery_x(const MetricField& g, const VectorField& X, double m,
                        std::span<const double> p) {
  if (std::isnan(m) || m <= 0.0)
    throw InvalidArgument("m must be positive (finite or infinite)");
  Tensor2At ric = ricci(g, p);
  Tensor2At lie = lie_derivative_metric(g, X, p);
  Tensor2At out(ric.dim, p);
  if (std::isinf(m)) {
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = ric.v[i] + 0.5 * lie.v[i];
    return out;
  }
  std::vector<double> flat = lower_index(g, X, p);
  const double inv_m = 1.0 / m;
  for (int i = 0; i < ric.dim; ++i)
    for (int j = 0; j < ric.dim; ++j)
      out(i, j) = ric(i, j) + 0.5 * lie(i, j) - inv_m * flat[i] * flat[j];
  return out;
}

Tensor2At qe_residual(const QEStructure& s, std::span<const double> p) {
  Tensor2At be = bakry_emery(s, p);
  Tensor2At out(be.dim, p);
  for (int i = 0; i < be.dim; ++i) {
    for (int j = 0; j < be.dim; ++j) {
      double gij = eval_value(s.metric.g.at(i, j), p);
      out(i, j) = be(i, j) - s.lambda * gij;
    }
  }
  return out;
}

Mat frame_components(const Tensor2At& T, std::span<const VectorField> frame,
                     std::span<const double> p) {
  const int d = T.dim;
  if (static_cast<int>(frame.size()) != d)
    throw InvalidArgument("frame size does not match tensor dimension");
  Mat E(d);
  for (int a = 0; a < d; ++a) {
    if (frame[a].dim() != d) throw InvalidArgument("frame vector dimension mismatch");
    for (int i = 0; i < d; ++i) E(a, i) = eval_value(frame[a].components[i], p);
  }
  // Reject a degenerate frame: Gaussian elimination with partial pivoting.
  {
    Mat W = E;
    const double scale = W.max_abs();
    if (scale == 0.0) throw InvalidArgument("degenerate frame at point");
    for (int col = 0; col < d; ++col) {
      int piv = col;
      for (int r = col + 1; r < d; ++r)
        if (std::abs(W(r, col)) > std::abs(W(piv, col))) piv = r;
      if (std::abs(W(piv, col)) <= 1e-12 * scale)
        throw InvalidArgument("degenerate frame at point");
      if (piv != col)
        for (int c2 = 0; c2 < d; ++c2) std::swap(W(piv, c2), W(col, c2));
      for (int r = col + 1; r < d; ++r) {
        double f = W(r, col) / W(col, col);
        for (int c2 = col; c2 < d; ++c2) W(r, c2) -= f * W(col, c2);
      }
    }
  }
  Mat M(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      double s = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s += E(a, i) * E(b, j) * T(i, j);
      M(a, b) = s;
    }
  }
  return M;
}

// ---------------------------------------------------------------------------
// Second covariant derivative of a symmetric 2-tensor

SecondCovariantDeriv second_covariant_tensor2(const MetricField& g, const SymExprMatrix& h,
                                              std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  const int d = c.d;
  if (h.dim() != d) throw InvalidArgument("tensor dimension mismatch");

  // Jets of the entries: values, first and second partials.
  std::vector<Jet2> Jh;
  Jh.reserve(static_cast<std::size_t>(d) * (d + 1) / 2);
  auto jet_at = [&](int i, int j) -> const Jet2& {
    if (i > j) std::swap(i, j);
    std::size_t idx = static_cast<std::size_t>(i) * d - static_cast<std::size_t>(i) * (i + 1) / 2 + j;
    return Jh[idx];
  };
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) Jh.push_back(eval_jet2(h.at(i, j), p));

  // C1(b,k,l) = (∇_b h)_kl = ∂_b h_kl − Γ^p_bk h_pl − Γ^p_bl h_kp
  Tensor3 C1(d);
  for (int b = 0; b < d; ++b) {
    for (int k = 0; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        double s = jet_at(k, l).grad(b);
        for (int q = 0; q < d; ++q)
          s -= c.gamma(q, b, k) * jet_at(q, l).value() + c.gamma(q, b, l) * jet_at(k, q).value();
        C1(b, k, l) = s;
      }
    }
  }

  SecondCovariantDeriv D2;
  D2.d = d;
  D2.v.assign(static_cast<std::size_t>(d) * d * d * d, 0.0);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      for (int k = 0; k < d; ++k) {
        for (int l = 0; l < d; ++l) {
          // ∂_a (∇_b h)_kl by the product rule
          double s = jet_at(k, l).hess(a, b);
          for (int q = 0; q < d; ++q) {
            s -= c.dgamma(a, q, b, k) * jet_at(q, l).value() +
                 c.gamma(q, b, k) * jet_at(q, l).grad(a);
            s -= c.dgamma(a, q, b, l) * jet_at(k, q).value() +
                 c.gamma(q, b, l) * jet_at(k, q).grad(a);
          }
          // connection corrections for the three lower slots of ∇h
          for (int q = 0; q < d; ++q) {
            s -= c.gamma(q, a, b) * C1(q, k, l);
            s -= c.gamma(q, a, k) * C1(b, q, l);
            s -= c.gamma(q, a, l) * C1(b, k, q);
          }
          D2(a, b, k, l) = s;
        }
      }
    }
  }
  return D2;
}

Tensor2At eval_sym_matrix(const SymExprMatrix& h, std::span<const double> p) {
  Tensor2At out(h.dim(), p);
  for (int i = 0; i < h.dim(); ++i) {
    for (int j = i; j < h.dim(); ++j) {
      double v = eval_value(h.at(i, j), p);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

}  // namespace qem
