#include "warped.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace qem {

Expr u_from_f(const Expr& f, double m) {
  if (!std::isfinite(m) || m <= 0.0)
    throw InvalidArgument("u = e^(-f/m) requires finite positive m");
  return apply(UnaryFn::Exp, Expr::constant(-1.0 / m) * f);
}

Tensor2At qe_u_residual(const MetricField& g, const Expr& u, double m, double lambda,
                        std::span<const double> p) {
  if (!std::isfinite(m) || m <= 0.0)
    throw InvalidArgument("u-form residual requires finite positive m");
  const double uv = eval_value(u, p);
  if (!(uv > 0.0)) throw InvalidArgument("u must be positive at the point");
  Tensor2At ric = ricci(g, p);
  Tensor2At hu = hessian_scalar(g, u, p);
  Tensor2At out(ric.dim, p);
  for (int i = 0; i < ric.dim; ++i) {
    for (int j = 0; j < ric.dim; ++j) {
      const double gij = eval_value(g.g.at(i, j), p);
      out(i, j) = ric(i, j) - (m / uv) * hu(i, j) - lambda * gij;
    }
  }
  return out;
}

double linearization_lg(const MetricField& g, const SymExprMatrix& h,
                        std::span<const double> p) {
  ConnectionData c = connection_at(g, p);
  const int d = c.d;
  SecondCovariantDeriv D2 = second_covariant_tensor2(g, h, p);

  // Δ(tr h) = g^{ab} g^{kl} (∇²h)_{ab,kl};  div(div h) = g^{ak} g^{bl} (…).
  double lap_tr = 0.0, divdiv = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
          lap_tr += c.ginv(a, b) * c.ginv(k, l) * D2(a, b, k, l);
          divdiv += c.ginv(a, k) * c.ginv(b, l) * D2(a, b, k, l);
        }

  Tensor2At ric = ricci(g, p);
  Tensor2At hv = eval_sym_matrix(h, p);
  double inner = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
          inner += c.ginv(i, k) * c.ginv(j, l) * hv(i, j) * ric(k, l);

  return -lap_tr + divdiv - inner;
}

Tensor2At adjoint_lg_star(const MetricField& g, const Expr& u, std::span<const double> p) {
  Tensor2At ric = ricci(g, p);
  Tensor2At hu = hessian_scalar(g, u, p);
  const double lap = laplacian(g, u, p);
  const double uv = eval_value(u, p);
  Tensor2At out(ric.dim, p);
  for (int i = 0; i < ric.dim; ++i) {
    for (int j = 0; j < ric.dim; ++j) {
      const double gij = eval_value(g.g.at(i, j), p);
      out(i, j) = -lap * gij + hu(i, j) - uv * ric(i, j);
    }
  }
  return out;
}

double static_residual(const MetricField& g, const Expr& f, double lambda,
                       std::span<const double> p) {
  Expr w = apply(UnaryFn::Exp, -f);
  return laplacian(g, w, p) + lambda * eval_value(w, p);
}

double mu_fiber(const QEStructure& s, std::span<const double> p) {
  if (s.m_infinite()) throw InvalidArgument("mu_fiber requires finite m");
  const double lap = laplacian(s.metric, s.f, p);
  const double grad2 = grad_norm_sq(s.metric, s.f, p);
  const double fv = eval_value(s.f, p);
  return (s.m * s.lambda - lap + grad2) / (s.m * std::exp(2.0 * fv / s.m));
}

// ---------------------------------------------------------------------------
// Fibers and warped products

double FiberSpec::einstein_constant() const {
  if (kind == Kind::Flat) return 0.0;
  return -(k - 1) / r2;
}

void FiberSpec::validate() const {
  if (k < 1) throw InvalidArgument("fiber dimension must be at least 1");
  if (kind == Kind::ScaledHyperbolic) {
    if (k < 2) throw InvalidArgument("a scaled hyperbolic fiber needs dimension at least 2");
    if (!(r2 > 0.0)) throw InvalidArgument("fiber radius squared must be positive");
  }
}

MetricField fiber_metric(const FiberSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  std::vector<CoordBounds> bounds(spec.k);
  for (int i = 1; i <= spec.k; ++i) names.push_back("y_" + std::to_string(i));
  if (spec.kind == FiberSpec::Kind::Flat) {
    Chart chart(std::move(names), std::move(bounds));
    SymExprMatrix g = SymExprMatrix::zero(spec.k);
    for (int i = 0; i < spec.k; ++i) g.at(i, i) = Expr::constant(1.0);
    return MetricField(std::move(chart), std::move(g));
  }
  bounds[spec.k - 1].lower = 0.0;  // y_k > 0
  Chart chart(std::move(names), std::move(bounds));
  Expr yk = Expr::coord(chart, "y_" + std::to_string(spec.k));
  SymExprMatrix g = SymExprMatrix::zero(spec.k);
  for (int i = 0; i < spec.k; ++i)
    g.at(i, i) = Expr::constant(spec.r2) * pow_int(yk, -2);
  return MetricField(std::move(chart), std::move(g));
}

FiberSpec matched_fiber(double mu, int k) {
  if (k < 1) throw InvalidArgument("fiber dimension must be at least 1");
  if (std::abs(mu) <= 1e-8) return FiberSpec{FiberSpec::Kind::Flat, k, 1.0};
  if (mu > 0.0)
    throw InvalidArgument("no implemented fiber family with positive Einstein constant");
  if (k < 2)
    throw InvalidArgument("a 1-dimensional fiber is flat; nonzero fiber constant needs k >= 2");
  return FiberSpec{FiberSpec::Kind::ScaledHyperbolic, k, -(k - 1) / mu};
}

Chart warped_chart(const MetricField& base, const FiberSpec& spec) {
  spec.validate();
  MetricField fiber = fiber_metric(spec);
  std::vector<std::string> names;
  std::vector<CoordBounds> bounds;
  for (int i = 0; i < base.dim(); ++i) {
    names.push_back(base.chart.name(i));
    bounds.push_back(base.chart.bounds(i));
  }
  for (int i = 0; i < fiber.dim(); ++i) {
    names.push_back(fiber.chart.name(i));
    bounds.push_back(fiber.chart.bounds(i));
  }
  return Chart(std::move(names), std::move(bounds));
}

MetricField warped_metric(const QEStructure& s, const FiberSpec& spec) {
  if (s.m_infinite()) throw InvalidArgument("warped product requires finite m");
  spec.validate();
  const MetricField& base = s.metric;
  MetricField fiber = fiber_metric(spec);
  Chart product = warped_chart(base, spec);
  const int db = base.dim();
  const int k = fiber.dim();

  std::vector<int> base_map(db), fiber_map(k);
  for (int i = 0; i < db; ++i) base_map[i] = i;
  for (int i = 0; i < k; ++i) fiber_map[i] = db + i;

  Expr u2 = pow_int(reindex_coords(u_from_f(s.f, s.m), base_map, product), 2);

  SymExprMatrix g(db + k);
  for (int i = 0; i < db + k; ++i)
    for (int j = i; j < db + k; ++j) g.at(i, j) = Expr::constant(0.0);
  for (int i = 0; i < db; ++i)
    for (int j = i; j < db; ++j)
      g.at(i, j) = reindex_coords(base.g.at(i, j), base_map, product);
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j)
      g.at(db + i, db + j) = u2 * reindex_coords(fiber.g.at(i, j), fiber_map, product);
  return MetricField(std::move(product), std::move(g));
}

Tensor2At warped_einstein_residual(const QEStructure& s, const FiberSpec& spec,
                                   std::span<const double> p_product,
                                   bool enforce_match) {
  if (s.m_infinite()) throw InvalidArgument("warped product requires finite m");
  const double mr = std::round(s.m);
  if (std::abs(s.m - mr) > 1e-9)
    throw InvalidArgument("warped product requires integer m");
  if (spec.k != static_cast<int>(mr))
    throw InvalidArgument("fiber dimension must equal m");
  const int db = s.metric.dim();
  if (static_cast<int>(p_product.size()) != db + spec.k)
    throw InvalidArgument("product point dimension mismatch");

  if (enforce_match) {
    std::span<const double> p_base = p_product.subspan(0, db);
    const double mu = mu_fiber(s, p_base);
    if (std::abs(spec.einstein_constant() - mu) > 1e-8)
      throw InvalidArgument("fiber Einstein constant does not match mu_fiber");
  }

  MetricField wg = warped_metric(s, spec);
  Tensor2At ric = ricci(wg, p_product);
  Tensor2At out(ric.dim, p_product);
  for (int i = 0; i < ric.dim; ++i) {
    for (int j = 0; j < ric.dim; ++j) {
      const double gij = eval_value(wg.g.at(i, j), p_product);
      out(i, j) = ric(i, j) - s.lambda * gij;
    }
  }
  return out;
}

}  // namespace qem
