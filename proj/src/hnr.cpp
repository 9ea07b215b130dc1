#include "hnr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qem {

namespace {

void check_n(int n) {
  if (n < 2) throw InvalidArgument("n must be at least 2");
}

// 0-based layout: coordinates 0..n−1 are x_1..x_n, coordinate n is t.
// Frame fields 0..n−1 are the x-directions, field n is ∂_t.

}  // namespace

Chart hnr_chart(int n) {
  check_n(n);
  std::vector<std::string> names;
  std::vector<CoordBounds> bounds(n + 1);
  names.reserve(n + 1);
  for (int i = 1; i <= n; ++i) names.push_back("x_" + std::to_string(i));
  names.push_back("t");
  bounds[n - 1].lower = 0.0;  // x_n > 0
  return Chart(std::move(names), std::move(bounds));
}

MetricField hnr_metric(int n) {
  check_n(n);
  Chart chart = hnr_chart(n);
  Expr xn = Expr::coord(chart, "x_" + std::to_string(n));
  SymExprMatrix g = SymExprMatrix::zero(n + 1);
  for (int i = 0; i < n; ++i) g.at(i, i) = pow_int(xn, -2);
  g.at(n, n) = Expr::constant(1.0);
  return MetricField(std::move(chart), std::move(g));
}

std::vector<VectorField> hnr_frame(int n) {
  check_n(n);
  Chart chart = hnr_chart(n);
  Expr xn = Expr::coord(chart, "x_" + std::to_string(n));
  std::vector<VectorField> frame;
  frame.reserve(n + 1);
  for (int a = 0; a < n; ++a) {
    std::vector<Expr> comp(n + 1, Expr::constant(0.0));
    comp[a] = xn;
    frame.emplace_back(chart, std::move(comp));
  }
  std::vector<Expr> comp(n + 1, Expr::constant(0.0));
  comp[n] = Expr::constant(1.0);
  frame.emplace_back(chart, std::move(comp));
  return frame;
}

double bracket_check(int n, std::span<const double> p) {
  std::vector<VectorField> E = hnr_frame(n);
  const int d = n + 1;
  double worst = 0.0;
  std::vector<double> expected(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (a == b) continue;
      std::vector<double> br = lie_bracket(E[a], E[b], p);
      // [E_a, E_{n−1}] = −E_a and [E_{n−1}, E_a] = E_a for a < n−1; else 0.
      std::fill(expected.begin(), expected.end(), 0.0);
      if (b == n - 1 && a < n - 1) {
        for (int i = 0; i < d; ++i)
          expected[i] = -eval_value(E[a].components[i], p);
      } else if (a == n - 1 && b < n - 1) {
        for (int i = 0; i < d; ++i)
          expected[i] = eval_value(E[b].components[i], p);
      }
      for (int i = 0; i < d; ++i)
        worst = std::max(worst, std::abs(br[i] - expected[i]));
    }
  }
  return worst;
}

double connection_check(int n, std::span<const double> p) {
  MetricField g = hnr_metric(n);
  std::vector<VectorField> E = hnr_frame(n);
  const int d = n + 1;
  double worst = 0.0;
  std::vector<double> expected(d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      std::vector<double> cd = covariant_derivative_vector(g, E[a], E[b], p);
      // ∇_{E_a}E_a = E_{n−1} and ∇_{E_a}E_{n−1} = −E_a for a < n−1; else 0.
      std::fill(expected.begin(), expected.end(), 0.0);
      if (a < n - 1 && b == a) {
        for (int i = 0; i < d; ++i)
          expected[i] = eval_value(E[n - 1].components[i], p);
      } else if (a < n - 1 && b == n - 1) {
        for (int i = 0; i < d; ++i)
          expected[i] = -eval_value(E[a].components[i], p);
      }
      for (int i = 0; i < d; ++i)
        worst = std::max(worst, std::abs(cd[i] - expected[i]));
    }
  }
  return worst;
}

Tensor2At ricci_closed(int n, std::span<const double> p) {
  check_n(n);
  Chart chart = hnr_chart(n);
  if (static_cast<int>(p.size()) != n + 1 || !chart.in_bounds(p))
    throw InvalidArgument("point outside chart bounds");
  const double xn = p[n - 1];
  Tensor2At ric(n + 1, p);
  // −(n−1)g + (n−1)dt⊗dt: the x-block is −(n−1)/x_n² δ_ij, the (t,t)
  // entry cancels to zero.
  for (int i = 0; i < n; ++i) ric(i, i) = -(n - 1) / (xn * xn);
  ric(n, n) = 0.0;
  return ric;
}

double PdeResiduals::max_abs() const {
  double r = 0.0;
  for (double v : item) r = std::max(r, std::abs(v));
  return r;
}

namespace {

// Keep the entry of largest magnitude, preserving its sign.
void keep_maxmag(double& acc, double v) {
  if (std::abs(v) > std::abs(acc)) acc = v;
}

}  // namespace

PdeResiduals pde_residuals(const Expr& f, double m, double lambda,
                           std::span<const double> p) {
  const int d = static_cast<int>(p.size());
  if (d < 3) throw InvalidArgument("point dimension must be at least 3");
  const int n = d - 1;
  if (!hnr_chart(n).in_bounds(p)) throw InvalidArgument("point outside chart bounds");
  if (std::isnan(m) || m <= 0.0) throw InvalidArgument("m must be positive");

  const Jet2 J = eval_jet2(f, p);
  const double inv_m = std::isinf(m) ? 0.0 : 1.0 / m;
  const int ixn = n - 1;
  const int it = n;
  const double x = p[ixn];
  const double x2 = x * x;
  const double fn = J.grad(ixn);
  const double ft = J.grad(it);

  PdeResiduals r{};
  for (double& v : r.item) v = 0.0;

  // (1) x_n²f_ii − x_n f_n − (1/m)x_n²f_i² − λ − (n−1), i < n
  for (int a = 0; a < n - 1; ++a) {
    double fi = J.grad(a);
    keep_maxmag(r.item[0],
                x2 * J.hess(a, a) - x * fn - inv_m * x2 * fi * fi - lambda - (n - 1));
  }
  // (2) x_n f_n + x_n²f_nn − (1/m)x_n²f_n² − λ − (n−1)
  r.item[1] = x * fn + x2 * J.hess(ixn, ixn) - inv_m * x2 * fn * fn - lambda - (n - 1);
  // (3) f_tt − (1/m)f_t² − λ
  r.item[2] = J.hess(it, it) - inv_m * ft * ft - lambda;
  // (4) f_ij − (1/m)f_i f_j, i < j < n
  for (int a = 0; a < n - 1; ++a)
    for (int b = a + 1; b < n - 1; ++b)
      keep_maxmag(r.item[3], J.hess(a, b) - inv_m * J.grad(a) * J.grad(b));
  // (5) x_n²f_in + x_n f_i − (1/m)x_n²f_i f_n, i < n
  for (int a = 0; a < n - 1; ++a) {
    double fi = J.grad(a);
    keep_maxmag(r.item[4], x2 * J.hess(a, ixn) + x * fi - inv_m * x2 * fi * fn);
  }
  // (6) f_it − (1/m)f_i f_t, i ≤ n
  for (int a = 0; a < n; ++a)
    keep_maxmag(r.item[5], J.hess(a, it) - inv_m * J.grad(a) * ft);

  return r;
}

double ExamplePotential::eta() const { return std::sqrt((n - 1) / m); }

double ExamplePotential::lambda() const { return -(n - 1.0); }

void ExamplePotential::validate() const {
  check_n(n);
  if (!std::isfinite(m) || m <= 0.0)
    throw InvalidArgument("example potentials require finite positive m");
  if (kind == Kind::Example1 && sign != 1 && sign != -1)
    throw InvalidArgument("example 1 sign must be +1 or -1");
  if (kind == Kind::Example2 && !std::isfinite(a))
    throw InvalidArgument("example 2 shift a must be finite");
}

Expr example_potential(const ExamplePotential& spec) {
  spec.validate();
  Chart chart = hnr_chart(spec.n);
  Expr t = Expr::coord(chart, "t");
  if (spec.kind == ExamplePotential::Kind::Example1) {
    const double s = spec.sign * std::sqrt((spec.n - 1) * spec.m);
    return Expr::constant(s) * t;
  }
  // f = −m·ln(cosh(ηt + a))
  Expr arg = Expr::constant(spec.eta()) * t + Expr::constant(spec.a);
  return Expr::constant(-spec.m) * apply(UnaryFn::Ln, apply(UnaryFn::Cosh, std::move(arg)));
}

QEStructure example_structure(const ExamplePotential& spec) {
  return QEStructure(hnr_metric(spec.n), example_potential(spec), spec.m, spec.lambda());
}

const char* to_string(ClassificationVerdict::Tag tag) {
  switch (tag) {
    case ClassificationVerdict::Tag::Example1Plus: return "example1+";
    case ClassificationVerdict::Tag::Example1Minus: return "example1-";
    case ClassificationVerdict::Tag::Example2: return "example2";
    case ClassificationVerdict::Tag::NotQuasiEinstein: return "not-quasi-einstein";
  }
  return "?";
}

ClassificationVerdict classify(const Expr& f, double m, double lambda,
                               const std::vector<std::vector<double>>& grid,
                               double tol) {
  if (!(lambda < 0.0))
    throw InvalidArgument("classification requires lambda < 0");
  if (!std::isfinite(m) || m <= 0.0)
    throw InvalidArgument("classification requires finite positive m");
  if (grid.empty()) throw InvalidArgument("classification requires a nonempty grid");
  const int d = static_cast<int>(grid.front().size());
  if (d < 3) throw InvalidArgument("point dimension must be at least 3");
  const int n = d - 1;

  const double S = std::sqrt(-m * lambda);     // equilibrium |∂f/∂t|
  const double mu = std::sqrt(-lambda / m);    // tanh rate

  std::vector<Jet2> jets;
  jets.reserve(grid.size());
  double max_pde = 0.0;
  for (const std::vector<double>& p : grid) {
    if (static_cast<int>(p.size()) != d)
      throw InvalidArgument("grid points have mixed dimensions");
    jets.push_back(eval_jet2(f, p));
    max_pde = std::max(max_pde, pde_residuals(f, m, lambda, p).max_abs());
  }

  ClassificationVerdict v;
  v.max_pde_residual = max_pde;

  // (a) constant t-profile ∂f/∂t ≡ s·S for one sign
  double res_plus = 0.0, res_minus = 0.0;
  for (const Jet2& J : jets) {
    res_plus = std::max(res_plus, std::abs(J.grad(n) - S));
    res_minus = std::max(res_minus, std::abs(J.grad(n) + S));
  }
  const int profile_sign = res_plus <= res_minus ? +1 : -1;
  const double res_a = std::min(res_plus, res_minus);
  const bool pass_a = res_a <= tol;
  v.steps.push_back({"t-profile", res_a, tol, pass_a});

  // (b) tanh profile fit, only consulted when (a) fails
  bool pass_b = false;
  double a_fit = 0.0;
  if (!pass_a) {
    std::vector<double> fits;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double ft = jets[k].grad(n);
      if (std::abs(ft) >= S) continue;  // outside the tanh range
      double arg = -ft / S;
      arg = std::clamp(arg, -(1.0 - 1e-12), 1.0 - 1e-12);
      fits.push_back(std::atanh(arg) - mu * grid[k][n]);
    }
    double res_b;
    if (fits.empty()) {
      res_b = std::numeric_limits<double>::max();
    } else {
      std::sort(fits.begin(), fits.end());
      const std::size_t h = fits.size() / 2;
      a_fit = fits.size() % 2 ? fits[h] : 0.5 * (fits[h - 1] + fits[h]);
      res_b = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double pred = -S * std::tanh(mu * grid[k][n] + a_fit);
        res_b = std::max(res_b, std::abs(jets[k].grad(n) - pred));
      }
    }
    pass_b = res_b <= tol;
    v.steps.push_back({"a-fit", res_b, tol, pass_b});
  }

  // (c) x-independence ∂f/∂x_i ≡ 0, i ≤ n
  double res_c = 0.0;
  for (const Jet2& J : jets)
    for (int i = 0; i < n; ++i) res_c = std::max(res_c, std::abs(J.grad(i)));
  const bool pass_c = res_c <= tol;
  v.steps.push_back({"x-independence", res_c, tol, pass_c});

  // (d) λ = −(n−1)
  const double res_d = std::abs(lambda + (n - 1));
  const bool pass_d = res_d <= tol;
  v.steps.push_back({"lambda-value", res_d, tol, pass_d});

  if (!pass_a && !pass_b) {
    v.tag = ClassificationVerdict::Tag::NotQuasiEinstein;
    v.failed_step = "t-profile";
  } else if (!pass_c) {
    v.tag = ClassificationVerdict::Tag::NotQuasiEinstein;
    v.failed_step = "x-independence";
  } else if (!pass_d) {
    v.tag = ClassificationVerdict::Tag::NotQuasiEinstein;
    v.failed_step = "lambda-value";
  } else if (pass_a) {
    v.tag = profile_sign > 0 ? ClassificationVerdict::Tag::Example1Plus
                             : ClassificationVerdict::Tag::Example1Minus;
  } else {
    v.tag = ClassificationVerdict::Tag::Example2;
    v.a = a_fit;
  }
  return v;
}

}  // namespace qem
