#pragma once

// Shared helpers for the test binaries: central-difference oracles, random
// in-bounds points on the (x_1,...,x_n,t) chart, and random expression
// generators with magnitude-bounded vocabulary so the differences stay well
// conditioned.

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "expr.hpp"
#include "grid.hpp"

namespace qem::testutil {

using ScalarFn = std::function<double(std::span<const double>)>;

inline double fd_step(double x, double base = 1e-5) {
  return base * std::max(1.0, std::abs(x));
}

inline double fd_partial(const ScalarFn& f, std::vector<double> p, int i, double base = 1e-5) {
  const double h = fd_step(p[i], base);
  p[i] += h;
  const double fp = f(p);
  p[i] -= 2.0 * h;
  const double fm = f(p);
  return (fp - fm) / (2.0 * h);
}

inline double fd_second(const ScalarFn& f, std::vector<double> p, int i, int j,
                        double base = 1e-5) {
  if (i == j) {
    const double h = fd_step(p[i], base);
    const double f0 = f(p);
    p[i] += h;
    const double fp = f(p);
    p[i] -= 2.0 * h;
    const double fm = f(p);
    return (fp - 2.0 * f0 + fm) / (h * h);
  }
  const double hi = fd_step(p[i], base);
  const double hj = fd_step(p[j], base);
  auto at = [&](double di, double dj) {
    std::vector<double> q = p;
    q[i] += di;
    q[j] += dj;
    return f(q);
  };
  return (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj);
}

/// Random point in the default box: x_i in [-1,1], x_n in [0.25,4]
/// (log-uniform), t in [-3,3].
inline std::vector<double> random_point(std::mt19937_64& rng, int n) {
  std::vector<double> p(n + 1);
  for (int i = 0; i + 1 < n; ++i) p[i] = -1.0 + 2.0 * uniform01(rng);
  p[n - 1] = std::exp(std::log(0.25) + uniform01(rng) * std::log(16.0));
  p[n] = -3.0 + 6.0 * uniform01(rng);
  return p;
}

/// Random expression over the chart. The vocabulary keeps values and
/// derivatives moderate on the default box: bounded unaries, one damped
/// exponential shape, and division by cosh + 1.5 only.
inline Expr random_expr(std::mt19937_64& rng, const Chart& chart, int depth) {
  if (depth <= 0) {
    if (uniform01(rng) < 0.6) {
      int i = std::min(static_cast<int>(uniform01(rng) * chart.dim()), chart.dim() - 1);
      return Expr::coord(i, chart.name(i));
    }
    return Expr::constant(-2.0 + 4.0 * uniform01(rng));
  }
  const int pick = std::min(static_cast<int>(uniform01(rng) * 6.0), 5);
  Expr a = random_expr(rng, chart, depth - 1);
  switch (pick) {
    case 0:
      return a + random_expr(rng, chart, depth - 1);
    case 1:
      return a - random_expr(rng, chart, depth - 1);
    case 2:
      return a * random_expr(rng, chart, depth - 1);
    case 3: {
      static const UnaryFn fns[] = {UnaryFn::Sin, UnaryFn::Cos, UnaryFn::Tanh, UnaryFn::Sech};
      int k = std::min(static_cast<int>(uniform01(rng) * 4.0), 3);
      return apply(fns[k], a);
    }
    case 4:
      return Expr::constant(0.3) * apply(UnaryFn::Exp, apply(UnaryFn::Tanh, a));
    default:
      return a / (Expr::constant(1.5) + apply(UnaryFn::Cosh, random_expr(rng, chart, depth - 1)));
  }
}

/// Expression with structurally assembled partial derivatives, for tests
/// that need an exact gradient field (e.g. X = grad f).
struct WithGrad {
  Expr f;
  std::vector<Expr> df;
};

inline WithGrad wg_const(double v, int d) {
  WithGrad w;
  w.f = Expr::constant(v);
  w.df.assign(d, Expr::constant(0.0));
  return w;
}

inline WithGrad wg_coord(const Chart& chart, int i) {
  WithGrad w;
  w.f = Expr::coord(i, chart.name(i));
  for (int k = 0; k < chart.dim(); ++k) w.df.push_back(Expr::constant(k == i ? 1.0 : 0.0));
  return w;
}

inline WithGrad wg_add(const WithGrad& a, const WithGrad& b) {
  WithGrad w;
  w.f = a.f + b.f;
  for (std::size_t k = 0; k < a.df.size(); ++k) w.df.push_back(a.df[k] + b.df[k]);
  return w;
}

inline WithGrad wg_mul(const WithGrad& a, const WithGrad& b) {
  WithGrad w;
  w.f = a.f * b.f;
  for (std::size_t k = 0; k < a.df.size(); ++k)
    w.df.push_back(a.df[k] * b.f + a.f * b.df[k]);
  return w;
}

inline WithGrad wg_chain(UnaryFn fn, const WithGrad& a) {
  WithGrad w;
  w.f = apply(fn, a.f);
  Expr d;  // derivative of fn at a.f
  switch (fn) {
    case UnaryFn::Sin: d = apply(UnaryFn::Cos, a.f); break;
    case UnaryFn::Cos: d = -apply(UnaryFn::Sin, a.f); break;
    case UnaryFn::Tanh: d = apply(UnaryFn::Sech, a.f) * apply(UnaryFn::Sech, a.f); break;
    case UnaryFn::Exp: d = apply(UnaryFn::Exp, a.f); break;
    default: throw InvalidArgument("wg_chain: unsupported function");
  }
  for (const Expr& dk : a.df) w.df.push_back(d * dk);
  return w;
}

inline WithGrad random_potential(std::mt19937_64& rng, const Chart& chart, int depth) {
  if (depth <= 0) {
    if (uniform01(rng) < 0.7) {
      int i = std::min(static_cast<int>(uniform01(rng) * chart.dim()), chart.dim() - 1);
      return wg_coord(chart, i);
    }
    return wg_const(-2.0 + 4.0 * uniform01(rng), chart.dim());
  }
  const int pick = std::min(static_cast<int>(uniform01(rng) * 5.0), 4);
  WithGrad a = random_potential(rng, chart, depth - 1);
  switch (pick) {
    case 0:
      return wg_add(a, random_potential(rng, chart, depth - 1));
    case 1:
      return wg_mul(a, random_potential(rng, chart, depth - 1));
    case 2:
      return wg_chain(UnaryFn::Sin, a);
    case 3:
      return wg_chain(UnaryFn::Tanh, a);
    default:
      // damped exponential: exp(tanh a) keeps values in [1/e, e]
      return wg_chain(UnaryFn::Exp, wg_chain(UnaryFn::Tanh, a));
  }
}

}  // namespace qem::testutil
