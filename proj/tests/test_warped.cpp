#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "geometry.hpp"
#include "hnr.hpp"
#include "test_util.hpp"
#include "warped.hpp"

using namespace qem;
using namespace qem::testutil;

namespace {

std::vector<double> product_point(std::mt19937_64& rng, int n, const FiberSpec& spec) {
  std::vector<double> p = random_point(rng, n);
  for (int i = 0; i < spec.k; ++i) {
    if (spec.kind == FiberSpec::Kind::ScaledHyperbolic && i == spec.k - 1) {
      p.push_back(0.25 * std::pow(16.0, uniform01(rng)));
    } else {
      p.push_back(-1.0 + 2.0 * uniform01(rng));
    }
  }
  return p;
}

}  // namespace

TEST_CASE("u_from_f computes e^(-f/m)") {
  Chart c = hnr_chart(2);
  Expr f = parse("t^2 + x_1", c);
  Expr u = u_from_f(f, 2.0);
  const double p[] = {0.5, 1.0, 1.5};
  CHECK(eval_value(u, p) == doctest::Approx(std::exp(-(1.5 * 1.5 + 0.5) / 2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(u_from_f(f, std::numeric_limits<double>::infinity()), InvalidArgument);
}

TEST_CASE("the u-form residual agrees with the potential-form residual") {
  std::mt19937_64 rng(31);
  const int n = 2;
  MetricField g = hnr_metric(n);
  Chart c = hnr_chart(n);
  const double m = 2.0;
  const double lambda = -1.0;
  int tested = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // u = exp(bounded expression) stays positive
    Expr w = apply(UnaryFn::Tanh, random_expr(rng, c, 3));
    Expr u = apply(UnaryFn::Exp, w);
    Expr f = Expr::constant(-m) * apply(UnaryFn::Ln, u);
    QEStructure s(g, f, m, lambda);
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> p = random_point(rng, n);
      Tensor2At a = qe_u_residual(g, u, m, lambda, p);
      Tensor2At b = qe_residual(s, p);
      double scale = std::max(1.0, b.max_abs());
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) CHECK(std::abs(a(i, j) - b(i, j)) < 1e-9 * scale);
      ++tested;
    }
  }
  CHECK(tested == 60);
}

TEST_CASE("the u-form residual vanishes on the second family") {
  std::mt19937_64 rng(32);
  const int n = 2;
  const double m = 2.0;
  MetricField g = hnr_metric(n);
  Expr f = example_potential({ExamplePotential::Kind::Example2, n, m, +1, 0.3});
  Expr u = u_from_f(f, m);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p = random_point(rng, n);
    CHECK(qe_u_residual(g, u, m, -1.0, p).max_abs() < 1e-9);
  }
}

TEST_CASE("static metrics at m = 1 annihilate the adjoint linearization") {
  std::mt19937_64 rng(33);
  for (int n : {2, 3}) {
    MetricField g = hnr_metric(n);
    for (int sign : {+1, -1}) {
      Expr f = example_potential({ExamplePotential::Kind::Example1, n, 1.0, sign, 0.0});
      Expr u = u_from_f(f, 1.0);
      for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> p = random_point(rng, n);
        CHECK(std::abs(static_residual(g, f, -(n - 1.0), p)) < 1e-10);
        CHECK(adjoint_lg_star(g, u, p).max_abs() < 1e-9);
      }
    }
    Expr f2 = example_potential({ExamplePotential::Kind::Example2, n, 1.0, +1, 0.6});
    Expr u2 = u_from_f(f2, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> p = random_point(rng, n);
      CHECK(std::abs(static_residual(g, f2, -(n - 1.0), p)) < 1e-10);
      CHECK(adjoint_lg_star(g, u2, p).max_abs() < 1e-9);
    }
  }
}

TEST_CASE("a non-static potential leaves the adjoint nonzero") {
  const int n = 2;
  MetricField g = hnr_metric(n);
  Chart c = hnr_chart(n);
  Expr f = parse("0.5*t^2", c);
  Expr u = u_from_f(f, 1.0);
  const double p[] = {0.0, 1.0, 1.0};
  CHECK(adjoint_lg_star(g, u, p).max_abs() > 1e-3);
}

TEST_CASE("scalar-curvature linearization on the metric itself gives -R") {
  std::mt19937_64 rng(34);

  // hyperbolic plane: R = -2, so L_g(g) = 2
  Chart c2({"x", "y"},
           {CoordBounds{}, CoordBounds{0.0, std::numeric_limits<double>::infinity()}});
  Expr y = Expr::coord(c2, "y");
  Expr w = Expr::constant(1.0) / (y * y);
  MetricField h2(c2, SymExprMatrix::diag({w, w}));
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p = {-1.0 + 2.0 * uniform01(rng), 0.25 * std::pow(16.0, uniform01(rng))};
    CHECK(linearization_lg(h2, h2.g, p) == doctest::Approx(2.0).epsilon(1e-9));
  }

  for (int n : {2, 3}) {
    MetricField g = hnr_metric(n);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> p = random_point(rng, n);
      CHECK(linearization_lg(g, g.g, p) == doctest::Approx(n * (n - 1.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("scalar-curvature linearization of f*g matches its closed form") {
  // L_g(f g) = (1-d) Laplacian f - f R for a scalar f and d = dim
  std::mt19937_64 rng(35);
  const int n = 2;
  const int d = n + 1;
  MetricField g = hnr_metric(n);
  Chart c = hnr_chart(n);
  for (int trial = 0; trial < 10; ++trial) {
    Expr f = random_expr(rng, c, 3);
    SymExprMatrix fg = SymExprMatrix::zero(d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) fg.at(i, j) = f * g.g.at(i, j);
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> p = random_point(rng, n);
      double lhs;
      double expect;
      try {
        lhs = linearization_lg(g, fg, p);
        expect = (1.0 - d) * laplacian(g, f, p) -
                 eval_value(f, p) * scalar_curvature(g, p);
      } catch (const EvalError&) {
        continue;
      }
      double scale = std::max(1.0, std::abs(expect));
      CHECK(std::abs(lhs - expect) < 1e-8 * scale);
    }
  }
}

TEST_CASE("fiber Einstein constant is zero for the first family") {
  std::mt19937_64 rng(36);
  for (double m : {1.0, 2.0, 5.0}) {
    const int n = 2;
    QEStructure s = example_structure({ExamplePotential::Kind::Example1, n, m, +1, 0.0});
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> p = random_point(rng, n);
      CHECK(std::abs(mu_fiber(s, p)) < 1e-10);
    }
  }
}

TEST_CASE("fiber Einstein constant is -(m-1)(n-1)/m for the second family") {
  std::mt19937_64 rng(37);
  for (int n : {2, 3}) {
    for (double m : {2.0, 3.0}) {
      QEStructure s = example_structure({ExamplePotential::Kind::Example2, n, m, +1, 0.25});
      const double expect = -(m - 1.0) * (n - 1.0) / m;
      std::vector<double> values;
      for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> p = random_point(rng, n);
        values.push_back(mu_fiber(s, p));
      }
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(values.size());
      CHECK(mean == doctest::Approx(expect).epsilon(1e-9));
      CHECK(var < 1e-18);
    }
  }
}

TEST_CASE("fiber metrics have the advertised Ricci curvature") {
  std::mt19937_64 rng(38);

  FiberSpec flat{FiberSpec::Kind::Flat, 3, 1.0};
  CHECK(flat.einstein_constant() == 0.0);
  MetricField gf = fiber_metric(flat);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> p(3);
    for (double& x : p) x = -1.0 + 2.0 * uniform01(rng);
    CHECK(ricci(gf, p).max_abs() < 1e-12);
  }

  FiberSpec hyp{FiberSpec::Kind::ScaledHyperbolic, 2, 2.0};
  CHECK(hyp.einstein_constant() == doctest::Approx(-0.5));
  MetricField gh = fiber_metric(hyp);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> p = {-1.0 + 2.0 * uniform01(rng), 0.25 * std::pow(16.0, uniform01(rng))};
    Tensor2At ric = ricci(gh, p);
    const double c = hyp.einstein_constant();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(ric(i, j) ==
              doctest::Approx(c * eval_value(gh.g.at(i, j), p)).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("matched_fiber picks the family with the requested constant") {
  FiberSpec a = matched_fiber(-0.5, 2);
  CHECK(a.kind == FiberSpec::Kind::ScaledHyperbolic);
  CHECK(a.r2 == doctest::Approx(2.0));
  CHECK(a.einstein_constant() == doctest::Approx(-0.5));

  FiberSpec b = matched_fiber(0.0, 1);
  CHECK(b.kind == FiberSpec::Kind::Flat);
  CHECK(b.k == 1);

  FiberSpec c = matched_fiber(1e-12, 4);
  CHECK(c.kind == FiberSpec::Kind::Flat);

  CHECK_THROWS_AS(matched_fiber(0.5, 2), InvalidArgument);
  CHECK_THROWS_AS(matched_fiber(-0.5, 1), InvalidArgument);  // k=1 cannot curve
}

TEST_CASE("warped metric has the block structure g + u^2 g_F") {
  const int n = 2;
  const double m = 2.0;
  QEStructure s = example_structure({ExamplePotential::Kind::Example2, n, m, +1, 0.0});
  FiberSpec spec = matched_fiber(-(m - 1.0) * (n - 1.0) / m, static_cast<int>(m));
  MetricField wg = warped_metric(s, spec);
  Chart wc = warped_chart(s.metric, spec);
  CHECK(wg.dim() == n + 1 + spec.k);
  CHECK(wc.dim() == wg.dim());

  std::mt19937_64 rng(39);
  std::vector<double> p = product_point(rng, n, spec);
  Expr u = u_from_f(s.f, m);
  const double uu = eval_value(u, std::span<const double>(p).first(n + 1));

  // base block
  for (int i = 0; i <= n; ++i)
    for (int j = i; j <= n; ++j) {
      double expect = eval_value(s.metric.g.at(i, j), std::span<const double>(p).first(n + 1));
      CHECK(eval_value(wg.g.at(i, j), p) == doctest::Approx(expect).epsilon(1e-12).scale(1e-12));
    }
  // cross terms vanish
  for (int i = 0; i <= n; ++i)
    for (int j = n + 1; j < wg.dim(); ++j)
      CHECK(eval_value(wg.g.at(i, j), p) == 0.0);
  // fiber block scales by u^2
  MetricField gf = fiber_metric(spec);
  for (int i = 0; i < spec.k; ++i)
    for (int j = i; j < spec.k; ++j) {
      double expect =
          uu * uu *
          eval_value(gf.g.at(i, j), std::span<const double>(p).subspan(n + 1));
      CHECK(eval_value(wg.g.at(n + 1 + i, n + 1 + j), p) ==
            doctest::Approx(expect).epsilon(1e-12).scale(1e-12));
    }
}

TEST_CASE("warped products over both families are Einstein") {
  std::mt19937_64 rng(40);
  const int n = 2;
  for (double m : {1.0, 2.0, 3.0}) {
    QEStructure s1 = example_structure({ExamplePotential::Kind::Example1, n, m, +1, 0.0});
    QEStructure s2 = example_structure({ExamplePotential::Kind::Example2, n, m, +1, 0.2});
    for (const QEStructure& s : {s1, s2}) {
      std::vector<double> base = {0.0, 1.0, 0.0};
      double mu = mu_fiber(s, base);
      FiberSpec spec = matched_fiber(mu, static_cast<int>(m));
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p = product_point(rng, n, spec);
        CHECK(warped_einstein_residual(s, spec, p).max_abs() < 1e-8);
      }
    }
  }
}

TEST_CASE("a mismatched fiber is detected and measurably non-Einstein") {
  std::mt19937_64 rng(41);
  const int n = 2;
  const double m = 2.0;
  QEStructure s = example_structure({ExamplePotential::Kind::Example2, n, m, +1, 0.0});
  // correct fiber constant is -(m-1)(n-1)/m = -1/2; a flat fiber is wrong
  FiberSpec wrong{FiberSpec::Kind::Flat, 2, 1.0};
  std::vector<double> p = product_point(rng, n, wrong);

  CHECK_THROWS_AS(warped_einstein_residual(s, wrong, p), InvalidArgument);
  CHECK(warped_einstein_residual(s, wrong, p, false).max_abs() > 0.1);
}

TEST_CASE("warped residual rejects non-integer m and k != m") {
  const int n = 2;
  QEStructure s25 = example_structure({ExamplePotential::Kind::Example2, n, 2.5, +1, 0.0});
  std::vector<double> base = {0.0, 1.0, 0.0};
  double mu = mu_fiber(s25, base);
  FiberSpec spec = matched_fiber(mu, 2);
  std::vector<double> p = {0.0, 1.0, 0.0, 0.5, 1.0};
  CHECK_THROWS_AS(warped_einstein_residual(s25, spec, p), InvalidArgument);

  QEStructure s2 = example_structure({ExamplePotential::Kind::Example2, n, 2.0, +1, 0.0});
  double mu2 = mu_fiber(s2, base);
  FiberSpec spec3 = matched_fiber(mu2, 3);
  std::vector<double> p3 = {0.0, 1.0, 0.0, 0.5, 0.5, 1.0};
  CHECK_THROWS_AS(warped_einstein_residual(s2, spec3, p3), InvalidArgument);
}

TEST_CASE("fiber spec validation") {
  CHECK_THROWS_AS(FiberSpec({FiberSpec::Kind::Flat, 0, 1.0}).validate(), InvalidArgument);
  CHECK_THROWS_AS(FiberSpec({FiberSpec::Kind::ScaledHyperbolic, 2, -1.0}).validate(),
                  InvalidArgument);
  CHECK_THROWS_AS(FiberSpec({FiberSpec::Kind::ScaledHyperbolic, 1, 1.0}).validate(),
                  InvalidArgument);
  FiberSpec ok{FiberSpec::Kind::ScaledHyperbolic, 3, 4.0};
  ok.validate();
  CHECK(ok.einstein_constant() == doctest::Approx(-0.5));
}
