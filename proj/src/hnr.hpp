#pragma once

#include <span>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace qem {

/// Chart (x_1,…,x_n,t) on the upper half-space product, with x_n > 0 strict.
Chart hnr_chart(int n);

/// g = (1/x_n²)Σdx_i² + dt² on the chart above.
MetricField hnr_metric(int n);

/// Orthonormal frame E_i = x_n ∂_{x_i} (i ≤ n), E_{n+1} = ∂_t.
std::vector<VectorField> hnr_frame(int n);

/// Max deviation of the numeric Lie brackets from the structure table
/// [E_l,E_n] = −E_l (l < n), all other pairs commuting.
double bracket_check(int n, std::span<const double> p);

/// Max deviation of ∇_{E_a}E_b from the connection table
/// ∇_{E_l}E_l = E_n, ∇_{E_l}E_n = −E_l (l ≤ n−1), zero otherwise.
double connection_check(int n, std::span<const double> p);

/// Closed-form Ricci tensor −(n−1)g + (n−1)dt⊗dt in coordinates.
Tensor2At ricci_closed(int n, std::span<const double> p);

/// The six residuals of the quasi-Einstein system on H^n×R, in the
/// divided-out scalar form (each the left side minus the right side; for the
/// indexed families the entry of largest magnitude is reported, sign kept):
///   (1) x_n²f_{x_ix_i} − x_n f_{x_n} − (1/m)x_n²f_{x_i}² − λ − (n−1),  i < n
///   (2) x_n f_{x_n} + x_n²f_{x_nx_n} − (1/m)x_n²f_{x_n}² − λ − (n−1)
///   (3) f_{tt} − (1/m)f_t² − λ
///   (4) f_{x_ix_j} − (1/m)f_{x_i}f_{x_j},                        i < j < n
///   (5) x_n²f_{x_ix_n} + x_n f_{x_i} − (1/m)x_n²f_{x_i}f_{x_n},  i < n
///   (6) f_{x_it} − (1/m)f_{x_i}f_t,                              i ≤ n
/// Items (1),(2),(3),(5) equal the frame components (E_i,E_i), (E_n,E_n),
/// (E_{n+1},E_{n+1}), (E_i,E_n) of the residual tensor; items (4) and (6)
/// equal the (E_i,E_j) and (E_i,E_{n+1}) components divided by the positive
/// factors x_n² and x_n. At m = ∞ the (1/m) terms are dropped.
struct PdeResiduals {
  double item[6];
  double max_abs() const;
};

PdeResiduals pde_residuals(const Expr& f, double m, double lambda,
                           std::span<const double> p);

/// The two closed-form potential families on H^n×R, both with λ = −(n−1):
/// example 1 is f = s·√((n−1)m)·t (s = ±1, Killing gradient), example 2 is
/// f = −m·ln(cosh(ηt+a)) with η = √((n−1)/m).
struct ExamplePotential {
  enum class Kind { Example1, Example2 };
  Kind kind;
  int n;
  double m;
  int sign = +1;   // example 1 only
  double a = 0.0;  // example 2 only

  double eta() const;     // √((n−1)/m)
  double lambda() const;  // −(n−1)
  void validate() const;
};

Expr example_potential(const ExamplePotential& spec);

/// Convenience: hnr_metric(n) + example_potential with λ = −(n−1).
QEStructure example_structure(const ExamplePotential& spec);

/// One step of the classification procedure, with its evidence.
struct ClassificationStep {
  std::string name;
  double residual;
  double tolerance;
  bool pass;
};

struct ClassificationVerdict {
  enum class Tag { Example1Plus, Example1Minus, Example2, NotQuasiEinstein };
  Tag tag;
  double a = 0.0;           // fitted shift, Example2 only
  std::string failed_step;  // first failing step, NotQuasiEinstein only
  std::vector<ClassificationStep> steps;
  double max_pde_residual = 0.0;  // max |pde_residuals| over the grid
};

const char* to_string(ClassificationVerdict::Tag tag);

/// Decide whether f matches one of the closed-form families, mechanizing the
/// uniqueness argument on a finite grid:
///   (a) "t-profile": ∂f/∂t ≡ s·√(−mλ) for one sign s, or else
///   (b) "a-fit": ∂f/∂t = −√(−mλ)·tanh(μt+a) with one constant a
///       (μ = √(−λ/m); fit per point by artanh, skipping |∂f/∂t| ≥ √(−mλ));
///   (c) "x-independence": ∂f/∂x_i ≡ 0 for i ≤ n;
///   (d) "lambda-value": λ = −(n−1).
/// Verdicts hold up to grid resolution and tolerance; they are numerical
/// evidence, not proof. Rejects λ ≥ 0 and m = ∞ up front.
ClassificationVerdict classify(const Expr& f, double m, double lambda,
                               const std::vector<std::vector<double>>& grid,
                               double tol = 1e-7);

}  // namespace qem
