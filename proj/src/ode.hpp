#pragma once

#include <vector>

#include "expr.hpp"

namespace qem {

/// Parameters of the scalar reduction h' = h²/m + λ.
struct OdeParams {
  double m;
  double lambda;

  void validate() const;
  /// √(−λ/m); the tanh/coth rate. Requires λ < 0.
  double mu_rate() const;
  /// √(−mλ); the equilibrium |h|. Requires λ ≤ 0.
  double equilibrium() const;
};

/// h²/m + λ.
double ode_rhs(double h, const OdeParams& params);

/// One solution family of the reduction, with its maximal interval of
/// definition. `rejected` marks the families whose finite-time blow-up rules
/// them out as t-profiles of a globally smooth potential (coth, tan,
/// rational); the constant and tanh families are global.
struct BranchSolution {
  enum class Tag { ConstantPlus, ConstantMinus, ConstantZero, Tanh, Coth, Tan, Rational };
  Tag tag;
  double param = 0.0;  // a for Tanh, c for Coth/Tan/Rational, unused otherwise
  double t_min;
  double t_max;
  bool rejected = false;
};

const char* to_string(BranchSolution::Tag tag);

/// Closed-form value of the branch at t:
///   ConstantPlus/Minus:  ±√(−mλ)
///   ConstantZero:        0
///   Tanh:      −√(−mλ)·tanh(μt + a),   μ = √(−λ/m)
///   Coth:      −√(−mλ)·coth(μt + c)
///   Tan:        √(mλ)·tan(√(λ/m)·(t + c))
///   Rational:  −m/(t + mc)
/// Throws EvalError for t at or beyond the blow-up locus.
double closed_form(const BranchSolution& branch, const OdeParams& params, double t);

/// The branch through h(0) = h0:
///   λ<0: |h0| = √(−mλ) → Constant±; |h0| < √(−mλ) → Tanh with
///        a = artanh(−h0/√(−mλ)); |h0| > √(−mλ) → Coth (rejected);
///   λ=0: h0 = 0 → ConstantZero (trivial steady diagnostic); h0 ≠ 0 →
///        Rational (rejected);
///   λ>0: Tan (rejected).
BranchSolution classify_branch(const OdeParams& params, double h0);

struct Trajectory {
  std::vector<double> t;
  std::vector<double> h;
  bool blew_up = false;
  double blowup_time = 0.0;  // meaningful only when blew_up
};

/// Fixed-step classical 4th-order integration from (t0,h0) to t1 (t1 < t0
/// integrates backward). Stops and flags blow-up when |h| exceeds 1e8 or a
/// step goes non-finite.
Trajectory integrate(const OdeParams& params, double h0, double t0, double t1, int steps);

inline constexpr double kBlowupThreshold = 1e8;

enum class SolitonSign { Expanding, Steady, Shrinking };

/// λ<0 expanding, λ=0 steady, λ>0 shrinking.
SolitonSign sign_classify(double lambda);
const char* to_string(SolitonSign s);

}  // namespace qem
