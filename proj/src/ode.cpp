#include "ode.hpp"

#include <cmath>
#include <limits>

namespace qem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void OdeParams::validate() const {
  if (!std::isfinite(m) || m <= 0.0)
    throw InvalidArgument("reduction requires finite positive m");
  if (!std::isfinite(lambda)) throw InvalidArgument("lambda must be finite");
}

double OdeParams::mu_rate() const {
  validate();
  if (!(lambda < 0.0)) throw InvalidArgument("mu_rate requires lambda < 0");
  return std::sqrt(-lambda / m);
}

double OdeParams::equilibrium() const {
  validate();
  if (lambda > 0.0) throw InvalidArgument("equilibrium requires lambda <= 0");
  return std::sqrt(-m * lambda);
}

double ode_rhs(double h, const OdeParams& params) {
  return h * h / params.m + params.lambda;
}

const char* to_string(BranchSolution::Tag tag) {
  switch (tag) {
    case BranchSolution::Tag::ConstantPlus: return "constant+";
    case BranchSolution::Tag::ConstantMinus: return "constant-";
    case BranchSolution::Tag::ConstantZero: return "constant0";
    case BranchSolution::Tag::Tanh: return "tanh";
    case BranchSolution::Tag::Coth: return "coth";
    case BranchSolution::Tag::Tan: return "tan";
    case BranchSolution::Tag::Rational: return "rational";
  }
  return "?";
}

double closed_form(const BranchSolution& branch, const OdeParams& params, double t) {
  params.validate();
  if (!(t > branch.t_min && t < branch.t_max))
    throw EvalError("time at or beyond the blow-up locus");
  switch (branch.tag) {
    case BranchSolution::Tag::ConstantPlus:
      return params.equilibrium();
    case BranchSolution::Tag::ConstantMinus:
      return -params.equilibrium();
    case BranchSolution::Tag::ConstantZero:
      return 0.0;
    case BranchSolution::Tag::Tanh:
      return -params.equilibrium() * std::tanh(params.mu_rate() * t + branch.param);
    case BranchSolution::Tag::Coth:
      return -params.equilibrium() / std::tanh(params.mu_rate() * t + branch.param);
    case BranchSolution::Tag::Tan: {
      const double k = std::sqrt(params.m * params.lambda);
      const double w = std::sqrt(params.lambda / params.m);
      return k * std::tan(w * (t + branch.param));
    }
    case BranchSolution::Tag::Rational:
      return -params.m / (t + params.m * branch.param);
  }
  throw InvalidArgument("unknown branch");
}

BranchSolution classify_branch(const OdeParams& params, double h0) {
  params.validate();
  if (!std::isfinite(h0)) throw InvalidArgument("h0 must be finite");
  BranchSolution b{};
  b.t_min = -kInf;
  b.t_max = kInf;

  if (params.lambda < 0.0) {
    const double S = params.equilibrium();
    const double mu = params.mu_rate();
    if (h0 == S) {
      b.tag = BranchSolution::Tag::ConstantPlus;
      return b;
    }
    if (h0 == -S) {
      b.tag = BranchSolution::Tag::ConstantMinus;
      return b;
    }
    if (std::abs(h0) < S) {
      b.tag = BranchSolution::Tag::Tanh;
      b.param = std::atanh(-h0 / S);
      return b;
    }
    // |h0| > S: pole where the coth argument vanishes, at t* = −c/μ.
    b.tag = BranchSolution::Tag::Coth;
    b.param = std::atanh(-S / h0);
    b.rejected = true;
    const double pole = -b.param / mu;
    if (h0 > 0.0)
      b.t_max = pole;  // c < 0, pole ahead
    else
      b.t_min = pole;  // c > 0, pole behind
    return b;
  }

  if (params.lambda == 0.0) {
    if (h0 == 0.0) {
      // h ≡ 0: the trivial steady case, reported distinctly rather than as a
      // solution family of its own.
      b.tag = BranchSolution::Tag::ConstantZero;
      return b;
    }
    b.tag = BranchSolution::Tag::Rational;
    b.param = -1.0 / h0;
    b.rejected = true;
    const double pole = params.m / h0;  // t + mc = 0
    if (h0 > 0.0)
      b.t_max = pole;
    else
      b.t_min = pole;
    return b;
  }

  // λ > 0: tangent family, finite blow-up both ways.
  const double k = std::sqrt(params.m * params.lambda);
  const double w = std::sqrt(params.lambda / params.m);
  b.tag = BranchSolution::Tag::Tan;
  b.param = std::atan(h0 / k) / w;
  b.rejected = true;
  const double half = 0.5 * M_PI / w;
  b.t_min = -b.param - half;
  b.t_max = -b.param + half;
  return b;
}

Trajectory integrate(const OdeParams& params, double h0, double t0, double t1, int steps) {
  params.validate();
  if (steps < 1) throw InvalidArgument("steps must be at least 1");
  if (!std::isfinite(h0) || !std::isfinite(t0) || !std::isfinite(t1))
    throw InvalidArgument("integration bounds must be finite");

  const double dt = (t1 - t0) / steps;
  Trajectory tr;
  tr.t.reserve(steps + 1);
  tr.h.reserve(steps + 1);
  double t = t0;
  double h = h0;
  tr.t.push_back(t);
  tr.h.push_back(h);
  if (std::abs(h) > kBlowupThreshold) {
    tr.blew_up = true;
    tr.blowup_time = t;
    return tr;
  }
  for (int i = 0; i < steps; ++i) {
    const double k1 = ode_rhs(h, params);
    const double k2 = ode_rhs(h + 0.5 * dt * k1, params);
    const double k3 = ode_rhs(h + 0.5 * dt * k2, params);
    const double k4 = ode_rhs(h + dt * k3, params);
    h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + (i + 1) * dt;
    if (!std::isfinite(h) || std::abs(h) > kBlowupThreshold) {
      tr.blew_up = true;
      tr.blowup_time = t;
      tr.t.push_back(t);
      tr.h.push_back(h);
      return tr;
    }
    tr.t.push_back(t);
    tr.h.push_back(h);
  }
  return tr;
}

SolitonSign sign_classify(double lambda) {
  if (lambda < 0.0) return SolitonSign::Expanding;
  if (lambda == 0.0) return SolitonSign::Steady;
  return SolitonSign::Shrinking;
}

const char* to_string(SolitonSign s) {
  switch (s) {
    case SolitonSign::Expanding: return "expanding";
    case SolitonSign::Steady: return "steady";
    case SolitonSign::Shrinking: return "shrinking";
  }
  return "?";
}

}  // namespace qem
