#pragma once

#include <span>

#include "geometry.hpp"

namespace qem {

/// u = e^(−f/m). Requires finite m.
Expr u_from_f(const Expr& f, double m);

/// Residual of the u-form of the generalized Einstein condition:
/// Ric − (m/u)∇²u − λg at p. Equals qe_residual of (g, f = −m·ln u, m, λ).
Tensor2At qe_u_residual(const MetricField& g, const Expr& u, double m, double lambda,
                        std::span<const double> p);

/// Scalar-curvature linearization L_g(h) = −Δ(tr h) + div(div h) − ⟨h,Ric⟩
/// at p, all operations taken with respect to g.
double linearization_lg(const MetricField& g, const SymExprMatrix& h,
                        std::span<const double> p);

/// Formal L²-adjoint L*_g(u) = −(Δu)g + ∇²u − u·Ric at p. A metric with a
/// positive function in the kernel of L*_g is static.
Tensor2At adjoint_lg_star(const MetricField& g, const Expr& u, std::span<const double> p);

/// Static condition at m = 1: Δ(e^(−f)) + λ·e^(−f) at p.
double static_residual(const MetricField& g, const Expr& f, double lambda,
                       std::span<const double> p);

/// Fiber Einstein constant extracted from the weighted-Laplacian identity
/// Δf − |∇f|² = mλ − m·μ·e^(2f/m):  μ = (mλ − Δf + |∇f|²) / (m·e^(2f/m)).
/// Constant across points exactly when the structure admits an Einstein
/// warped product. Requires finite m.
double mu_fiber(const QEStructure& s, std::span<const double> p);

/// Fiber factory: Flat(k) has Ricci 0; ScaledHyperbolic(k, r²), the metric
/// (r²/y_k²)Σdy_i² on y_k > 0, has Ricci = −(k−1)/r² times itself.
struct FiberSpec {
  enum class Kind { Flat, ScaledHyperbolic };
  Kind kind;
  int k;
  double r2 = 1.0;

  double einstein_constant() const;  // 0 or −(k−1)/r²
  void validate() const;
};

MetricField fiber_metric(const FiberSpec& spec);

/// Fiber whose Einstein constant equals mu: Flat(k) for |mu| ≤ 1e-8, else
/// ScaledHyperbolic(k, −(k−1)/mu) for mu < 0 and k ≥ 2. Positive mu has no
/// implemented fiber family.
FiberSpec matched_fiber(double mu, int k);

/// Product chart (base coordinates, then y_1..y_k) and the warped metric
/// g̃ = g + u²·g_F with u = e^(−f/m).
Chart warped_chart(const MetricField& base, const FiberSpec& spec);
MetricField warped_metric(const QEStructure& s, const FiberSpec& spec);

/// Ric(g̃) − λ·g̃ at a product point, computed with the curvature engine on
/// the (dim base + k)-dimensional warped metric. Preconditions: m finite and
/// integer, k = m, and (unless enforce_match is false) the fiber Einstein
/// constant matches mu_fiber at the base point within 1e-8.
Tensor2At warped_einstein_residual(const QEStructure& s, const FiberSpec& spec,
                                   std::span<const double> p_product,
                                   bool enforce_match = true);

}  // namespace qem
