#pragma once

// Certification of equilibria on the lattice: the cost functional, spike
// perturbations, the expansion and representation identities, first-order
// residuals and the uniqueness diagnostics.
//
// Operations that enumerate paths of a raw strategy need FullTree grids; the
// Recombining certificate works from G1, G2, the wealth envelope and the
// exact second-moment recursion.

#include <optional>
#include <string>
#include <vector>

#include "mveq/bsde.hpp"
#include "mveq/equilibrium.hpp"

namespace mveq {

/// J = Var_t[X_N] - (gamma1 + gamma2 X_t) E_t[X_N] at `node`.
double cost_functional(const MarketModel& market, const WealthProcess& wealth, NodeId node);

struct PerturbationSpec {
  NodeId node;
  double v = 0.0;
  int m = 1;  ///< epsilon = m dt
};

/// u + v on the subtree of `node` over times k..k+m-1.
RawStrategy spiked_strategy(const MarketModel& market, const WealthProcess& base,
                            const PerturbationSpec& spec);

/// [J(u^{v,eps}) - J(u)] / eps at the spike node.
double perturbation_quotient(const MarketModel& market, const Strategy& strategy,
                             const PerturbationSpec& spec);

/// Default v-grid {+-1, +-0.5, +-0.1, +-0.01}, scaled by max(1, |X|) at the node.
std::vector<double> default_v_grid(double wealth_at_node);

/// Least-squares fit of quotient(v) = A v + B v^2 over a v-grid.
struct QuadraticFit {
  double linear = 0.0;     ///< A
  double quadratic = 0.0;  ///< B (already divided by eps)
  double max_residual = 0.0;
  double min_quotient = 0.0;  ///< min over the grid
};

QuadraticFit fit_quotients(const std::vector<double>& v, const std::vector<double>& q);

struct SecondOrder {
  double measured = 0.0;   ///< B from the fit
  double predicted = 0.0;  ///< 0.5 sigma^2 scriptP1 at the node
  QuadraticFit fit;
};

/// Enumerates the spike cost over `v_grid` (default grid if empty). FullTree.
SecondOrder second_order_coefficient(const MarketModel& market, const Strategy& strategy,
                                     NodeId node, std::vector<double> v_grid = {});

struct ExpansionResult {
  double lhs = 0.0;  ///< J(u^{v,eps}) - J(u)
  double rhs = 0.0;  ///< adjoint sums over the spike window
};

ExpansionResult expansion_check(const MarketModel& market, const Strategy& strategy,
                                const PerturbationSpec& spec);

/// Adjoint pair (Y(., t), Z(., t)) started at `node`: explicit discount
/// recursion on the subtree with the given terminal values (full time-N slice;
/// only the node's descendants are read). Values outside the subtree are 0.
BsdePair subtree_discount(const MarketModel& market, NodeId node,
                          std::span<const double> terminal);

struct RepresentationResult {
  double max_y_deviation = 0.0;  ///< max |Y(s,t) - M(s,t)|, s in [t, N]
  double max_z_deviation = 0.0;  ///< max |Z(s,t) - N(s,t)|, s in [t, N)
  double diagonal_m = 0.0;       ///< M(t, t)
  double diagonal_n = 0.0;       ///< N(t, t) (0 at t = N)
};

/// Y(., t) against the P-system representation for an operator strategy.
RepresentationResult representation_check(const MarketModel& market,
                                          const OperatorStrategy& strategy, double x0,
                                          NodeId node);

/// Y(., t) against the script-P representation for a raw strategy.
RepresentationResult representation_check(const MarketModel& market,
                                          const RawStrategy& strategy, double x0,
                                          NodeId node);

struct FirstOrderResiduals {
  AdaptedProcess g1;  ///< times 0..N-1
  AdaptedProcess g2;
  double max_g1 = 0.0;
  double max_g2 = 0.0;
};

/// G1 = wealth_coefficient + S Theta, G2 = C + S phi, with Y0 solved
/// independently from the discount equation.
FirstOrderResiduals residuals_theorem31(const MarketModel& market,
                                        const RiccatiSolution& sol);

/// Linear spike coefficient per unit dt for a raw strategy (FullTree):
/// beta (scriptYhat(t,t) - gamma2 X' Y0hat) + sigma (scriptZ(t,t) - gamma2 X' Z0).
AdaptedProcess residual_theorem32(const MarketModel& market, const RawStrategy& strategy,
                                  double x0);

/// Exact per-node variance of the unit spike response, i.e. B per eps, from
/// the compounding second-moment recursion. Works in both lattice modes.
AdaptedProcess spike_curvature(const MarketModel& market);

/// 0.5 sigma^2 scriptP1 per node.
AdaptedProcess predicted_curvature(const MarketModel& market);

struct UniquenessDiagnostics {
  AdaptedProcess M1, M2;            ///< times 0..N
  AdaptedProcess M3, M4;            ///< times 0..N-1
  AdaptedProcess Ybar, Zbar, Zcomp; ///< times 0..N-1
  AdaptedProcess wealth;            ///< X' under u'
  double sup_m[4] = {0, 0, 0, 0};
  double sup_ybar = 0.0;
  double sup_zbar = 0.0;
  double sup_zcomp = 0.0;
};

UniquenessDiagnostics uniqueness_diagnostics(const MarketModel& market,
                                             const RawStrategy& strategy, double x0,
                                             const RiccatiSolution& sol);

struct FixedPointStep {
  int iteration = 0;
  double sup_gap = 0.0;
  double sup_ybar = 0.0;
};

struct FixedPointResult {
  AdaptedProcess u;
  std::vector<FixedPointStep> history;
  bool converged = false;
};

/// u <- Theta X(u) + phi - (beta Ybar(u) + sigma Zbar(u)) / S until the
/// sup-norm update is <= tol.
FixedPointResult fixed_point_refine(const MarketModel& market, const AdaptedProcess& u0,
                                    double x0, const RiccatiSolution& sol, int max_iter,
                                    double tol);

/// Per-node certification table. `thm32`, the enumerated fit columns are
/// filled in FullTree mode only (NaN otherwise).
struct EquilibriumReport {
  FirstOrderResiduals residuals;
  AdaptedProcess thm32;
  AdaptedProcess linear_coefficient;  ///< A per node (worst case over the envelope in Recombining)
  AdaptedProcess min_quotient;
  AdaptedProcess b_measured;
  AdaptedProcess b_predicted;
  WealthEnvelope envelope;
  H3Report h3;

  double max_abs_linear = 0.0;
  double min_b = 0.0;
  double min_quotient_overall = 0.0;
  double max_second_order_rel = 0.0;

  bool residuals_pass = false;
  bool linear_pass = false;
  bool convexity_pass = false;
  bool second_order_pass = false;
  bool passed() const {
    return residuals_pass && linear_pass && convexity_pass && second_order_pass;
  }
};

EquilibriumReport certify_equilibrium(const MarketModel& market, const RiccatiSolution& sol,
                                      const Tolerances& tol);

/// Recombining vs FullTree on the same scenario (N <= 10): max differences of
/// the Riccati processes, G1/G2, curvature and the enumerated linear
/// coefficient against G1 X + G2.
struct ModeComparison {
  double max_p_difference = 0.0;
  double max_residual_difference = 0.0;
  double max_curvature_difference = 0.0;
  double max_linear_difference = 0.0;
  double max() const;
};

ModeComparison compare_lattice_modes(const Scenario& scenario);

}  // namespace mveq
