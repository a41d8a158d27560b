#pragma once

// Backward induction on the lattice for the linear adjoint equations, the
// five-equation P-system driven by an operator (Theta, phi), the script-P
// system driven by a raw strategy u, and the two equilibrium Riccati
// constructions.
//
// Discretization. For a BSDE dY = -f ds + Z dW the one-step map is
//   Y_{k+1} = Yhat_k + Z_k dxi_k,   Yhat_k = E_k[Y_{k+1}],
//   Y_k     = Yhat_k + f(Yhat_k, Z_k) dt,
// with every linear discount term r*Y applied as the compounding factor
// (1 + r dt) that the Euler wealth step uses. This is the scheme under which
// the spike-variation identity, the P-representation of the adjoint, and the
// first-order condition are exact on the lattice.

#include <array>
#include <span>

#include "mveq/lattice.hpp"
#include "mveq/market.hpp"

namespace mveq {

struct BsdePair {
  AdaptedProcess y;  ///< times 0..N
  AdaptedProcess z;  ///< times 0..N-1
};

enum class LinearScheme {
  Explicit,  ///< Y_k = (1 + a dt) E_k[Y_{k+1}] + c dt
  Implicit,  ///< Y_k = (E_k[Y_{k+1}] + c dt) / (1 - a dt)
};

/// Driver a_k Y + c_k. Empty processes (last_time() < N-1) mean zero.
struct LinearDriver {
  AdaptedProcess a;
  AdaptedProcess c;
};

/// Throws StepSizeError when 1 + a dt <= 0 (explicit) or a dt >= 1 (implicit).
BsdePair solve_linear_bsde(const LatticeGrid& grid, std::span<const double> terminal,
                           const LinearDriver& driver,
                           LinearScheme scheme = LinearScheme::Explicit);

/// The discount adjoint dY = -rY ds + Z dW with the given terminal slice.
BsdePair solve_discount_bsde(const MarketModel& market, std::span<const double> terminal);

/// Y0 = 1 + int r Y0 - int Z0 dW.
BsdePair solve_unit_discount(const MarketModel& market);

enum class RiccatiBranch { GivenOperator, ConstantRiskAversion, StateDependent };

/// (P_i, Lambda_i), i = 1..5 stored at index i-1, with the operator that
/// drives them and the discrete first-order gain S_k.
struct RiccatiSolution {
  std::array<AdaptedProcess, 5> P;  ///< times 0..N
  std::array<AdaptedProcess, 5> L;  ///< times 0..N-1
  AdaptedProcess theta;             ///< times 0..N-1
  AdaptedProcess phi;               ///< times 0..N-1
  AdaptedProcess gain;              ///< S_k, times 0..N-1; -> sigma^2 P1 as dt -> 0
  RiccatiBranch branch = RiccatiBranch::GivenOperator;
  /// State-dependent branch: max |Theta - printed closed form| (see README).
  double printed_theta_deviation = 0.0;
};

struct ScriptSolution {
  std::array<AdaptedProcess, 5> P;  ///< times 0..N
  std::array<AdaptedProcess, 5> L;  ///< times 0..N-1
};

/// Conditional mean and martingale part of each P_i over one step.
struct PStep {
  std::array<OneStep, 5> p;
};

PStep gather_step(const std::array<AdaptedProcess, 5>& P, NodeId node);

/// First-order condition at a node: the linear coefficient of the spike cost
/// per unit dt equals (wealth_coefficient + gain * Theta) * X + constant + gain * phi
/// when the strategy on that step is Theta * X + phi.
struct FirstOrderCoefficients {
  double wealth_coefficient = 0.0;
  double gain = 0.0;
  double constant = 0.0;
};

/// `y0` holds the one-step statistics of the unit discount Y0 at the node.
FirstOrderCoefficients first_order_coefficients(const MarketModel& market,
                                                const PStep& next, NodeId node,
                                                OneStep y0);

/// P-system for a given operator.
RiccatiSolution solve_p_system_given_operator(const MarketModel& market,
                                              const AdaptedProcess& theta,
                                              const AdaptedProcess& phi);

/// Script-P system for a raw strategy u (no Theta feedback in the P1 driver).
ScriptSolution solve_script_p_system(const MarketModel& market, const AdaptedProcess& u);

/// Constant risk aversion (gamma2 = 0). Throws PreconditionFailure if gamma2 != 0,
/// PositivityFailure if P1 or the gain leaves (0, inf).
RiccatiSolution solve_riccati_gamma2_zero(const MarketModel& market);

/// State-dependent risk aversion (gamma1 = 0, deterministic r). Throws
/// PreconditionFailure for random r or gamma1 != 0.
RiccatiSolution solve_riccati_state_dependent(const MarketModel& market);

/// Dispatch on risk aversion: gamma2 = 0 -> constant branch, otherwise the
/// state-dependent branch.
RiccatiSolution solve_riccati(const MarketModel& market);

struct H3Report {
  double max_p_identity = 0.0;       ///< max |P1 + P2 P3|
  double max_lambda_identity = 0.0;  ///< max |L1 + E[P3'] L2 + E[P2'] L3|
  double min_sigma_sq_p1 = 0.0;      ///< achieved delta' in sigma^2 P1 >= delta'
  double min_gain = 0.0;
  double min_p1 = 0.0;
  double bmo_proxy = 0.0;  ///< sup_k E_k[sum_{j>=k} L1_j^2 dt]
};

H3Report check_h3(const RiccatiSolution& sol, const MarketModel& market);

struct AlternatePhiSystem {
  std::array<AdaptedProcess, 5> K;  ///< coefficient processes, times 0..N-1
  AdaptedProcess M1;                ///< times 0..N, M1(T) = -gamma1
  AdaptedProcess M2;                ///< times 0..N, M2(T) = 0
  AdaptedProcess N1;                ///< times 0..N-1
  AdaptedProcess N2;                ///< times 0..N-1
};

struct AlternatePhiResult {
  AdaptedProcess phi_alt;
  AlternatePhiSystem system;
};

/// phi* through the linear (M1, N1, M2, N2) system. Throws SingularityError
/// when a P3-type denominator vanishes.
AlternatePhiResult compute_phi_star_alternate(const MarketModel& market,
                                              const RiccatiSolution& sol);

}  // namespace mveq
