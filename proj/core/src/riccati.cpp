#include <algorithm>
#include <cmath>
#include <string>

#include "bsde_internal.hpp"
#include "mveq/bsde.hpp"
#include "mveq/error.hpp"

namespace mveq {

namespace {

using detail::where;

// Backward sweep shared by both equilibrium branches: at each node the
// operator is the unique root of the first-order condition, then the
// P-system is advanced with it.
RiccatiSolution equilibrium_sweep(const MarketModel& m, RiccatiBranch branch) {
  const auto& g = m.grid;
  const int n = g.steps();
  const double dt = g.dt();
  const BsdePair y0 = solve_unit_discount(m);
  RiccatiSolution sol{detail::terminal_p(m), detail::integrand_array(g),
                      AdaptedProcess(g, n - 1), AdaptedProcess(g, n - 1),
                      AdaptedProcess(g, n - 1), branch, 0.0};
  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const PStep s = gather_step(sol.P, node);
      const FirstOrderCoefficients f =
          first_order_coefficients(m, s, node, step_statistics(y0.y, node));
      if (!(f.gain > 0.0) || !std::isfinite(f.gain)) {
        throw PositivityFailure("first-order gain " + std::to_string(f.gain) +
                                " not positive at " + where(node));
      }
      const double th = -f.wealth_coefficient / f.gain;
      const double ph = -f.constant / f.gain;
      auto next = detail::operator_step(s, m.growth(k, i), m.beta(k, i), m.sigma(k, i),
                                        th, ph, dt);
      if (!(next[0] > 0.0) || !std::isfinite(next[0])) {
        throw PositivityFailure("P1 = " + std::to_string(next[0]) +
                                " not positive at " + where(node));
      }
      if (next[1] == 0.0) throw SingularityError("P2 vanishes at " + where(node));
      next[2] = -next[0] / next[1];
      for (std::size_t j = 0; j < 5; ++j) {
        sol.P[j](k, i) = next[j];
        sol.L[j](k, i) = s.p[j].z;
      }
      sol.theta(k, i) = th;
      sol.phi(k, i) = ph;
      sol.gain(k, i) = f.gain;

      if (branch == RiccatiBranch::StateDependent) {
        const double beta = m.beta(k, i);
        const double sigma = m.sigma(k, i);
        const double printed = -(0.5 * beta * s.p[1].mean * m.gamma2 - sigma * s.p[0].z) /
                               (sigma * sigma * s.p[0].mean);
        sol.printed_theta_deviation =
            std::max(sol.printed_theta_deviation, std::abs(th - printed));
      }
    }
  }
  return sol;
}

}  // namespace

RiccatiSolution solve_riccati_gamma2_zero(const MarketModel& market) {
  if (market.gamma2 != 0.0) {
    throw PreconditionFailure("constant risk aversion branch requires gamma2 = 0");
  }
  return equilibrium_sweep(market, RiccatiBranch::ConstantRiskAversion);
}

RiccatiSolution solve_riccati_state_dependent(const MarketModel& market) {
  if (market.gamma1 != 0.0) {
    throw PreconditionFailure("state-dependent case requires gamma1 = 0");
  }
  if (!is_deterministic(market.r)) {
    throw PreconditionFailure("state-dependent case requires deterministic r");
  }
  return equilibrium_sweep(market, RiccatiBranch::StateDependent);
}

RiccatiSolution solve_riccati(const MarketModel& market) {
  return market.gamma2 == 0.0 ? solve_riccati_gamma2_zero(market)
                              : solve_riccati_state_dependent(market);
}

}  // namespace mveq
