#pragma once

// Strategies and the Euler wealth recursion
//   X_{k+1} = (1 + r_k dt) X_k + u_k (beta_k dt + sigma_k dxi_k).

#include <cstdint>
#include <variant>
#include <vector>

#include "mveq/lattice.hpp"
#include "mveq/market.hpp"

namespace mveq {

/// u = Theta X + phi, both on times 0..N-1.
struct OperatorStrategy {
  AdaptedProcess theta;
  AdaptedProcess phi;
  bool operator==(const OperatorStrategy&) const = default;
};

/// Per-node investment amounts on times 0..N-1.
struct RawStrategy {
  AdaptedProcess u;
  bool operator==(const RawStrategy&) const = default;
};

using Strategy = std::variant<OperatorStrategy, RawStrategy>;

struct WealthProcess {
  AdaptedProcess x;  ///< times 0..N
  Strategy strategy;
  double x0 = 0.0;
};

/// Throws InvalidArgument if the strategy is not defined on times 0..N-1 of the
/// market grid, or, in Recombining mode, if the two paths into a node produce
/// different wealth (relative mismatch above 1e-12).
WealthProcess propagate_wealth(const MarketModel& market, const Strategy& strategy,
                               double x0);

struct HomogeneousWealth {
  WealthProcess wealth;            ///< x0 = 1, phi = 0
  std::vector<NodeId> zero_nodes;  ///< nodes where |process| <= 1e-12
};

HomogeneousWealth propagate_homogeneous_wealth(const MarketModel& market,
                                               const AdaptedProcess& theta);

/// Investment amounts along a wealth process. Throws InvalidArgument when the
/// wealth process was propagated under a different strategy or grid.
AdaptedProcess strategy_values(const Strategy& strategy, const WealthProcess& wealth);

/// Bounds of X over all paths reaching each node (times 0..N). Exact for
/// operator strategies in either lattice mode.
struct WealthEnvelope {
  AdaptedProcess lower;
  AdaptedProcess upper;
};

WealthEnvelope wealth_envelope(const MarketModel& market, const OperatorStrategy& strategy,
                               double x0);

/// One Euler step from `x` with investment `u` into the up or down child.
inline double wealth_step(const MarketModel& m, int k, std::int64_t i, double x, double u,
                          bool up) {
  const double dxi = up ? m.grid.sqrt_dt() : -m.grid.sqrt_dt();
  return m.growth(k, i) * x + u * (m.beta(k, i) * m.grid.dt() + m.sigma(k, i) * dxi);
}

}  // namespace mveq
