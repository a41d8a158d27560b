#pragma once

#include <cstdint>
#include <random>

#include "mveq/lattice.hpp"
#include "mveq/market.hpp"

namespace mveq::fixtures {

inline Scenario desk_scenario(int steps, LatticeMode mode, double r_slope = 0.0,
                              double b_slope = 0.0, double gamma1 = 1.0, double gamma2 = 0.0) {
  Scenario s;
  s.horizon = 1.0;
  s.steps = steps;
  s.mode = mode;
  s.r = AffineWalkCoefficient{{0.02}, r_slope};
  s.b = AffineWalkCoefficient{{0.06}, b_slope};
  s.sigma = ConstantCoefficient{0.2};
  s.gamma1 = gamma1;
  s.gamma2 = gamma2;
  s.x0 = 1.0;
  return s;
}

inline MarketModel desk_market(int steps, LatticeMode mode, double r_slope = 0.0,
                               double b_slope = 0.0, double gamma1 = 1.0, double gamma2 = 0.0) {
  const Scenario s = desk_scenario(steps, mode, r_slope, b_slope, gamma1, gamma2);
  return build_market(s, s.grid());
}

/// Uniform draws in [lo, hi] at every node up to `last_time`.
inline AdaptedProcess random_process(const LatticeGrid& g, int last_time, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  return AdaptedProcess::from_function(g, last_time, [&](int, std::int64_t) { return d(rng); });
}

/// Path-dependent coefficients on a full tree: r, b, sigma drawn per node.
inline MarketModel random_tree_market(int steps, std::mt19937_64& rng, double gamma1,
                                      double gamma2) {
  const LatticeGrid g = LatticeGrid::build(1.0, steps, LatticeMode::FullTree);
  const int last = steps - 1;
  return build_market(g, random_process(g, last, rng, 0.0, 0.05),
                      random_process(g, last, rng, 0.03, 0.12),
                      random_process(g, last, rng, 0.15, 0.3), gamma1, gamma2, 1.0, 1e-6);
}

}  // namespace mveq::fixtures
