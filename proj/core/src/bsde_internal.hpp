#pragma once

#include <array>
#include <string>

#include "mveq/bsde.hpp"

namespace mveq::detail {

inline std::string where(NodeId node) {
  return "(k=" + std::to_string(node.time) + ", node=" + std::to_string(node.index) + ")";
}

/// One backward step of the P-system with operator (theta, phi) at a node.
/// `growth` = 1 + r dt.
inline std::array<double, 5> operator_step(const PStep& s, double growth, double beta,
                                           double sigma, double theta, double phi,
                                           double dt) {
  const auto& [p1, p2, p3, p4, p5] = s.p;
  const double drift1 = p1.mean * beta + p1.z * sigma;
  const double drift3 = p3.mean * beta + p3.z * sigma;
  return {growth * (growth * p1.mean + drift1 * theta * dt),
          growth * p2.mean,
          growth * p3.mean + drift3 * theta * dt,
          p4.mean + drift3 * phi * dt,
          growth * (p5.mean + drift1 * phi * dt)};
}

inline std::array<AdaptedProcess, 5> terminal_p(const MarketModel& m) {
  const auto& g = m.grid;
  const int n = g.steps();
  std::array<AdaptedProcess, 5> P{AdaptedProcess(g, n), AdaptedProcess(g, n),
                                  AdaptedProcess(g, n), AdaptedProcess(g, n),
                                  AdaptedProcess(g, n)};
  const double terminal[5] = {2.0, -2.0, 1.0, 0.0, -m.gamma1};
  for (int i = 0; i < 5; ++i) {
    for (double& v : P[static_cast<std::size_t>(i)].slice(n)) v = terminal[i];
  }
  return P;
}

inline std::array<AdaptedProcess, 5> integrand_array(const LatticeGrid& g) {
  const int n = g.steps() - 1;
  return {AdaptedProcess(g, n), AdaptedProcess(g, n), AdaptedProcess(g, n),
          AdaptedProcess(g, n), AdaptedProcess(g, n)};
}

}  // namespace mveq::detail
