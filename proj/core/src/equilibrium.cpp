#include "mveq/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mveq/error.hpp"

namespace mveq {

namespace {

void require_integrand(const AdaptedProcess& p, const LatticeGrid& g, const char* name) {
  if (!(p.grid() == g) || p.last_time() < g.steps() - 1) {
    throw InvalidArgument(std::string(name) + " must be defined on times 0..N-1 of the market grid");
  }
}

void require_strategy(const Strategy& s, const LatticeGrid& g) {
  if (const auto* op = std::get_if<OperatorStrategy>(&s)) {
    require_integrand(op->theta, g, "Theta");
    require_integrand(op->phi, g, "phi");
  } else {
    require_integrand(std::get<RawStrategy>(s).u, g, "u");
  }
}

double control_at(const Strategy& s, int k, std::int64_t i, double x) {
  if (const auto* op = std::get_if<OperatorStrategy>(&s)) {
    return op->theta(k, i) * x + op->phi(k, i);
  }
  return std::get<RawStrategy>(s).u(k, i);
}

// Writes a child value; in Recombining mode the second parent must agree.
void store_child(AdaptedProcess& x, std::vector<char>& seen, int k, std::int64_t c,
                 double value) {
  auto idx = static_cast<std::size_t>(c);
  if (!seen[idx]) {
    seen[idx] = 1;
    x(k, c) = value;
    return;
  }
  const double prev = x(k, c);
  if (std::abs(prev - value) > 1e-12 * std::max({1.0, std::abs(prev), std::abs(value)})) {
    throw InvalidArgument("wealth is path-dependent at (k=" + std::to_string(k) +
                          ", level node " + std::to_string(c) +
                          "); use the full tree for this strategy");
  }
}

}  // namespace

WealthProcess propagate_wealth(const MarketModel& m, const Strategy& strategy, double x0) {
  const auto& g = m.grid;
  const int n = g.steps();
  require_strategy(strategy, g);
  WealthProcess w{AdaptedProcess(g, n), strategy, x0};
  w.x(0, 0) = x0;
  for (int k = 0; k < n; ++k) {
    std::vector<char> seen(static_cast<std::size_t>(g.width(k + 1)), 0);
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const double x = w.x(k, i);
      const double u = control_at(strategy, k, i, x);
      store_child(w.x, seen, k + 1, g.up_child(k, i), wealth_step(m, k, i, x, u, true));
      store_child(w.x, seen, k + 1, g.down_child(k, i), wealth_step(m, k, i, x, u, false));
    }
  }
  return w;
}

HomogeneousWealth propagate_homogeneous_wealth(const MarketModel& m,
                                               const AdaptedProcess& theta) {
  const auto& g = m.grid;
  require_integrand(theta, g, "Theta");
  OperatorStrategy op{theta, AdaptedProcess(g, g.steps() - 1)};
  HomogeneousWealth out{propagate_wealth(m, op, 1.0), {}};
  for (int k = 0; k <= g.steps(); ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      if (std::abs(out.wealth.x(k, i)) <= 1e-12) out.zero_nodes.push_back({k, i});
    }
  }
  return out;
}

AdaptedProcess strategy_values(const Strategy& strategy, const WealthProcess& wealth) {
  if (!(strategy == wealth.strategy)) {
    throw InvalidArgument("wealth process was propagated under a different strategy");
  }
  const auto& g = wealth.x.grid();
  require_strategy(strategy, g);
  if (const auto* raw = std::get_if<RawStrategy>(&strategy)) return raw->u;
  const int n = g.steps();
  AdaptedProcess u(g, n - 1);
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      u(k, i) = control_at(strategy, k, i, wealth.x(k, i));
    }
  }
  return u;
}

WealthEnvelope wealth_envelope(const MarketModel& m, const OperatorStrategy& op, double x0) {
  const auto& g = m.grid;
  const int n = g.steps();
  require_strategy(op, g);
  WealthEnvelope env{AdaptedProcess(g, n, std::numeric_limits<double>::infinity()),
                     AdaptedProcess(g, n, -std::numeric_limits<double>::infinity())};
  env.lower(0, 0) = x0;
  env.upper(0, 0) = x0;
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      // The one-step map is affine in X, so interval endpoints map to endpoints.
      for (const bool up : {true, false}) {
        const std::int64_t c = up ? g.up_child(k, i) : g.down_child(k, i);
        for (const double x : {env.lower(k, i), env.upper(k, i)}) {
          const double next = wealth_step(m, k, i, x, op.theta(k, i) * x + op.phi(k, i), up);
          env.lower(k + 1, c) = std::min(env.lower(k + 1, c), next);
          env.upper(k + 1, c) = std::max(env.upper(k + 1, c), next);
        }
      }
    }
  }
  return env;
}

}  // namespace mveq
