#include <algorithm>
#include <cmath>

#include "mveq/error.hpp"
#include "mveq/verify.hpp"

namespace mveq {

UniquenessDiagnostics uniqueness_diagnostics(const MarketModel& m, const RawStrategy& strategy,
                                             double x0, const RiccatiSolution& sol) {
  const auto& g = m.grid;
  if (g.mode() != LatticeMode::FullTree) {
    throw InvalidArgument("uniqueness diagnostics need a FullTree grid");
  }
  const int n = g.steps();
  const double dt = g.dt();
  const WealthProcess w = propagate_wealth(m, strategy, x0);
  const ScriptSolution sp = solve_script_p_system(m, strategy.u);
  const auto& P = sp.P;
  const auto& L = sp.L;
  const auto& Ps = sol.P;
  const auto& Ls = sol.L;
  const auto& x = w.x;
  const auto& u = strategy.u;

  UniquenessDiagnostics d{AdaptedProcess(g, n),     AdaptedProcess(g, n),
                          AdaptedProcess(g, n - 1), AdaptedProcess(g, n - 1),
                          AdaptedProcess(g, n - 1), AdaptedProcess(g, n - 1),
                          AdaptedProcess(g, n - 1), x};
  for (int k = 0; k <= n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      d.M1(k, i) = (P[0](k, i) - Ps[0](k, i)) * x(k, i) + P[4](k, i) - Ps[4](k, i);
      d.M2(k, i) = (P[2](k, i) - Ps[2](k, i)) * x(k, i) + P[3](k, i) - Ps[3](k, i);
    }
  }
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const double su = m.sigma(k, i) * u(k, i);
      const double xhat = m.growth(k, i) * x(k, i) + m.beta(k, i) * u(k, i) * dt;
      const double dp1 = conditional_expectation(P[0], node) - conditional_expectation(Ps[0], node);
      const double dp3 = conditional_expectation(P[2], node) - conditional_expectation(Ps[2], node);
      const double m3 = dp1 * su + (L[0](k, i) - Ls[0](k, i)) * xhat + L[4](k, i) - Ls[4](k, i);
      const double m4 = (L[2](k, i) - Ls[2](k, i)) * xhat + dp3 * su + L[3](k, i) - Ls[3](k, i);
      const double m1h = conditional_expectation(d.M1, node);
      const double m2h = conditional_expectation(d.M2, node);
      const double p2h = conditional_expectation(Ps[1], node);
      const double l2 = Ls[1](k, i);
      d.M3(k, i) = m3;
      d.M4(k, i) = m4;
      d.Ybar(k, i) = m1h + p2h * m2h;
      d.Zbar(k, i) = l2 * m2h + m3;
      d.Zcomp(k, i) = m3 + l2 * m2h + p2h * m4;
    }
  }
  d.sup_m[0] = d.M1.max_abs();
  d.sup_m[1] = d.M2.max_abs();
  d.sup_m[2] = d.M3.max_abs();
  d.sup_m[3] = d.M4.max_abs();
  d.sup_ybar = d.Ybar.max_abs();
  d.sup_zbar = d.Zbar.max_abs();
  d.sup_zcomp = d.Zcomp.max_abs();
  return d;
}

FixedPointResult fixed_point_refine(const MarketModel& m, const AdaptedProcess& u0, double x0,
                                    const RiccatiSolution& sol, int max_iter, double tol) {
  const auto& g = m.grid;
  const int n = g.steps();
  FixedPointResult out{u0, {}, false};
  for (int it = 1; it <= max_iter; ++it) {
    const UniquenessDiagnostics d = uniqueness_diagnostics(m, RawStrategy{out.u}, x0, sol);
    AdaptedProcess next(g, n - 1);
    double gap = 0.0;
    for (int k = 0; k < n; ++k) {
      for (std::int64_t i = 0; i < g.width(k); ++i) {
        const double adj = m.beta(k, i) * d.Ybar(k, i) + m.sigma(k, i) * d.Zbar(k, i);
        next(k, i) = sol.theta(k, i) * d.wealth(k, i) + sol.phi(k, i) - adj / sol.gain(k, i);
        gap = std::max(gap, std::abs(next(k, i) - out.u(k, i)));
      }
    }
    out.u = std::move(next);
    out.history.push_back({it, gap, d.sup_ybar});
    if (!std::isfinite(gap)) break;
    if (gap <= tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace mveq
