#include "mveq/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsde_internal.hpp"
#include "mveq/error.hpp"

namespace mveq {

using detail::where;

BsdePair solve_linear_bsde(const LatticeGrid& grid, std::span<const double> terminal,
                           const LinearDriver& driver, LinearScheme scheme) {
  const int n = grid.steps();
  if (static_cast<std::int64_t>(terminal.size()) != grid.width(n)) {
    throw InvalidArgument("terminal slice must cover every time-N node");
  }
  const bool has_a = driver.a.last_time() >= n - 1 && driver.a.grid() == grid;
  const bool has_c = driver.c.last_time() >= n - 1 && driver.c.grid() == grid;
  BsdePair out{AdaptedProcess(grid, n), AdaptedProcess(grid, n - 1)};
  std::copy(terminal.begin(), terminal.end(), out.y.slice(n).begin());
  const double dt = grid.dt();
  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < grid.width(k); ++i) {
      const NodeId node{k, i};
      const OneStep s = step_statistics(out.y, node);
      const double a = has_a ? driver.a(k, i) : 0.0;
      const double c = has_c ? driver.c(k, i) : 0.0;
      double y = 0.0;
      if (scheme == LinearScheme::Explicit) {
        if (!(1.0 + a * dt > 0.0)) {
          throw StepSizeError("1 + a dt <= 0 at " + where(node) + "; refine N");
        }
        y = (1.0 + a * dt) * s.mean + c * dt;
      } else {
        if (!(a * dt < 1.0)) {
          throw StepSizeError("a dt >= 1 at " + where(node) + "; refine N");
        }
        y = (s.mean + c * dt) / (1.0 - a * dt);
      }
      out.y(k, i) = y;
      out.z(k, i) = s.z;
    }
  }
  return out;
}

BsdePair solve_discount_bsde(const MarketModel& market, std::span<const double> terminal) {
  return solve_linear_bsde(market.grid, terminal, LinearDriver{market.r, {}},
                           LinearScheme::Explicit);
}

BsdePair solve_unit_discount(const MarketModel& market) {
  const std::vector<double> ones(
      static_cast<std::size_t>(market.grid.width(market.grid.steps())), 1.0);
  return solve_discount_bsde(market, ones);
}

PStep gather_step(const std::array<AdaptedProcess, 5>& P, NodeId node) {
  PStep s;
  for (std::size_t i = 0; i < 5; ++i) s.p[i] = step_statistics(P[i], node);
  return s;
}

FirstOrderCoefficients first_order_coefficients(const MarketModel& m, const PStep& next,
                                                NodeId node, OneStep y0) {
  const auto& [p1, p2, p3, p4, p5] = next.p;
  const int k = node.time;
  const auto i = node.index;
  const double beta = m.beta(k, i);
  const double sigma = m.sigma(k, i);
  const double dt = m.grid.dt();
  // Coefficient of E_k[X_{k+1}] in the spike derivative.
  const double a = beta * (p1.mean + p2.mean * p3.mean) + sigma * (p1.z + p2.z * p3.mean);
  FirstOrderCoefficients f;
  f.gain = sigma * sigma * p1.mean +
           sigma * dt * (beta * p1.z + beta * p2.mean * p3.z + sigma * p2.z * p3.z) +
           a * beta * dt;
  f.wealth_coefficient = a * m.growth(k, i) - m.gamma2 * (beta * y0.mean + sigma * y0.z);
  f.constant = beta * (p2.mean * p4.mean + p5.mean) + sigma * (p5.z + p2.z * p4.mean);
  return f;
}

RiccatiSolution solve_p_system_given_operator(const MarketModel& m,
                                              const AdaptedProcess& theta,
                                              const AdaptedProcess& phi) {
  const auto& g = m.grid;
  const int n = g.steps();
  if (!(theta.grid() == g) || !(phi.grid() == g) || theta.last_time() < n - 1 ||
      phi.last_time() < n - 1) {
    throw InvalidArgument("operator (Theta, phi) must be defined on times 0..N-1");
  }
  RiccatiSolution sol{detail::terminal_p(m), detail::integrand_array(g),
                      AdaptedProcess(g, n - 1), AdaptedProcess(g, n - 1),
                      AdaptedProcess(g, n - 1), RiccatiBranch::GivenOperator, 0.0};
  const double dt = g.dt();
  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const PStep s = gather_step(sol.P, node);
      const double th = theta(k, i);
      const double ph = phi(k, i);
      const auto next = detail::operator_step(s, m.growth(k, i), m.beta(k, i),
                                              m.sigma(k, i), th, ph, dt);
      const FirstOrderCoefficients f =
          first_order_coefficients(m, s, node, {-0.5 * s.p[1].mean, -0.5 * s.p[1].z});
      for (std::size_t j = 0; j < 5; ++j) {
        sol.P[j](k, i) = next[j];
        sol.L[j](k, i) = s.p[j].z;
      }
      sol.theta(k, i) = th;
      sol.phi(k, i) = ph;
      sol.gain(k, i) = f.gain;
    }
  }
  return sol;
}

ScriptSolution solve_script_p_system(const MarketModel& m, const AdaptedProcess& u) {
  const auto& g = m.grid;
  const int n = g.steps();
  if (!(u.grid() == g) || u.last_time() < n - 1) {
    throw InvalidArgument("strategy u must be defined on times 0..N-1");
  }
  ScriptSolution sol{detail::terminal_p(m), detail::integrand_array(g)};
  const double dt = g.dt();
  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const PStep s = gather_step(sol.P, {k, i});
      // Theta = 0, phi = u reproduces the script drivers exactly.
      const auto next = detail::operator_step(s, m.growth(k, i), m.beta(k, i),
                                              m.sigma(k, i), 0.0, u(k, i), dt);
      for (std::size_t j = 0; j < 5; ++j) {
        sol.P[j](k, i) = next[j];
        sol.L[j](k, i) = s.p[j].z;
      }
    }
  }
  return sol;
}

H3Report check_h3(const RiccatiSolution& sol, const MarketModel& m) {
  const auto& g = m.grid;
  const int n = g.steps();
  H3Report rep;
  rep.min_sigma_sq_p1 = std::numeric_limits<double>::infinity();
  rep.min_gain = std::numeric_limits<double>::infinity();
  rep.min_p1 = sol.P[0].min_value();
  for (int k = 0; k <= n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      rep.max_p_identity = std::max(
          rep.max_p_identity, std::abs(sol.P[0](k, i) + sol.P[1](k, i) * sol.P[2](k, i)));
    }
  }
  std::vector<double> tail(static_cast<std::size_t>(g.width(n)), 0.0);
  for (int k = n - 1; k >= 0; --k) {
    std::vector<double> next_tail = expect_slice(g, tail, k);
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const double p2 = conditional_expectation(sol.P[1], node);
      const double p3 = conditional_expectation(sol.P[2], node);
      const double id =
          sol.L[0](k, i) + p3 * sol.L[1](k, i) + p2 * sol.L[2](k, i);
      rep.max_lambda_identity = std::max(rep.max_lambda_identity, std::abs(id));
      const double s = m.sigma(k, i);
      rep.min_sigma_sq_p1 = std::min(rep.min_sigma_sq_p1, s * s * sol.P[0](k, i));
      rep.min_gain = std::min(rep.min_gain, sol.gain(k, i));
      auto& t = next_tail[static_cast<std::size_t>(i)];
      t += sol.L[0](k, i) * sol.L[0](k, i) * g.dt();
      rep.bmo_proxy = std::max(rep.bmo_proxy, t);
    }
    tail = std::move(next_tail);
  }
  return rep;
}

AlternatePhiResult compute_phi_star_alternate(const MarketModel& m,
                                              const RiccatiSolution& sol) {
  const auto& g = m.grid;
  const int n = g.steps();
  const double dt = g.dt();
  AlternatePhiResult out{AdaptedProcess(g, n - 1),
                         {detail::integrand_array(g), AdaptedProcess(g, n),
                          AdaptedProcess(g, n), AdaptedProcess(g, n - 1),
                          AdaptedProcess(g, n - 1)}};
  auto& sys = out.system;
  for (double& v : sys.M1.slice(n)) v = -m.gamma1;

  auto nonzero = [](double v, NodeId node, const char* what) {
    if (v == 0.0 || !std::isfinite(v)) {
      throw SingularityError(std::string(what) + " vanishes at " + where(node));
    }
  };

  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const OneStep p2 = step_statistics(sol.P[1], node);
      const OneStep p3 = step_statistics(sol.P[2], node);
      const double beta = m.beta(k, i);
      const double sigma = m.sigma(k, i);
      const double r = m.r(k, i);
      // Lattice counterparts of sigma P2 and sigma P3.
      const double s2 = sigma * p2.mean + beta * p2.z * dt;
      const double s3 = sigma * p3.mean + beta * p3.z * dt;
      nonzero(s2, node, "P2");
      nonzero(s3, node, "P3");
      const double kappa = p3.mean * beta + p3.z * sigma;
      const double k1 = r - beta * p2.z / s2;
      const double k2 = -sigma * p2.z / s2;
      const double k3 = kappa * beta / (s2 * s3);
      const double k4 = kappa * sigma / (s2 * s3);
      const double k5 = -kappa / s3;
      sys.K[0](k, i) = k1;
      sys.K[1](k, i) = k2;
      sys.K[2](k, i) = k3;
      sys.K[3](k, i) = k4;
      sys.K[4](k, i) = k5;

      const OneStep m1 = step_statistics(sys.M1, node);
      const OneStep m2 = step_statistics(sys.M2, node);
      sys.N1(k, i) = m1.z;
      sys.N2(k, i) = m2.z;
      sys.M1(k, i) = m.growth(k, i) * (m1.mean + ((k1 - r) * m1.mean + k2 * m1.z) * dt);
      sys.M2(k, i) = m2.mean + (k3 * m1.mean + k4 * m1.z + k5 * m2.z) * dt;
      out.phi_alt(k, i) = (beta * m1.mean + sigma * m1.z) / (s2 * s3) - m2.z / s3;
    }
  }
  return out;
}

}  // namespace mveq
