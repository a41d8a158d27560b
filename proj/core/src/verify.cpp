#include "mveq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mveq/error.hpp"

namespace mveq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_full_tree(const LatticeGrid& g, const char* what) {
  if (g.mode() != LatticeMode::FullTree) {
    throw InvalidArgument(std::string(what) + " enumerates paths and needs a FullTree grid");
  }
}

void require_spike(const LatticeGrid& g, const PerturbationSpec& p) {
  if (p.m < 1 || p.node.time + p.m > g.steps() || !std::isfinite(p.v)) {
    throw InvalidArgument("perturbation needs m >= 1, k + m <= N and finite v");
  }
}

double time_n_mean(const LatticeGrid& g, std::span<const double> slice, NodeId node) {
  return expectation_from(g, slice, g.steps(), node);
}

// Conditional mean of a time-(k+1) slice value product f(up), f(down).
template <class F>
double child_mean(const LatticeGrid& g, NodeId node, F&& f) {
  return 0.5 * (f(g.up_child(node.time, node.index)) + f(g.down_child(node.time, node.index)));
}

}  // namespace

double cost_functional(const MarketModel& m, const WealthProcess& w, NodeId node) {
  const Moments mo = subtree_moments(w.x, node);
  return mo.variance - (m.gamma1 + m.gamma2 * w.x.at(node)) * mo.mean;
}

RawStrategy spiked_strategy(const MarketModel& m, const WealthProcess& base,
                            const PerturbationSpec& spec) {
  require_spike(m.grid, spec);
  RawStrategy out{strategy_values(base.strategy, base)};
  for (int j = spec.node.time; j < spec.node.time + spec.m; ++j) {
    const NodeRange r = m.grid.descendants(spec.node, j);
    for (std::int64_t i = r.first; i < r.last; ++i) out.u(j, i) += spec.v;
  }
  return out;
}

double perturbation_quotient(const MarketModel& m, const Strategy& strategy,
                             const PerturbationSpec& spec) {
  require_full_tree(m.grid, "perturbation_quotient");
  require_spike(m.grid, spec);
  const WealthProcess base = propagate_wealth(m, strategy, m.x0);
  const WealthProcess spiked = propagate_wealth(m, spiked_strategy(m, base, spec), m.x0);
  const double eps = spec.m * m.grid.dt();
  return (cost_functional(m, spiked, spec.node) - cost_functional(m, base, spec.node)) / eps;
}

std::vector<double> default_v_grid(double wealth_at_node) {
  const double scale = std::max(1.0, std::abs(wealth_at_node));
  std::vector<double> v;
  for (const double a : {1.0, 0.5, 0.1, 0.01}) {
    v.push_back(a * scale);
    v.push_back(-a * scale);
  }
  return v;
}

QuadraticFit fit_quotients(const std::vector<double>& v, const std::vector<double>& q) {
  if (v.size() != q.size() || v.size() < 2) {
    throw InvalidArgument("quadratic fit needs at least two (v, quotient) pairs");
  }
  // Normal equations for q = A v + B v^2.
  double s2 = 0, s3 = 0, s4 = 0, t1 = 0, t2 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    s2 += x * x;
    s3 += x * x * x;
    s4 += x * x * x * x;
    t1 += x * q[i];
    t2 += x * x * q[i];
  }
  const double det = s2 * s4 - s3 * s3;
  if (det == 0.0) throw InvalidArgument("degenerate v-grid for the quadratic fit");
  QuadraticFit fit;
  fit.linear = (t1 * s4 - t2 * s3) / det;
  fit.quadratic = (s2 * t2 - s3 * t1) / det;
  fit.min_quotient = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double model = fit.linear * v[i] + fit.quadratic * v[i] * v[i];
    fit.max_residual = std::max(fit.max_residual, std::abs(model - q[i]));
    fit.min_quotient = std::min(fit.min_quotient, q[i]);
  }
  return fit;
}

SecondOrder second_order_coefficient(const MarketModel& m, const Strategy& strategy,
                                     NodeId node, std::vector<double> v_grid) {
  require_full_tree(m.grid, "second_order_coefficient");
  const WealthProcess base = propagate_wealth(m, strategy, m.x0);
  if (v_grid.empty()) v_grid = default_v_grid(base.x.at(node));
  std::vector<double> q;
  for (const double v : v_grid) q.push_back(perturbation_quotient(m, strategy, {node, v, 1}));
  SecondOrder out;
  out.fit = fit_quotients(v_grid, q);
  out.measured = out.fit.quadratic;
  out.predicted = predicted_curvature(m).at(node);
  return out;
}

BsdePair subtree_discount(const MarketModel& m, NodeId node,
                          std::span<const double> terminal) {
  const auto& g = m.grid;
  const int n = g.steps();
  if (static_cast<std::int64_t>(terminal.size()) != g.width(n)) {
    throw InvalidArgument("terminal slice must cover every time-N node");
  }
  BsdePair out{AdaptedProcess(g, n), AdaptedProcess(g, n - 1)};
  const NodeRange last = g.descendants(node, n);
  for (std::int64_t i = last.first; i < last.last; ++i) {
    out.y(n, i) = terminal[static_cast<std::size_t>(i)];
  }
  for (int s = n - 1; s >= node.time; --s) {
    const NodeRange r = g.descendants(node, s);
    for (std::int64_t i = r.first; i < r.last; ++i) {
      const OneStep st = step_statistics(out.y, {s, i});
      out.y(s, i) = m.growth(s, i) * st.mean;
      out.z(s, i) = st.z;
    }
  }
  return out;
}

ExpansionResult expansion_check(const MarketModel& m, const Strategy& strategy,
                                const PerturbationSpec& spec) {
  const auto& g = m.grid;
  require_full_tree(g, "expansion_check");
  require_spike(g, spec);
  const int n = g.steps();
  const NodeId t = spec.node;
  const WealthProcess base = propagate_wealth(m, strategy, m.x0);
  const WealthProcess spiked = propagate_wealth(m, spiked_strategy(m, base, spec), m.x0);

  ExpansionResult out;
  out.lhs = cost_functional(m, spiked, t) - cost_functional(m, base, t);

  const auto xn = base.x.slice(n);
  std::vector<double> delta(xn.size());
  for (std::size_t i = 0; i < xn.size(); ++i) delta[i] = spiked.x(n, static_cast<std::int64_t>(i)) - xn[i];
  const double mean_x = time_n_mean(g, xn, t);
  const double mean_d = time_n_mean(g, delta, t);
  std::vector<double> ty(xn.size()), te(xn.size());
  for (std::size_t i = 0; i < xn.size(); ++i) {
    ty[i] = 2.0 * xn[i] - 2.0 * mean_x - m.gamma1;
    te[i] = delta[i] - mean_d;
  }
  const BsdePair y = subtree_discount(m, t, ty);
  const BsdePair ye = subtree_discount(m, t, te);
  const BsdePair y0 = solve_unit_discount(m);
  const double xt = base.x.at(t);

  double sum = 0.0;
  for (int j = t.time; j < t.time + spec.m; ++j) {
    std::vector<double> f(static_cast<std::size_t>(g.width(j)), 0.0);
    const NodeRange r = g.descendants(t, j);
    for (std::int64_t i = r.first; i < r.last; ++i) {
      const NodeId node{j, i};
      const double yh = conditional_expectation(y.y, node);
      const double yeh = conditional_expectation(ye.y, node);
      const double y0h = conditional_expectation(y0.y, node);
      f[static_cast<std::size_t>(i)] =
          m.beta(j, i) * (yeh + yh - m.gamma2 * xt * y0h) +
          m.sigma(j, i) * (ye.z(j, i) + y.z(j, i) - m.gamma2 * xt * y0.z(j, i));
    }
    sum += expectation_from(g, f, j, t);
  }
  out.rhs = spec.v * g.dt() * sum;
  return out;
}

namespace {

// Y(., t) from the adjoint equation against the five-process representation
// M(s,t) = P1 X + P2 E_t[P3 X + P4] + P5 and its martingale part N(s,t).
RepresentationResult compare_representation(const MarketModel& m,
                                            const std::array<AdaptedProcess, 5>& P,
                                            const std::array<AdaptedProcess, 5>& L,
                                            const WealthProcess& w, const AdaptedProcess& u,
                                            NodeId t) {
  const auto& g = m.grid;
  const int n = g.steps();
  const auto xn = w.x.slice(n);
  const double mean_x = time_n_mean(g, xn, t);
  std::vector<double> terminal(xn.size());
  for (std::size_t i = 0; i < xn.size(); ++i) terminal[i] = 2.0 * xn[i] - 2.0 * mean_x - m.gamma1;
  const BsdePair y = subtree_discount(m, t, terminal);

  // q[s] = E_t[P3_s X_s + P4_s].
  std::vector<double> q(static_cast<std::size_t>(n + 1));
  for (int s = t.time; s <= n; ++s) {
    std::vector<double> v(static_cast<std::size_t>(g.width(s)));
    for (std::int64_t i = 0; i < g.width(s); ++i) {
      v[static_cast<std::size_t>(i)] = P[2](s, i) * w.x(s, i) + P[3](s, i);
    }
    q[static_cast<std::size_t>(s)] = expectation_from(g, v, s, t);
  }

  RepresentationResult out;
  const double dt = g.dt();
  for (int s = t.time; s <= n; ++s) {
    const NodeRange r = g.descendants(t, s);
    for (std::int64_t i = r.first; i < r.last; ++i) {
      const double mm = P[0](s, i) * w.x(s, i) + P[1](s, i) * q[static_cast<std::size_t>(s)] + P[4](s, i);
      out.max_y_deviation = std::max(out.max_y_deviation, std::abs(y.y(s, i) - mm));
      if (s == t.time) out.diagonal_m = mm;
      if (s == n) continue;
      const NodeId node{s, i};
      const double xhat = m.growth(s, i) * w.x(s, i) + m.beta(s, i) * u(s, i) * dt;
      const double nn = conditional_expectation(P[0], node) * m.sigma(s, i) * u(s, i) +
                        L[0](s, i) * xhat + L[1](s, i) * q[static_cast<std::size_t>(s + 1)] +
                        L[4](s, i);
      out.max_z_deviation = std::max(out.max_z_deviation, std::abs(y.z(s, i) - nn));
      if (s == t.time) out.diagonal_n = nn;
    }
  }
  return out;
}

}  // namespace

RepresentationResult representation_check(const MarketModel& m,
                                          const OperatorStrategy& strategy, double x0,
                                          NodeId node) {
  require_full_tree(m.grid, "representation_check");
  const RiccatiSolution sol = solve_p_system_given_operator(m, strategy.theta, strategy.phi);
  const WealthProcess w = propagate_wealth(m, strategy, x0);
  return compare_representation(m, sol.P, sol.L, w, strategy_values(strategy, w), node);
}

RepresentationResult representation_check(const MarketModel& m, const RawStrategy& strategy,
                                          double x0, NodeId node) {
  require_full_tree(m.grid, "representation_check");
  const ScriptSolution sol = solve_script_p_system(m, strategy.u);
  const WealthProcess w = propagate_wealth(m, strategy, x0);
  return compare_representation(m, sol.P, sol.L, w, strategy.u, node);
}

FirstOrderResiduals residuals_theorem31(const MarketModel& m, const RiccatiSolution& sol) {
  const auto& g = m.grid;
  const int n = g.steps();
  const BsdePair y0 = solve_unit_discount(m);
  FirstOrderResiduals out{AdaptedProcess(g, n - 1), AdaptedProcess(g, n - 1), 0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const FirstOrderCoefficients f = first_order_coefficients(
          m, gather_step(sol.P, node), node, step_statistics(y0.y, node));
      out.g1(k, i) = f.wealth_coefficient + f.gain * sol.theta(k, i);
      out.g2(k, i) = f.constant + f.gain * sol.phi(k, i);
      out.max_g1 = std::max(out.max_g1, std::abs(out.g1(k, i)));
      out.max_g2 = std::max(out.max_g2, std::abs(out.g2(k, i)));
    }
  }
  return out;
}

AdaptedProcess residual_theorem32(const MarketModel& m, const RawStrategy& strategy,
                                  double x0) {
  const auto& g = m.grid;
  require_full_tree(g, "residual_theorem32");
  const int n = g.steps();
  const WealthProcess w = propagate_wealth(m, strategy, x0);
  const ScriptSolution sp = solve_script_p_system(m, strategy.u);
  const BsdePair y0 = solve_unit_discount(m);
  const auto& x = w.x;
  const auto& u = strategy.u;
  AdaptedProcess out(g, n - 1);
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const double ex1 = child_mean(g, node, [&](std::int64_t c) { return sp.P[0](k + 1, c) * x(k + 1, c); });
      const double q = child_mean(g, node, [&](std::int64_t c) {
        return sp.P[2](k + 1, c) * x(k + 1, c) + sp.P[3](k + 1, c);
      });
      const double yhat = ex1 + conditional_expectation(sp.P[1], node) * q +
                          conditional_expectation(sp.P[4], node);
      const double xhat = m.growth(k, i) * x(k, i) + m.beta(k, i) * u(k, i) * g.dt();
      const double zdiag = conditional_expectation(sp.P[0], node) * m.sigma(k, i) * u(k, i) +
                           sp.L[0](k, i) * xhat + sp.L[1](k, i) * q + sp.L[4](k, i);
      const OneStep d = step_statistics(y0.y, node);
      out(k, i) = m.beta(k, i) * (yhat - m.gamma2 * x(k, i) * d.mean) +
                  m.sigma(k, i) * (zdiag - m.gamma2 * x(k, i) * d.z);
    }
  }
  return out;
}

AdaptedProcess spike_curvature(const MarketModel& m) {
  const auto& g = m.grid;
  const int n = g.steps();
  const double dt = g.dt();
  // second[k] = E_k[prod_{j>=k} D_j^2], first[k] = E_k[prod_{j>=k} D_j].
  AdaptedProcess second(g, n, 1.0), first(g, n, 1.0), out(g, n - 1);
  for (int k = n - 1; k >= 0; --k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const NodeId node{k, i};
      const double d = m.growth(k, i);
      second(k, i) = d * d * conditional_expectation(second, node);
      first(k, i) = d * conditional_expectation(first, node);
      const double e_up = m.beta(k, i) * dt + m.sigma(k, i) * g.sqrt_dt();
      const double e_dn = m.beta(k, i) * dt - m.sigma(k, i) * g.sqrt_dt();
      const auto up = g.up_child(k, i);
      const auto dn = g.down_child(k, i);
      const double m2 = 0.5 * (e_up * e_up * second(k + 1, up) + e_dn * e_dn * second(k + 1, dn));
      const double m1 = 0.5 * (e_up * first(k + 1, up) + e_dn * first(k + 1, dn));
      out(k, i) = (m2 - m1 * m1) / dt;
    }
  }
  return out;
}

AdaptedProcess predicted_curvature(const MarketModel& m) {
  const auto& g = m.grid;
  const int n = g.steps();
  const ScriptSolution sp = solve_script_p_system(m, AdaptedProcess(g, n - 1));
  AdaptedProcess out(g, n - 1);
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const double s = m.sigma(k, i);
      out(k, i) = 0.5 * s * s * sp.P[0](k, i);
    }
  }
  return out;
}

namespace {

// Moments of the unit open-loop spike response d (X^{v} = X + v d) over the
// subtree of `node`, together with Cov(X_N, d_N). FullTree: terminal
// descendants are equiprobable.
struct SpikeMoments {
  double mean_d = 0.0;
  double var_d = 0.0;
  double cov_xd = 0.0;
};

SpikeMoments spike_moments(const MarketModel& m, const AdaptedProcess& x, NodeId node) {
  const auto& g = m.grid;
  const int n = g.steps();
  const int k = node.time;
  const double e_up = m.beta(k, node.index) * g.dt() + m.sigma(k, node.index) * g.sqrt_dt();
  const double e_dn = m.beta(k, node.index) * g.dt() - m.sigma(k, node.index) * g.sqrt_dt();
  std::vector<double> d{e_dn, e_up};  // children ordered by index: down = 2p, up = 2p + 1
  for (int j = k + 1; j < n; ++j) {
    const NodeRange r = g.descendants(node, j);
    std::vector<double> next(d.size() * 2);
    for (std::int64_t i = r.first; i < r.last; ++i) {
      const double v = m.growth(j, i) * d[static_cast<std::size_t>(i - r.first)];
      next[static_cast<std::size_t>(g.down_child(j, i) - 2 * r.first)] = v;
      next[static_cast<std::size_t>(g.up_child(j, i) - 2 * r.first)] = v;
    }
    d = std::move(next);
  }
  const NodeRange last = g.descendants(node, n);
  const auto cnt = static_cast<double>(d.size());
  double mx = 0.0, md = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    mx += x(n, last.first + static_cast<std::int64_t>(i));
    md += d[i];
  }
  mx /= cnt;
  md /= cnt;
  SpikeMoments out;
  out.mean_d = md;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double dx = x(n, last.first + static_cast<std::int64_t>(i)) - mx;
    const double dd = d[i] - md;
    out.var_d += dd * dd;
    out.cov_xd += dx * dd;
  }
  out.var_d /= cnt;
  out.cov_xd /= cnt;
  return out;
}

double max_abs_over(const AdaptedProcess& p) {
  double out = 0.0;
  for (int k = 0; k <= p.last_time(); ++k) {
    for (const double v : p.slice(k)) {
      if (!std::isnan(v)) out = std::max(out, std::abs(v));
    }
  }
  return out;
}

}  // namespace

EquilibriumReport certify_equilibrium(const MarketModel& m, const RiccatiSolution& sol,
                                      const Tolerances& tol) {
  const auto& g = m.grid;
  const int n = g.steps();
  const double dt = g.dt();
  const OperatorStrategy op{sol.theta, sol.phi};
  EquilibriumReport rep{residuals_theorem31(m, sol),
                        AdaptedProcess(g, n - 1, kNaN),
                        AdaptedProcess(g, n - 1),
                        AdaptedProcess(g, n - 1),
                        spike_curvature(m),
                        predicted_curvature(m),
                        wealth_envelope(m, op, m.x0),
                        check_h3(sol, m)};

  if (g.mode() == LatticeMode::FullTree) {
    const WealthProcess w = propagate_wealth(m, op, m.x0);
    const AdaptedProcess u = strategy_values(op, w);
    rep.thm32 = residual_theorem32(m, RawStrategy{u}, m.x0);
    for (int k = 0; k < n; ++k) {
      for (std::int64_t i = 0; i < g.width(k); ++i) {
        const NodeId node{k, i};
        const SpikeMoments sm = spike_moments(m, w.x, node);
        const double aversion = m.gamma1 + m.gamma2 * w.x(k, i);
        const std::vector<double> vs = default_v_grid(w.x(k, i));
        std::vector<double> q;
        for (const double v : vs) {
          q.push_back((v * (2.0 * sm.cov_xd - aversion * sm.mean_d) + v * v * sm.var_d) / dt);
        }
        const QuadraticFit fit = fit_quotients(vs, q);
        rep.linear_coefficient(k, i) = fit.linear;
        rep.b_measured(k, i) = fit.quadratic;
        rep.min_quotient(k, i) = fit.min_quotient;
      }
    }
  } else {
    for (int k = 0; k < n; ++k) {
      for (std::int64_t i = 0; i < g.width(k); ++i) {
        const double lo = rep.envelope.lower(k, i);
        const double hi = rep.envelope.upper(k, i);
        const double a_lo = rep.residuals.g1(k, i) * lo + rep.residuals.g2(k, i);
        const double a_hi = rep.residuals.g1(k, i) * hi + rep.residuals.g2(k, i);
        rep.linear_coefficient(k, i) = std::abs(a_lo) >= std::abs(a_hi) ? a_lo : a_hi;
        const double b = rep.b_measured(k, i);
        double worst = std::numeric_limits<double>::infinity();
        for (const double v : default_v_grid(std::max(std::abs(lo), std::abs(hi)))) {
          for (const double a : {a_lo, a_hi}) worst = std::min(worst, a * v + b * v * v);
        }
        rep.min_quotient(k, i) = worst;
      }
    }
  }

  rep.max_abs_linear = max_abs_over(rep.linear_coefficient);
  rep.min_b = rep.b_measured.min_value();
  rep.min_quotient_overall = rep.min_quotient.min_value();
  for (int k = 0; k < n; ++k) {
    for (std::int64_t i = 0; i < g.width(k); ++i) {
      const double pred = rep.b_predicted(k, i);
      rep.max_second_order_rel =
          std::max(rep.max_second_order_rel, std::abs(rep.b_measured(k, i) - pred) / std::abs(pred));
    }
  }
  rep.residuals_pass = rep.residuals.max_g1 <= tol.residual && rep.residuals.max_g2 <= tol.residual;
  rep.linear_pass = rep.max_abs_linear <= tol.perturbation;
  rep.convexity_pass = rep.min_b >= 0.0 && rep.min_quotient_overall >= -tol.perturbation;
  rep.second_order_pass = rep.max_second_order_rel <= tol.second_order;
  return rep;
}

double ModeComparison::max() const {
  return std::max({max_p_difference, max_residual_difference, max_curvature_difference,
                   max_linear_difference});
}

ModeComparison compare_lattice_modes(const Scenario& scenario) {
  if (scenario.steps > 10) {
    throw InvalidArgument("lattice mode comparison is limited to N <= 10");
  }
  Scenario sr = scenario, sf = scenario;
  sr.mode = LatticeMode::Recombining;
  sf.mode = LatticeMode::FullTree;
  const MarketModel mr = build_market(sr, sr.grid());
  const MarketModel mf = build_market(sf, sf.grid());
  const RiccatiSolution rr = solve_riccati(mr);
  const RiccatiSolution rf = solve_riccati(mf);
  const EquilibriumReport cr = certify_equilibrium(mr, rr, scenario.tolerances);
  const EquilibriumReport cf = certify_equilibrium(mf, rf, scenario.tolerances);
  const WealthProcess wf = propagate_wealth(mf, OperatorStrategy{rf.theta, rf.phi}, mf.x0);

  const auto& g = mf.grid;
  const int n = g.steps();
  ModeComparison out;
  auto bump = [](double& acc, double a, double b) { acc = std::max(acc, std::abs(a - b)); };
  for (int k = 0; k <= n; ++k) {
    for (std::int64_t p = 0; p < g.width(k); ++p) {
      const std::int64_t j = g.recombining_index(k, p);
      for (std::size_t c = 0; c < 5; ++c) bump(out.max_p_difference, rr.P[c](k, j), rf.P[c](k, p));
      if (k == n) continue;
      for (std::size_t c = 0; c < 5; ++c) bump(out.max_p_difference, rr.L[c](k, j), rf.L[c](k, p));
      bump(out.max_p_difference, rr.theta(k, j), rf.theta(k, p));
      bump(out.max_p_difference, rr.phi(k, j), rf.phi(k, p));
      bump(out.max_residual_difference, cr.residuals.g1(k, j), cf.residuals.g1(k, p));
      bump(out.max_residual_difference, cr.residuals.g2(k, j), cf.residuals.g2(k, p));
      bump(out.max_curvature_difference, cr.b_measured(k, j), cf.b_measured(k, p));
      bump(out.max_curvature_difference, cr.b_predicted(k, j), cf.b_predicted(k, p));
      const double a_rec = cr.residuals.g1(k, j) * wf.x(k, p) + cr.residuals.g2(k, j);
      bump(out.max_linear_difference, a_rec, cf.linear_coefficient(k, p));
    }
  }
  return out;
}

}  // namespace mveq
