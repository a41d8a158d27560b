#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mveq/error.hpp"
#include "mveq/verify.hpp"
#include "support.hpp"

using namespace mveq;

namespace {

struct Equilibrium {
  MarketModel market;
  RiccatiSolution sol;
  OperatorStrategy op;
};

Equilibrium equilibrium(MarketModel m) {
  RiccatiSolution sol = solve_riccati(m);
  OperatorStrategy op{sol.theta, sol.phi};
  return {std::move(m), std::move(sol), std::move(op)};
}

}  // namespace

TEST(CostFunctional, ZeroInvestmentNoAversion) {
  const auto m = fixtures::desk_market(5, LatticeMode::FullTree, 0.01, 0.0, 0.0);
  const WealthProcess w = propagate_wealth(m, RawStrategy{AdaptedProcess(m.grid, 4)}, 1.0);
  // Random r makes the riskless terminal wealth random; use deterministic r here.
  const auto d = fixtures::desk_market(5, LatticeMode::FullTree, 0.0, 0.0, 0.0);
  const WealthProcess wd = propagate_wealth(d, RawStrategy{AdaptedProcess(d.grid, 4)}, 1.0);
  EXPECT_NEAR(cost_functional(d, wd, {0, 0}), 0.0, 1e-15);
  EXPECT_GT(cost_functional(m, w, {0, 0}), 0.0);
}

TEST(CostFunctional, SingleStepClosedForm) {
  Scenario s = fixtures::desk_scenario(1, LatticeMode::FullTree, 0.0, 0.0, 1.0);
  s.horizon = 0.5;
  const auto m = build_market(s, s.grid());
  const double dt = 0.5;
  for (const double u : {-1.0, 0.0, 0.3, 2.0}) {
    const WealthProcess w = propagate_wealth(m, RawStrategy{AdaptedProcess(m.grid, 0, u)}, 1.0);
    const double expected = u * u * 0.04 * dt - (1.0 * (1.0 + 0.02 * dt) + u * 0.04 * dt);
    EXPECT_NEAR(cost_functional(m, w, {0, 0}), expected, 1e-14);
  }
  // Minimizer gamma1 beta / (2 sigma^2) = 0.5.
  auto cost = [&](double u) {
    return cost_functional(m, propagate_wealth(m, RawStrategy{AdaptedProcess(m.grid, 0, u)}, 1.0), {0, 0});
  };
  EXPECT_LT(cost(0.5), cost(0.49));
  EXPECT_LT(cost(0.5), cost(0.51));
  const auto sol = solve_riccati_gamma2_zero(m);
  EXPECT_NEAR(sol.phi(0, 0), 0.5, 1e-14);
}

TEST(PerturbationQuotient, NullSpike) {
  auto e = equilibrium(fixtures::desk_market(5, LatticeMode::FullTree, 0.01, 0.01));
  EXPECT_EQ(perturbation_quotient(e.market, e.op, {{2, 1}, 0.0, 1}), 0.0);
}

TEST(PerturbationQuotient, EquilibriumIsNotImprovable) {
  for (const double gamma2 : {0.0, 0.5}) {
    const double r_slope = gamma2 == 0.0 ? 0.01 : 0.0;
    auto e = equilibrium(fixtures::desk_market(6, LatticeMode::FullTree, r_slope, 0.01,
                                              gamma2 == 0.0 ? 1.0 : 0.0, gamma2));
    const WealthProcess w = propagate_wealth(e.market, e.op, e.market.x0);
    for (int k = 0; k < 6; ++k) {
      for (std::int64_t i = 0; i < e.market.grid.width(k); ++i) {
        for (const double v : default_v_grid(w.x(k, i))) {
          EXPECT_GE(perturbation_quotient(e.market, e.op, {{k, i}, v, 1}), -1e-8);
        }
      }
    }
  }
}

TEST(PerturbationQuotient, ShiftedStrategyFails) {
  auto e = equilibrium(fixtures::desk_market(6, LatticeMode::FullTree, 0.01, 0.01));
  const WealthProcess w = propagate_wealth(e.market, e.op, e.market.x0);
  RawStrategy shifted{strategy_values(e.op, w)};
  shifted.u(2, 1) += 0.1;
  double worst = 0.0;
  for (const double v : default_v_grid(1.0)) {
    worst = std::min(worst, perturbation_quotient(e.market, shifted, {{2, 1}, v, 1}));
  }
  EXPECT_LT(worst, -1e-6);
}

TEST(PerturbationQuotient, NeedsFullTree) {
  auto e = equilibrium(fixtures::desk_market(4, LatticeMode::Recombining));
  EXPECT_THROW(perturbation_quotient(e.market, e.op, {{1, 0}, 0.1, 1}), InvalidArgument);
}

TEST(ExpansionCheck, NullSpike) {
  auto e = equilibrium(fixtures::desk_market(4, LatticeMode::FullTree, 0.01));
  const ExpansionResult r = expansion_check(e.market, e.op, {{1, 1}, 0.0, 2});
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
}

TEST(ExpansionCheck, IdentityForArbitraryStrategies) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 4; ++trial) {
    const double g1 = trial % 2 == 0 ? 1.0 : 0.0;
    const double g2 = trial % 2 == 0 ? 0.0 : 0.5;
    const auto m = fixtures::random_tree_market(5, rng, g1, g2);
    const RawStrategy raw{fixtures::random_process(m.grid, 4, rng)};
    for (int k = 0; k < 5; ++k) {
      for (std::int64_t i = 0; i < m.grid.width(k); ++i) {
        for (int len = 1; k + len <= 5 && len <= 2; ++len) {
          for (const double v : {1.0, -0.25}) {
            const ExpansionResult r = expansion_check(m, raw, {{k, i}, v, len});
            EXPECT_LE(std::abs(r.lhs - r.rhs), 1e-10 * (1.0 + std::abs(r.lhs)));
          }
        }
      }
    }
  }
}

TEST(SubtreeDiscount, ConstantTerminal) {
  const auto m = fixtures::desk_market(6, LatticeMode::FullTree);
  const std::vector<double> ones(64, 1.0);
  const BsdePair p = subtree_discount(m, {2, 3}, ones);
  EXPECT_NEAR(p.y(2, 3), std::pow(1.0 + 0.02 * m.grid.dt(), 4), 1e-14);
  EXPECT_EQ(p.y(2, 0), 0.0);
}

TEST(SecondOrder, EnumerationMatchesRecursion) {
  std::mt19937_64 rng(41);
  const auto m = fixtures::random_tree_market(6, rng, 1.0, 0.0);
  const auto sol = solve_riccati(m);
  const OperatorStrategy op{sol.theta, sol.phi};
  const AdaptedProcess b = spike_curvature(m);
  for (int k = 0; k < 6; ++k) {
    for (std::int64_t i = 0; i < m.grid.width(k); ++i) {
      const SecondOrder so = second_order_coefficient(m, op, {k, i});
      EXPECT_NEAR(so.measured, b(k, i), 1e-9 * b(k, i));
      EXPECT_LE(so.fit.max_residual, 1e-9);
      EXPECT_GT(so.measured, 0.0);
    }
  }
}

TEST(SecondOrder, ConstantCoefficientPrediction) {
  const auto m = fixtures::desk_market(64, LatticeMode::Recombining);
  const AdaptedProcess pred = predicted_curvature(m);
  const AdaptedProcess meas = spike_curvature(m);
  for (int k = 0; k < 64; ++k) {
    const double d = std::pow(1.0 + 0.02 * m.grid.dt(), 64 - k);
    EXPECT_NEAR(pred(k, 0), 0.04 * d * d, 1e-13);
    EXPECT_NEAR(pred(k, 0), 0.04 * std::exp(2 * 0.02 * (1.0 - k / 64.0)), 1e-5);
    EXPECT_LE(std::abs(meas(k, 0) - pred(k, 0)), 0.05 * pred(k, 0));
  }
}

TEST(Representation, OperatorAndScriptIdentities) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 3; ++trial) {
    const auto m = fixtures::random_tree_market(5, rng, 1.0, 0.0);
    const OperatorStrategy op{fixtures::random_process(m.grid, 4, rng),
                              fixtures::random_process(m.grid, 4, rng)};
    const RawStrategy raw{fixtures::random_process(m.grid, 4, rng)};
    for (int k = 0; k <= 5; ++k) {
      for (std::int64_t i = 0; i < m.grid.width(k); ++i) {
        const auto a = representation_check(m, op, 1.0, {k, i});
        const auto b = representation_check(m, raw, 1.0, {k, i});
        EXPECT_LE(a.max_y_deviation, 1e-10);
        EXPECT_LE(a.max_z_deviation, 1e-10);
        EXPECT_LE(b.max_y_deviation, 1e-10);
        EXPECT_LE(b.max_z_deviation, 1e-10);
      }
    }
  }
}

TEST(Representation, LastStepTerminal) {
  auto e = equilibrium(fixtures::desk_market(4, LatticeMode::FullTree, 0.01));
  const WealthProcess w = propagate_wealth(e.market, e.op, 1.0);
  const NodeId t{3, 5};
  const double mean = 0.5 * (w.x(4, 10) + w.x(4, 11));
  const std::vector<double> terminal = [&] {
    std::vector<double> v(16, 0.0);
    for (const std::int64_t c : {10, 11}) v[static_cast<std::size_t>(c)] = 2 * w.x(4, c) - 2 * mean - 1.0;
    return v;
  }();
  const BsdePair y = subtree_discount(e.market, t, terminal);
  const auto rep = representation_check(e.market, e.op, 1.0, t);
  EXPECT_NEAR(rep.diagonal_m, y.y(3, 5), 1e-12);
  EXPECT_NEAR(rep.diagonal_m, e.market.growth(3, 5) * -1.0, 1e-12);
}

TEST(Representation, ZeroFeedbackReducesToScript) {
  std::mt19937_64 rng(61);
  const auto m = fixtures::random_tree_market(6, rng, 1.0, 0.0);
  const auto u = fixtures::random_process(m.grid, 5, rng);
  const auto a = solve_p_system_given_operator(m, AdaptedProcess(m.grid, 5), u);
  const auto b = solve_script_p_system(m, u);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_LE(max_abs_difference(a.P[c], b.P[c]), 1e-14);
    EXPECT_LE(max_abs_difference(a.L[c], b.L[c]), 1e-14);
  }
}

TEST(FirstOrderResiduals, ResidualsVanishAtEquilibrium) {
  for (const auto mode : {LatticeMode::Recombining, LatticeMode::FullTree}) {
    auto e = equilibrium(fixtures::desk_market(8, mode, 0.01, 0.01));
    const auto r = residuals_theorem31(e.market, e.sol);
    EXPECT_LE(r.max_g1, 1e-10);
    EXPECT_LE(r.max_g2, 1e-10);
  }
  auto sd = equilibrium(fixtures::desk_market(16, LatticeMode::Recombining, 0.0, 0.01, 0.0, 0.5));
  const auto r = residuals_theorem31(sd.market, sd.sol);
  EXPECT_LE(r.max_g1, 1e-10);
  EXPECT_EQ(r.max_g2, 0.0);
}

TEST(FirstOrderResiduals, ThetaShiftRaisesG1) {
  auto e = equilibrium(fixtures::desk_market(32, LatticeMode::Recombining, 0.01, 0.01));
  AdaptedProcess theta = e.sol.theta;
  for (int k = 0; k < 32; ++k) {
    for (double& v : theta.slice(k)) v += 0.1;
  }
  const auto shifted = solve_p_system_given_operator(e.market, theta, e.sol.phi);
  const auto r = residuals_theorem31(e.market, shifted);
  const double bound = check_hypotheses(e.market).min_sigma_sq * 0.1 * shifted.P[0].min_value() * 0.9;
  EXPECT_GT(r.max_g1, bound);
}

TEST(SpikeLinearCoefficient, EquilibriumValuesAndLinearCoefficient) {
  std::mt19937_64 rng(71);
  for (const double g2 : {0.0, 0.5}) {
    const auto m = g2 == 0.0 ? fixtures::random_tree_market(6, rng, 1.0, 0.0)
                             : fixtures::desk_market(6, LatticeMode::FullTree, 0.0, 0.02, 0.0, 0.5);
    auto e = equilibrium(m);
    const WealthProcess w = propagate_wealth(e.market, e.op, e.market.x0);
    const RawStrategy raw{strategy_values(e.op, w)};
    const AdaptedProcess r = residual_theorem32(e.market, raw, e.market.x0);
    EXPECT_LE(r.max_abs(), 1e-9);

    RawStrategy off = raw;
    off.u(1, 0) -= 0.2;
    off.u(3, 5) += 0.3;
    const AdaptedProcess r_off = residual_theorem32(e.market, off, e.market.x0);
    for (int k = 0; k < 6; ++k) {
      for (std::int64_t i = 0; i < e.market.grid.width(k); ++i) {
        const SecondOrder so = second_order_coefficient(e.market, off, {k, i});
        EXPECT_NEAR(so.fit.linear, r_off(k, i), 1e-9);
      }
    }
  }
}

TEST(SpikeLinearCoefficient, ZeroInvestmentIsNotEquilibrium) {
  const auto m = fixtures::desk_market(5, LatticeMode::FullTree);
  const AdaptedProcess r = residual_theorem32(m, RawStrategy{AdaptedProcess(m.grid, 4)}, 1.0);
  EXPECT_LT(r(0, 0), -1e-3);
}

TEST(SpikeLinearCoefficient, MatchesG1AffineForm) {
  std::mt19937_64 rng(81);
  const auto m = fixtures::random_tree_market(6, rng, 1.0, 0.0);
  const OperatorStrategy op{fixtures::random_process(m.grid, 5, rng),
                            fixtures::random_process(m.grid, 5, rng)};
  const auto sol = solve_p_system_given_operator(m, op.theta, op.phi);
  const auto g = residuals_theorem31(m, sol);
  const WealthProcess w = propagate_wealth(m, op, 1.0);
  const AdaptedProcess r = residual_theorem32(m, RawStrategy{strategy_values(op, w)}, 1.0);
  for (int k = 0; k < 6; ++k) {
    for (std::int64_t i = 0; i < m.grid.width(k); ++i) {
      EXPECT_NEAR(r(k, i), g.g1(k, i) * w.x(k, i) + g.g2(k, i), 1e-12);
    }
  }
}

TEST(Certify, BothModesPass) {
  for (const auto mode : {LatticeMode::Recombining, LatticeMode::FullTree}) {
    auto e = equilibrium(fixtures::desk_market(8, mode, 0.01, 0.01));
    const EquilibriumReport rep = certify_equilibrium(e.market, e.sol, Tolerances{});
    EXPECT_TRUE(rep.passed());
    EXPECT_LE(rep.max_abs_linear, 1e-8);
    EXPECT_GE(rep.min_b, 0.0);
  }
}

TEST(Certify, ThetaShiftFails) {
  auto e = equilibrium(fixtures::desk_market(16, LatticeMode::Recombining, 0.01, 0.01));
  AdaptedProcess theta = e.sol.theta;
  for (int k = 0; k < 16; ++k) {
    for (double& v : theta.slice(k)) v += 0.1;
  }
  const auto shifted = solve_p_system_given_operator(e.market, theta, e.sol.phi);
  const EquilibriumReport rep = certify_equilibrium(e.market, shifted, Tolerances{});
  EXPECT_FALSE(rep.residuals_pass);
  EXPECT_FALSE(rep.passed());
}

TEST(Certify, LatticeModesAgree) {
  for (const double g2 : {0.0, 0.5}) {
    const Scenario s = fixtures::desk_scenario(7, LatticeMode::Recombining, g2 == 0.0 ? 0.01 : 0.0,
                                              0.01, g2 == 0.0 ? 1.0 : 0.0, g2);
    EXPECT_LE(compare_lattice_modes(s).max(), 1e-12);
  }
}

TEST(QuadraticFit, RecoversExactQuadratic) {
  const std::vector<double> v{1.0, -1.0, 0.5, -0.5, 0.1, -0.1};
  std::vector<double> q;
  for (const double x : v) q.push_back(-0.3 * x + 2.0 * x * x);
  const QuadraticFit f = fit_quotients(v, q);
  EXPECT_NEAR(f.linear, -0.3, 1e-14);
  EXPECT_NEAR(f.quadratic, 2.0, 1e-14);
  EXPECT_LE(f.max_residual, 1e-14);
  EXPECT_THROW(fit_quotients({1.0}, {1.0}), InvalidArgument);
}
