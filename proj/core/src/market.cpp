#include "mveq/market.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mveq/error.hpp"

namespace mveq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string node_text(int k, std::int64_t i) {
  return "(k=" + std::to_string(k) + ", node=" + std::to_string(i) + ")";
}

void check_shape(const AdaptedProcess& p, const LatticeGrid& grid, const char* name) {
  if (!(p.grid() == grid) || p.last_time() < grid.steps() - 1) {
    throw InvalidArgument(std::string("coefficient ") + name +
                          " must be defined on times 0..N-1 of the market grid");
  }
}

}  // namespace

double evaluate_coefficient(const CoefficientSpec& spec, int k, int level, double sqrt_dt) {
  return std::visit(
      Overloaded{
          [](const ConstantCoefficient& c) { return c.value; },
          [k](const ScheduleCoefficient& c) {
            if (k < 0 || static_cast<std::size_t>(k) >= c.values.size()) {
              throw InvalidArgument("schedule has no entry for time " + std::to_string(k));
            }
            return c.values[static_cast<std::size_t>(k)];
          },
          [k, level](const WalkTableCoefficient& c) {
            auto it = c.values.find({k, level});
            if (it == c.values.end()) {
              throw InvalidArgument("table has no entry for \"" + std::to_string(k) + "," +
                                    std::to_string(level) + "\"");
            }
            return it->second;
          },
          [k, level, sqrt_dt](const AffineWalkCoefficient& c) {
            if (c.base.empty()) throw InvalidArgument("affine coefficient without base");
            double base = c.base.front();
            if (c.base.size() > 1) {
              if (static_cast<std::size_t>(k) >= c.base.size()) {
                throw InvalidArgument("affine base has no entry for time " +
                                      std::to_string(k));
              }
              base = c.base[static_cast<std::size_t>(k)];
            }
            return base + c.walk_slope * level * sqrt_dt;
          },
      },
      spec);
}

MarketModel build_market(const Scenario& scenario, const LatticeGrid& grid) {
  const int last = grid.steps() - 1;
  auto make = [&](const CoefficientSpec& spec) {
    return AdaptedProcess::from_function(grid, last, [&](int k, std::int64_t i) {
      return evaluate_coefficient(spec, k, grid.level(k, i), grid.sqrt_dt());
    });
  };
  return build_market(grid, make(scenario.r), make(scenario.b), make(scenario.sigma),
                      scenario.gamma1, scenario.gamma2, scenario.x0, scenario.delta);
}

MarketModel build_market(const LatticeGrid& grid, AdaptedProcess r, AdaptedProcess b,
                         AdaptedProcess sigma, double gamma1, double gamma2, double x0,
                         double delta) {
  check_shape(r, grid, "r");
  check_shape(b, grid, "b");
  check_shape(sigma, grid, "sigma");
  if (!(delta > 0.0)) throw HypothesisViolation("delta must be positive");
  if (gamma1 < 0.0 || gamma2 < 0.0) {
    throw HypothesisViolation("gamma1 and gamma2 must be non-negative");
  }
  if (gamma1 * gamma2 != 0.0) {
    throw HypothesisViolation("gamma1*gamma2 must be 0");
  }
  if (!std::isfinite(x0)) throw InvalidArgument("x0 must be finite");

  const int last = grid.steps() - 1;
  MarketModel m{grid,
                std::move(r),
                std::move(b),
                std::move(sigma),
                AdaptedProcess(grid, last),
                AdaptedProcess(grid, last),
                delta,
                gamma1,
                gamma2,
                x0};
  for (int k = 0; k <= last; ++k) {
    for (std::int64_t i = 0; i < grid.width(k); ++i) {
      const double rk = m.r(k, i);
      const double bk = m.b(k, i);
      const double sk = m.sigma(k, i);
      if (!std::isfinite(rk) || !std::isfinite(bk) || !std::isfinite(sk)) {
        throw InvalidArgument("non-finite coefficient at " + node_text(k, i));
      }
      if (sk * sk < delta) {
        throw HypothesisViolation("sigma^2 >= delta violated at " + node_text(k, i) +
                                  ": sigma^2 = " + std::to_string(sk * sk) +
                                  ", delta = " + std::to_string(delta));
      }
      if (!(1.0 + rk * grid.dt() > 0.0)) {
        throw StepSizeError("1 + r dt <= 0 at " + node_text(k, i) + "; refine N");
      }
      m.beta(k, i) = bk - rk;
      m.theta(k, i) = (bk - rk) / sk;
    }
  }
  return m;
}

bool is_deterministic(const AdaptedProcess& proc) {
  for (int k = 0; k <= proc.last_time(); ++k) {
    auto s = proc.slice(k);
    if (std::any_of(s.begin(), s.end(), [&](double v) { return v != s.front(); })) {
      return false;
    }
  }
  return true;
}

HypothesisReport check_hypotheses(const MarketModel& market) {
  HypothesisReport rep;
  rep.delta = market.delta;
  rep.min_sigma_sq = market.sigma.min_value() * market.sigma.min_value();
  double min_sq = rep.min_sigma_sq;
  double min_r = market.r.min_value();
  for (int k = 0; k <= market.sigma.last_time(); ++k) {
    for (double s : market.sigma.slice(k)) min_sq = std::min(min_sq, s * s);
  }
  rep.min_sigma_sq = min_sq;
  rep.max_abs_r = market.r.max_abs();
  rep.max_abs_b = market.b.max_abs();
  rep.max_abs_sigma = market.sigma.max_abs();
  rep.min_r = min_r;
  rep.min_growth = 1.0 + min_r * market.grid.dt();
  rep.gamma_product = market.gamma1 * market.gamma2;
  rep.sigma_bound_holds = min_sq >= market.delta;
  rep.gamma_product_holds =
      rep.gamma_product == 0.0 && market.gamma1 >= 0.0 && market.gamma2 >= 0.0;
  rep.r_deterministic = is_deterministic(market.r);
  return rep;
}

}  // namespace mveq
