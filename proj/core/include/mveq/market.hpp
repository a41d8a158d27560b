#pragma once

#include <map>
#include <utility>
#include <variant>
#include <vector>

#include "mveq/lattice.hpp"

namespace mveq {

struct Tolerances {
  double residual = 1e-10;      ///< identities (G1, G2, representation, expansion)
  double perturbation = 1e-8;   ///< slack on the equilibrium inequality
  double second_order = 0.05;   ///< relative, measured vs predicted spike curvature
};

/// Coefficient value c at every node.
struct ConstantCoefficient {
  double value = 0.0;
};

/// Deterministic schedule c_0..c_{N-1}.
struct ScheduleCoefficient {
  std::vector<double> values;
};

/// Lookup table keyed by (time index, walk level).
struct WalkTableCoefficient {
  std::map<std::pair<int, int>, double> values;
};

/// base_k + walk_slope * W_k, W_k = level * sqrt(dt). `base` has length 1 or N.
struct AffineWalkCoefficient {
  std::vector<double> base;
  double walk_slope = 0.0;
};

using CoefficientSpec = std::variant<ConstantCoefficient, ScheduleCoefficient,
                                     WalkTableCoefficient, AffineWalkCoefficient>;

/// Throws InvalidArgument when a schedule or table does not cover (k, level).
double evaluate_coefficient(const CoefficientSpec& spec, int k, int level, double sqrt_dt);

struct Scenario {
  double horizon = 1.0;
  int steps = 1;
  LatticeMode mode = LatticeMode::Recombining;
  CoefficientSpec r = ConstantCoefficient{0.0};
  CoefficientSpec b = ConstantCoefficient{0.0};
  CoefficientSpec sigma = ConstantCoefficient{1.0};
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double x0 = 1.0;
  double delta = 1e-6;  ///< lower bound required of sigma^2
  int spike_steps = 1;  ///< epsilon = spike_steps * dt in perturbation tests
  Tolerances tolerances;

  LatticeGrid grid() const { return LatticeGrid::build(horizon, steps, mode); }
};

/// Market coefficients on the lattice. Coefficient processes are integrand-type
/// (defined at times 0..N-1).
struct MarketModel {
  LatticeGrid grid;
  AdaptedProcess r;
  AdaptedProcess b;
  AdaptedProcess sigma;
  AdaptedProcess beta;   ///< b - r
  AdaptedProcess theta;  ///< beta / sigma
  double delta = 1e-6;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double x0 = 1.0;

  /// One-step riskless growth factor 1 + r dt.
  double growth(int k, std::int64_t i) const { return 1.0 + r(k, i) * grid.dt(); }
};

/// Builds coefficients from a scenario on `grid` and validates the hypotheses.
/// Throws HypothesisViolation (sigma^2 < delta, gamma1*gamma2 != 0, negative
/// gamma) or StepSizeError (1 + r dt <= 0).
MarketModel build_market(const Scenario& scenario, const LatticeGrid& grid);

/// Same validation for explicitly given (possibly path-dependent) coefficients.
MarketModel build_market(const LatticeGrid& grid, AdaptedProcess r, AdaptedProcess b,
                         AdaptedProcess sigma, double gamma1, double gamma2, double x0,
                         double delta);

struct HypothesisReport {
  double min_sigma_sq = 0.0;
  double delta = 0.0;
  double max_abs_r = 0.0;
  double max_abs_b = 0.0;
  double max_abs_sigma = 0.0;
  double min_r = 0.0;
  double min_growth = 0.0;  ///< min of 1 + r dt
  double gamma_product = 0.0;
  bool sigma_bound_holds = false;
  bool gamma_product_holds = false;
  bool r_deterministic = false;  ///< r identical across nodes at every time
};

HypothesisReport check_hypotheses(const MarketModel& market);

/// Structural test: every time slice holds a single value.
bool is_deterministic(const AdaptedProcess& proc);

}  // namespace mveq
