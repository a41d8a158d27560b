#include <CLI11.hpp>

#include "mveq_cli/commands.hpp"

namespace mveq::cli {

namespace {

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--scenario", opt.scenario, "Scenario JSON file")->required();
  cmd->add_option("--out", opt.out, "Output directory");
  cmd->add_flag("--full-tree", opt.full_tree, "Use the non-recombining path tree");
  cmd->add_option("--seed", opt.seed, "Reserved; the lattice computations are exact");
}

}  // namespace

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open-loop mean-variance equilibria on a binomial lattice"};
  app.require_subcommand(1);

  CommonOptions solve_opt;
  auto* solve = app.add_subcommand("solve", "Solve the equilibrium Riccati system");
  add_common(solve, solve_opt);

  VerifyOptions verify_opt;
  auto* verify = app.add_subcommand("verify", "Solve and certify the equilibrium");
  add_common(verify, verify_opt.common);
  verify->add_option("--perturb-theta", verify_opt.perturb_theta,
                     "Shift Theta by this amount before certifying");

  UniquenessOptions uniq_opt;
  auto* uniq = app.add_subcommand("uniqueness", "Uniqueness diagnostics and fixed-point refinement");
  add_common(uniq, uniq_opt.common);
  uniq->add_option("--u0", uniq_opt.u0, "Starting strategy: zero, equilibrium or file")
      ->check(CLI::IsMember({"zero", "equilibrium", "file"}));
  uniq->add_option("--u0-file", uniq_opt.u0_file, "CSV with k,level_or_path,u");
  uniq->add_option("--max-iter", uniq_opt.max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  uniq->add_option("--tol", uniq_opt.tol, "Sup-norm gap tolerance")->check(CLI::PositiveNumber);

  SweepOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "Solve over r-amplitude x gamma cells");
  add_common(sweep, sweep_opt.common);
  sweep->add_option("--r-amplitudes", sweep_opt.r_amplitudes, "Walk slopes of r")->delimiter(',');
  sweep->add_option("--gammas", sweep_opt.gammas, "Risk-aversion values")->delimiter(',');
  sweep->add_option("--gamma-param", sweep_opt.gamma_param, "gamma1 or gamma2")
      ->check(CLI::IsMember({"gamma1", "gamma2"}));
  sweep->add_flag("--zero-beta", sweep_opt.zero_beta, "Set b = r in every cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kInputError;
  }

  if (solve->parsed()) return run_solve(solve_opt, err);
  if (verify->parsed()) return run_verify(verify_opt, err);
  if (uniq->parsed()) {
    if (uniq_opt.u0 == "file" && uniq_opt.u0_file.empty()) {
      err << "input error: --u0 file needs --u0-file\n";
      return kInputError;
    }
    return run_uniqueness(uniq_opt, err);
  }
  return run_sweep(sweep_opt, err);
}

}  // namespace mveq::cli
