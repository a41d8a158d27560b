#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mveq/lattice.hpp"

namespace mveq::cli {

enum ExitCode : int {
  kPass = 0,
  kCertificationFailure = 1,
  kInputError = 2,
  kSolverError = 3,
};

struct CommonOptions {
  std::filesystem::path scenario;
  std::filesystem::path out = ".";
  bool full_tree = false;
  std::optional<std::uint64_t> seed;  // reserved; the lattice is exact
};

struct VerifyOptions {
  CommonOptions common;
  std::optional<double> perturb_theta;
};

struct UniquenessOptions {
  CommonOptions common;
  std::string u0 = "zero";  // zero | equilibrium | file
  std::filesystem::path u0_file;
  int max_iter = 50;
  double tol = 1e-8;
};

struct SweepOptions {
  CommonOptions common;
  std::vector<double> r_amplitudes{0.0, 0.0025, 0.005, 0.01, 0.02};
  std::vector<double> gammas;      // empty: keep the template value
  std::string gamma_param = "gamma1";
  bool zero_beta = false;          // b := r in every cell
};

int run_solve(const CommonOptions& opt, std::ostream& log);
int run_verify(const VerifyOptions& opt, std::ostream& log);
int run_uniqueness(const UniquenessOptions& opt, std::ostream& log);
int run_sweep(const SweepOptions& opt, std::ostream& log);

/// Parses argv and dispatches; returns the process exit code.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

/// 17 significant digits, '.' decimal, "nan"/"inf" for non-finite values.
std::string format_number(double v);

/// Node label used in CSV files: walk level in Recombining mode, a u/d path
/// string ("root" at time 0) in FullTree mode.
std::string node_label(const LatticeGrid& grid, int k, std::int64_t i);

/// Inverse of node_label for FullTree labels.
std::int64_t parse_path_label(const std::string& label, int k);

}  // namespace mveq::cli
