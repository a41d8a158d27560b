#pragma once

// Exact discrete filtration: a symmetric +-sqrt(dt) random walk on either a
// recombining lattice (node = number of up moves) or a full binary tree
// (node = path bits, most recent move in the lowest bit).

#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mveq {

enum class LatticeMode { Recombining, FullTree };

/// Largest step count accepted in FullTree mode (2^20 terminal paths).
inline constexpr int kMaxFullTreeSteps = 20;

struct NodeId {
  int time = 0;
  std::int64_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Half-open index range [first, last) of nodes within one time slice.
struct NodeRange {
  std::int64_t first = 0;
  std::int64_t last = 0;
  std::int64_t size() const { return last - first; }
};

class LatticeGrid {
 public:
  /// Throws InvalidArgument for horizon <= 0, steps < 1, or a FullTree
  /// request above kMaxFullTreeSteps.
  static LatticeGrid build(double horizon, int steps,
                           LatticeMode mode = LatticeMode::Recombining);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }
  LatticeMode mode() const { return mode_; }

  std::int64_t width(int k) const;
  std::int64_t up_child(int k, std::int64_t i) const;
  std::int64_t down_child(int k, std::int64_t i) const;
  /// Walk level (#up - #down) of the node.
  int level(int k, std::int64_t i) const;
  double walk(int k, std::int64_t i) const { return level(k, i) * sqrt_dt_; }

  /// Descendants of `node` at time s >= node.time. Always contiguous.
  NodeRange descendants(NodeId node, int s) const;

  /// Maps a node of this grid onto the recombining node with the same level.
  std::int64_t recombining_index(int k, std::int64_t i) const;

  bool operator==(const LatticeGrid& other) const = default;

 private:
  LatticeGrid(double horizon, int steps, LatticeMode mode);

  double horizon_ = 1.0;
  int steps_ = 1;
  double dt_ = 1.0;
  double sqrt_dt_ = 1.0;
  LatticeMode mode_ = LatticeMode::Recombining;
};

/// Real values on every node of times 0..last_time. Integrand-type processes
/// use last_time = N - 1.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;
  AdaptedProcess(const LatticeGrid& grid, int last_time, double fill = 0.0);

  static AdaptedProcess from_function(
      const LatticeGrid& grid, int last_time,
      const std::function<double(int, std::int64_t)>& value);

  const LatticeGrid& grid() const { return grid_; }
  int last_time() const { return last_time_; }

  std::span<double> slice(int k) { return slices_.at(static_cast<std::size_t>(k)); }
  std::span<const double> slice(int k) const {
    return slices_.at(static_cast<std::size_t>(k));
  }

  double& operator()(int k, std::int64_t i) {
    return slices_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }
  double operator()(int k, std::int64_t i) const {
    return slices_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }
  double at(NodeId node) const;

  /// Largest |value| over times 0..last_time.
  double max_abs() const;
  double min_value() const;

  bool operator==(const AdaptedProcess& other) const = default;

 private:
  LatticeGrid grid_ = LatticeGrid::build(1.0, 1);
  int last_time_ = 0;
  std::vector<std::vector<double>> slices_;
};

/// Largest nodewise |a - b| over the common times of two processes on the same grid.
double max_abs_difference(const AdaptedProcess& a, const AdaptedProcess& b);

/// One-step statistics of a time-(k+1) quantity seen from a time-k node:
/// next = mean + z * dxi exactly.
struct OneStep {
  double mean = 0.0;
  double z = 0.0;
};

inline OneStep one_step(double up_value, double down_value, double sqrt_dt) {
  return {0.5 * (up_value + down_value), (up_value - down_value) / (2.0 * sqrt_dt)};
}

/// E_k[proc_{k+1}] at `node` (node.time = k < N).
double conditional_expectation(const AdaptedProcess& proc, NodeId node);

/// Z_k with proc_{k+1} - E_k[proc_{k+1}] = Z_k * dxi_k.
double martingale_part(const AdaptedProcess& proc, NodeId node);

/// Both of the above from one read of the two children.
OneStep step_statistics(const AdaptedProcess& proc, NodeId node);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Conditional mean and variance of the time-N values over the subtree of `node`.
Moments subtree_moments(const AdaptedProcess& proc, NodeId node);

/// E[values_s | node] for a full time-s slice, s >= node.time.
double expectation_from(const LatticeGrid& grid, std::span<const double> slice_at_s,
                        int s, NodeId node);

/// Nodewise E_k of a time-(k+1) slice.
std::vector<double> expect_slice(const LatticeGrid& grid, std::span<const double> next,
                                 int k);

}  // namespace mveq
