#include "mveq/lattice.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "mveq/error.hpp"

namespace mveq {

LatticeGrid::LatticeGrid(double horizon, int steps, LatticeMode mode)
    : horizon_(horizon),
      steps_(steps),
      dt_(horizon / steps),
      sqrt_dt_(std::sqrt(horizon / steps)),
      mode_(mode) {}

LatticeGrid LatticeGrid::build(double horizon, int steps, LatticeMode mode) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw InvalidArgument("grid horizon T must be positive and finite");
  }
  if (steps < 1) {
    throw InvalidArgument("grid step count N must be at least 1");
  }
  if (mode == LatticeMode::FullTree && steps > kMaxFullTreeSteps) {
    throw InvalidArgument("FullTree mode supports at most " +
                          std::to_string(kMaxFullTreeSteps) + " steps, got " +
                          std::to_string(steps));
  }
  return LatticeGrid(horizon, steps, mode);
}

std::int64_t LatticeGrid::width(int k) const {
  return mode_ == LatticeMode::FullTree ? (std::int64_t{1} << k) : std::int64_t{k} + 1;
}

std::int64_t LatticeGrid::up_child(int /*k*/, std::int64_t i) const {
  return mode_ == LatticeMode::FullTree ? 2 * i + 1 : i + 1;
}

std::int64_t LatticeGrid::down_child(int /*k*/, std::int64_t i) const {
  return mode_ == LatticeMode::FullTree ? 2 * i : i;
}

int LatticeGrid::level(int k, std::int64_t i) const {
  const std::int64_t ups =
      mode_ == LatticeMode::FullTree ? std::popcount(static_cast<std::uint64_t>(i)) : i;
  return static_cast<int>(2 * ups - k);
}

std::int64_t LatticeGrid::recombining_index(int k, std::int64_t i) const {
  return (level(k, i) + k) / 2;
}

NodeRange LatticeGrid::descendants(NodeId node, int s) const {
  if (s < node.time || s > steps_) {
    throw InvalidArgument("descendants requested at time " + std::to_string(s) +
                          " from a node at time " + std::to_string(node.time));
  }
  const int depth = s - node.time;
  if (mode_ == LatticeMode::FullTree) {
    return {node.index << depth, (node.index + 1) << depth};
  }
  return {node.index, node.index + depth + 1};
}

AdaptedProcess::AdaptedProcess(const LatticeGrid& grid, int last_time, double fill)
    : grid_(grid), last_time_(last_time) {
  if (last_time < 0 || last_time > grid.steps()) {
    throw InvalidArgument("process last time out of range");
  }
  slices_.reserve(static_cast<std::size_t>(last_time) + 1);
  for (int k = 0; k <= last_time; ++k) {
    slices_.emplace_back(static_cast<std::size_t>(grid.width(k)), fill);
  }
}

AdaptedProcess AdaptedProcess::from_function(
    const LatticeGrid& grid, int last_time,
    const std::function<double(int, std::int64_t)>& value) {
  AdaptedProcess proc(grid, last_time);
  for (int k = 0; k <= last_time; ++k) {
    auto s = proc.slice(k);
    for (std::int64_t i = 0; i < grid.width(k); ++i) {
      s[static_cast<std::size_t>(i)] = value(k, i);
    }
  }
  return proc;
}

double AdaptedProcess::at(NodeId node) const {
  if (node.time < 0 || node.time > last_time_ || node.index < 0 ||
      node.index >= grid_.width(node.time)) {
    throw InvalidArgument("node outside the process domain");
  }
  return (*this)(node.time, node.index);
}

double AdaptedProcess::max_abs() const {
  double m = 0.0;
  for (const auto& s : slices_) {
    for (double v : s) m = std::max(m, std::abs(v));
  }
  return m;
}

double AdaptedProcess::min_value() const {
  double m = slices_.front().front();
  for (const auto& s : slices_) {
    for (double v : s) m = std::min(m, v);
  }
  return m;
}

double max_abs_difference(const AdaptedProcess& a, const AdaptedProcess& b) {
  if (!(a.grid() == b.grid())) {
    throw InvalidArgument("processes live on different grids");
  }
  const int last = std::min(a.last_time(), b.last_time());
  double m = 0.0;
  for (int k = 0; k <= last; ++k) {
    auto sa = a.slice(k);
    auto sb = b.slice(k);
    for (std::size_t i = 0; i < sa.size(); ++i) m = std::max(m, std::abs(sa[i] - sb[i]));
  }
  return m;
}

namespace {

void check_one_step(const AdaptedProcess& proc, NodeId node) {
  const auto& g = proc.grid();
  if (node.time < 0 || node.time >= g.steps() || node.time + 1 > proc.last_time()) {
    throw InvalidArgument("one-step operator needs a node at time k < N and a process "
                          "defined at time k+1 (node time " +
                          std::to_string(node.time) + ", process last time " +
                          std::to_string(proc.last_time()) + ")");
  }
  if (node.index < 0 || node.index >= g.width(node.time)) {
    throw InvalidArgument("node index out of range");
  }
}

}  // namespace

OneStep step_statistics(const AdaptedProcess& proc, NodeId node) {
  check_one_step(proc, node);
  const auto& g = proc.grid();
  const double up = proc(node.time + 1, g.up_child(node.time, node.index));
  const double down = proc(node.time + 1, g.down_child(node.time, node.index));
  return one_step(up, down, g.sqrt_dt());
}

double conditional_expectation(const AdaptedProcess& proc, NodeId node) {
  return step_statistics(proc, node).mean;
}

double martingale_part(const AdaptedProcess& proc, NodeId node) {
  return step_statistics(proc, node).z;
}

std::vector<double> expect_slice(const LatticeGrid& grid, std::span<const double> next,
                                 int k) {
  if (static_cast<std::int64_t>(next.size()) != grid.width(k + 1)) {
    throw InvalidArgument("slice width does not match time k+1");
  }
  std::vector<double> out(static_cast<std::size_t>(grid.width(k)));
  for (std::int64_t i = 0; i < grid.width(k); ++i) {
    out[static_cast<std::size_t>(i)] =
        0.5 * (next[static_cast<std::size_t>(grid.up_child(k, i))] +
               next[static_cast<std::size_t>(grid.down_child(k, i))]);
  }
  return out;
}

double expectation_from(const LatticeGrid& grid, std::span<const double> slice_at_s,
                        int s, NodeId node) {
  if (static_cast<std::int64_t>(slice_at_s.size()) != grid.width(s)) {
    throw InvalidArgument("slice width does not match its time");
  }
  NodeRange range = grid.descendants(node, s);
  std::vector<double> values(slice_at_s.begin() + range.first,
                             slice_at_s.begin() + range.last);
  for (int j = s - 1; j >= node.time; --j) {
    const NodeRange parent = grid.descendants(node, j);
    std::vector<double> reduced(static_cast<std::size_t>(parent.size()));
    for (std::int64_t p = parent.first; p < parent.last; ++p) {
      const auto up = static_cast<std::size_t>(grid.up_child(j, p) - range.first);
      const auto down = static_cast<std::size_t>(grid.down_child(j, p) - range.first);
      reduced[static_cast<std::size_t>(p - parent.first)] = 0.5 * (values[up] + values[down]);
    }
    values = std::move(reduced);
    range = parent;
  }
  return values.front();
}

Moments subtree_moments(const AdaptedProcess& proc, NodeId node) {
  const auto& g = proc.grid();
  if (proc.last_time() != g.steps()) {
    throw InvalidArgument("subtree moments need a process defined at time N");
  }
  if (node.time < 0 || node.time > g.steps()) {
    throw InvalidArgument("node time out of range");
  }
  const auto terminal = proc.slice(g.steps());
  const double mean = expectation_from(g, terminal, g.steps(), node);
  std::vector<double> centered(terminal.size(), 0.0);
  const NodeRange r = g.descendants(node, g.steps());
  for (std::int64_t i = r.first; i < r.last; ++i) {
    const double d = terminal[static_cast<std::size_t>(i)] - mean;
    centered[static_cast<std::size_t>(i)] = d * d;
  }
  return {mean, expectation_from(g, centered, g.steps(), node)};
}

}  // namespace mveq
