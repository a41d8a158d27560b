#include "mveq/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mveq/error.hpp"

namespace mveq {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ParseError(key + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing required key");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "expected a finite number");
  return x;
}

double optional_number(const json& obj, const std::string& key, const std::string& path,
                       double fallback) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : number(*it, path + "." + key);
}

std::vector<double> number_array(const json& v, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::pair<int, int> table_key(const std::string& key, const std::string& path) {
  const auto comma = key.find(',');
  if (comma == std::string::npos) fail(path, "table key \"" + key + "\" is not \"k,level\"");
  int k = 0;
  int level = 0;
  const char* begin = key.data();
  const char* mid = key.data() + comma;
  const char* end = key.data() + key.size();
  auto r1 = std::from_chars(begin, mid, k);
  auto r2 = std::from_chars(mid + 1, end, level);
  if (r1.ec != std::errc{} || r1.ptr != mid || r2.ec != std::errc{} || r2.ptr != end) {
    fail(path, "table key \"" + key + "\" is not \"k,level\"");
  }
  return {k, level};
}

CoefficientSpec parse_coefficient(const json& v, const std::string& path, int steps) {
  if (v.is_number()) return ConstantCoefficient{number(v, path)};
  if (v.is_array()) {
    if (v.size() != static_cast<std::size_t>(steps)) {
      fail(path, "schedule must have exactly N = " + std::to_string(steps) + " entries");
    }
    return ScheduleCoefficient{number_array(v, path)};
  }
  if (!v.is_object()) fail(path, "expected a number, an array of length N, or a table");
  if (v.contains("base")) {
    AffineWalkCoefficient c;
    const json& base = v.at("base");
    if (base.is_array()) {
      if (base.size() != static_cast<std::size_t>(steps)) {
        fail(path + ".base", "schedule must have exactly N = " + std::to_string(steps) +
                                 " entries");
      }
      c.base = number_array(base, path + ".base");
    } else {
      c.base = {number(base, path + ".base")};
    }
    c.walk_slope = optional_number(v, "walk_slope", path, 0.0);
    for (const auto& [key, _] : v.items()) {
      if (key != "base" && key != "walk_slope") fail(path + "." + key, "unknown key");
    }
    return c;
  }
  WalkTableCoefficient table;
  for (const auto& [key, value] : v.items()) {
    table.values[table_key(key, path)] = number(value, path + "." + key);
  }
  // Every recombining node (k, level) for k < N must be covered.
  for (int k = 0; k < steps; ++k) {
    for (int level = -k; level <= k; level += 2) {
      if (!table.values.contains({k, level})) {
        fail(path, "table has no entry for \"" + std::to_string(k) + "," +
                       std::to_string(level) + "\"");
      }
    }
  }
  return table;
}

LatticeMode parse_mode(const json& grid) {
  auto it = grid.find("mode");
  if (it == grid.end()) return LatticeMode::Recombining;
  if (!it->is_string()) fail("grid.mode", "expected \"recombining\" or \"full_tree\"");
  const auto s = it->get<std::string>();
  if (s == "recombining" || s == "Recombining") return LatticeMode::Recombining;
  if (s == "full_tree" || s == "FullTree") return LatticeMode::FullTree;
  fail("grid.mode", "expected \"recombining\" or \"full_tree\", got \"" + s + "\"");
}

json coefficient_to_json(const CoefficientSpec& spec) {
  if (auto* c = std::get_if<ConstantCoefficient>(&spec)) return c->value;
  if (auto* c = std::get_if<ScheduleCoefficient>(&spec)) return c->values;
  if (auto* c = std::get_if<AffineWalkCoefficient>(&spec)) {
    json j;
    j["base"] = c->base.size() == 1 ? json(c->base.front()) : json(c->base);
    j["walk_slope"] = c->walk_slope;
    return j;
  }
  json j = json::object();
  for (const auto& [key, value] : std::get<WalkTableCoefficient>(spec).values) {
    j[std::to_string(key.first) + "," + std::to_string(key.second)] = value;
  }
  return j;
}

}  // namespace

Scenario parse_scenario_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("<document>: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("<document>", "expected a JSON object");

  Scenario s;
  const json& grid = require(doc, "grid", "");
  s.horizon = number(require(grid, "T", "grid"), "grid.T");
  const json& n = require(grid, "N", "grid");
  if (!n.is_number_integer()) fail("grid.N", "expected an integer");
  s.steps = n.get<int>();
  s.mode = parse_mode(grid);
  if (!(s.horizon > 0.0)) fail("grid.T", "must be positive");
  if (s.steps < 1) fail("grid.N", "must be at least 1");
  if (s.mode == LatticeMode::FullTree && s.steps > kMaxFullTreeSteps) {
    fail("grid.N", "full_tree mode supports at most " + std::to_string(kMaxFullTreeSteps) +
                       " steps");
  }

  const json& coeffs = require(doc, "coefficients", "");
  s.r = parse_coefficient(require(coeffs, "r", "coefficients"), "coefficients.r", s.steps);
  s.b = parse_coefficient(require(coeffs, "b", "coefficients"), "coefficients.b", s.steps);
  s.sigma = parse_coefficient(require(coeffs, "sigma", "coefficients"),
                              "coefficients.sigma", s.steps);

  s.gamma1 = number(require(doc, "gamma1", ""), "gamma1");
  s.gamma2 = number(require(doc, "gamma2", ""), "gamma2");
  s.x0 = number(require(doc, "x0", ""), "x0");
  s.delta = optional_number(doc, "delta", "", s.delta);
  if (s.gamma1 < 0.0) fail("gamma1", "must be non-negative");
  if (s.gamma2 < 0.0) fail("gamma2", "must be non-negative");
  if (s.gamma1 * s.gamma2 != 0.0) fail("gamma1", "gamma1*gamma2 must be 0");
  if (!(s.delta > 0.0)) fail("delta", "must be positive");

  if (auto it = doc.find("tolerances"); it != doc.end()) {
    if (!it->is_object()) fail("tolerances", "expected an object");
    s.tolerances.residual = optional_number(*it, "residual", "tolerances", 1e-10);
    s.tolerances.perturbation = optional_number(*it, "perturbation", "tolerances", 1e-8);
    s.tolerances.second_order = optional_number(*it, "second_order", "tolerances", 0.05);
  }
  if (auto it = doc.find("perturbation"); it != doc.end()) {
    if (!it->is_object()) fail("perturbation", "expected an object");
    if (auto m = it->find("m"); m != it->end()) {
      if (!m->is_number_integer() || m->get<int>() < 1) {
        fail("perturbation.m", "expected a positive integer");
      }
      s.spike_steps = m->get<int>();
    }
  }

  // Evaluate the coefficients on the lattice; hypothesis violations are input errors.
  const LatticeGrid g = s.grid();
  const char* names[] = {"coefficients.r", "coefficients.b", "coefficients.sigma"};
  const CoefficientSpec* specs[] = {&s.r, &s.b, &s.sigma};
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < g.steps(); ++k) {
      for (int level = -k; level <= k; level += 2) {
        double v = 0.0;
        try {
          v = evaluate_coefficient(*specs[c], k, level, g.sqrt_dt());
        } catch (const Error& e) {
          fail(names[c], e.what());
        }
        if (c == 2 && v * v < s.delta) {
          fail(names[c], "sigma^2 >= delta violated at (k=" + std::to_string(k) +
                             ", level=" + std::to_string(level) + "): sigma^2 = " +
                             std::to_string(v * v) + " < delta = " + std::to_string(s.delta));
        }
        if (c == 0 && !(1.0 + v * g.dt() > 0.0)) {
          fail(names[c], "1 + r dt must stay positive; refine N");
        }
      }
    }
  }
  return s;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open scenario file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str());
}

std::string scenario_to_json_text(const Scenario& s) {
  json j;
  j["grid"] = {{"T", s.horizon},
               {"N", s.steps},
               {"mode", s.mode == LatticeMode::FullTree ? "full_tree" : "recombining"}};
  j["coefficients"] = {{"r", coefficient_to_json(s.r)},
                       {"b", coefficient_to_json(s.b)},
                       {"sigma", coefficient_to_json(s.sigma)}};
  j["gamma1"] = s.gamma1;
  j["gamma2"] = s.gamma2;
  j["x0"] = s.x0;
  j["delta"] = s.delta;
  j["tolerances"] = {{"residual", s.tolerances.residual},
                     {"perturbation", s.tolerances.perturbation},
                     {"second_order", s.tolerances.second_order}};
  j["perturbation"] = {{"m", s.spike_steps}};
  return j.dump();
}

}  // namespace mveq
