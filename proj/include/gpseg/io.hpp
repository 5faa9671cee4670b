#pragma once

// Text formats: the run configuration, field CSVs and key/value reports.

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"
#include "gpseg/model.hpp"
#include "gpseg/solver.hpp"

namespace gpseg {

// ---------------------------------------------------------------------------
// Number formatting

/// 17 significant digits, enough to round-trip any double.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Run configuration

struct AnalysisToggles {
  bool morse = false;
  std::optional<double> morse_tol;  // absolute; empty means 1e-6 * max|eig|
  bool pohozaev = false;
  std::optional<std::array<double, 2>> cutoff_center;  // default: box center
  std::optional<std::array<double, 2>> cutoff_radius;  // default: quarter lengths
  bool nodal = false;
  double nodal_delta = 1e-3;  // relative to max(u + v)
  bool decay_fit = false;
  int eig_count = 5;
  std::string input_dir;  // analyze: where u.csv / v.csv live; default output dir
};

struct RunConfig {
  Domain domain;
  SystemParams params;
  FunctionalVariant variant = FunctionalVariant::plain;
  std::vector<double> beta_schedule;
  std::optional<int> k;
  std::optional<double> amplitude;
  std::vector<double> mix;
  std::uint64_t rng_seed = 0;
  double rho = 10.0;
  int samples = 100;
  SolveOptions solve;
  bool descend_first = false;
  AnalysisToggles analysis;
  std::string output_dir = "out";

  MinimaxSeed seed() const {
    if (!k) throw ConfigError("[seed] k is required for this subcommand");
    return MinimaxSeed{*k, amplitude, mix};
  }

  /// β values of a continuation run: the schedule if given, else β alone.
  std::vector<double> schedule() const {
    return beta_schedule.empty() ? std::vector<double>{params.beta} : beta_schedule;
  }
};

namespace detail {

struct Entry {
  std::string value;
  int line;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const Entry& e, const std::string& key) {
  const std::string v = trim(e.value);
  if (v == "inf" || v == "+inf") return kInfinity;
  if (v == "-inf") return -kInfinity;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || std::isnan(x))
    throw ParseError(e.line, "'" + key + "' expects a real number, got '" + v + "'");
  return x;
}

inline long long parse_int(const Entry& e, const std::string& key) {
  const std::string v = trim(e.value);
  char* end = nullptr;
  errno = 0;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno != 0)
    throw ParseError(e.line, "'" + key + "' expects an integer, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_u64(const Entry& e, const std::string& key) {
  const std::string v = trim(e.value);
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || end != v.c_str() + v.size() || errno != 0)
    throw ParseError(e.line, "'" + key + "' expects an unsigned integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const Entry& e, const std::string& key) {
  const std::string v = trim(e.value);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ParseError(e.line, "'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<double> parse_reals(const Entry& e, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real({item, e.line}, key));
  if (out.empty()) throw ParseError(e.line, "'" + key + "' expects a comma-separated list");
  return out;
}

inline std::array<double, 2> parse_pair(const Entry& e, const std::string& key, int dim) {
  const auto v = parse_reals(e, key);
  if (v.size() == 1) return {v[0], v[0]};
  if (static_cast<int>(v.size()) != dim)
    throw ParseError(e.line, "'" + key + "' needs 1 or " + std::to_string(dim) + " values");
  return {v[0], v.size() > 1 ? v[1] : 0.0};
}

}  // namespace detail

/// Parses `key = value` lines grouped under [domain] [params] [seed] [solve]
/// [analysis] [output]. `#` starts a comment. Unknown, duplicate or
/// mistyped keys raise ParseError with the offending line.
inline RunConfig parse_config(const std::string& text) {
  static const std::map<std::string, std::set<std::string>> kKeys = {
      {"domain", {"dim", "L", "n"}},
      {"params", {"lambda", "mu", "beta", "beta_schedule", "eps", "R", "variant"}},
      {"seed", {"k", "amplitude", "mix", "rng_seed", "rho", "samples"}},
      {"solve",
       {"grad_tol", "max_descent_iters", "max_newton_iters", "armijo_c", "armijo_shrink", "deflation_power",
        "deflation_shift", "descend"}},
      {"analysis",
       {"morse", "morse_tol", "pohozaev", "cutoff_center", "cutoff_radius", "nodal", "nodal_delta", "decay_fit",
        "eig_count", "input"}},
      {"output", {"dir"}},
  };
  std::map<std::string, detail::Entry> entries;  // "section.key"
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (!kKeys.count(section)) throw ParseError(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    if (section.empty()) throw ParseError(line, "key outside of any section");
    const std::string key = detail::trim(s.substr(0, eq));
    if (!kKeys.at(section).count(key)) throw ParseError(line, "unknown key '" + key + "' in [" + section + "]");
    const std::string full = section + "." + key;
    if (entries.count(full)) throw ParseError(line, "duplicate key '" + key + "'");
    entries[full] = {detail::trim(s.substr(eq + 1)), line};
  }

  const auto get = [&](const std::string& k) -> const detail::Entry* {
    auto it = entries.find(k);
    return it == entries.end() ? nullptr : &it->second;
  };
  const auto require = [&](const std::string& k) -> const detail::Entry& {
    const auto* e = get(k);
    if (!e) throw ParseError(0, "missing required key '" + k + "'");
    return *e;
  };

  RunConfig c;
  const auto& dim_e = require("domain.dim");
  const long long dim = detail::parse_int(dim_e, "dim");
  if (dim != 1 && dim != 2) throw ParseError(dim_e.line, "dim must be 1 or 2");
  c.domain.dim = static_cast<int>(dim);
  const auto& l_e = require("domain.L");
  const auto ls = detail::parse_pair(l_e, "L", c.domain.dim);
  const auto& n_e = require("domain.n");
  {
    std::stringstream ss(n_e.value);
    std::string item;
    std::vector<long long> ns;
    while (std::getline(ss, item, ',')) ns.push_back(detail::parse_int({item, n_e.line}, "n"));
    if (ns.size() != 1 && static_cast<int>(ns.size()) != c.domain.dim)
      throw ParseError(n_e.line, "'n' needs 1 or " + std::to_string(c.domain.dim) + " values");
    if (ns.size() == 1) ns.push_back(ns[0]);
    for (int a = 0; a < c.domain.dim; ++a) {
      if (ns[a] < 3 || ns[a] > 1000000) throw ParseError(n_e.line, "'n' must be at least 3");
      c.domain.nodes[a] = static_cast<int>(ns[a]);
    }
  }
  c.domain.lengths = ls;
  if (c.domain.dim == 1) {
    c.domain.lengths[1] = 0.0;
    c.domain.nodes[1] = 1;
  }
  for (int a = 0; a < c.domain.dim; ++a)
    if (!(c.domain.lengths[a] > 0.0) || !std::isfinite(c.domain.lengths[a]))
      throw ParseError(l_e.line, "'L' must be positive and finite");

  c.params.lambda = detail::parse_real(require("params.lambda"), "lambda");
  c.params.mu = detail::parse_real(require("params.mu"), "mu");
  if (const auto* e = get("params.beta_schedule")) {
    c.beta_schedule = detail::parse_reals(*e, "beta_schedule");
    for (std::size_t i = 1; i < c.beta_schedule.size(); ++i)
      if (!(c.beta_schedule[i] > c.beta_schedule[i - 1]))
        throw ParseError(e->line, "beta_schedule must be strictly ascending");
  }
  if (const auto* e = get("params.beta"))
    c.params.beta = detail::parse_real(*e, "beta");
  else if (!c.beta_schedule.empty())
    c.params.beta = c.beta_schedule.front();
  else
    throw ParseError(0, "missing required key 'params.beta'");
  if (!c.beta_schedule.empty() && c.beta_schedule.front() != c.params.beta)
    throw ParseError(get("params.beta_schedule")->line, "beta_schedule must start at beta");
  if (const auto* e = get("params.eps")) c.params.eps = detail::parse_real(*e, "eps");
  if (const auto* e = get("params.R")) c.params.R_trunc = detail::parse_real(*e, "R");
  if (const auto* e = get("params.variant")) {
    const std::string v = detail::trim(e->value);
    if (v == "plain")
      c.variant = FunctionalVariant::plain;
    else if (v == "truncated")
      c.variant = FunctionalVariant::truncated;
    else
      throw ParseError(e->line, "variant must be plain or truncated");
  }
  try {
    c.params.validate();
  } catch (const ConfigError& err) {
    throw ParseError(0, err.what());
  }

  if (const auto* e = get("seed.k")) {
    const long long k = detail::parse_int(*e, "k");
    if (k < 1 || k > 1000000) throw ParseError(e->line, "k must be >= 1");
    c.k = static_cast<int>(k);
  }
  if (const auto* e = get("seed.amplitude")) {
    c.amplitude = detail::parse_real(*e, "amplitude");
    if (!(*c.amplitude > 0.0) || !std::isfinite(*c.amplitude)) throw ParseError(e->line, "amplitude must be positive");
  }
  if (const auto* e = get("seed.mix")) {
    c.mix = detail::parse_reals(*e, "mix");
    if (!c.k || static_cast<int>(c.mix.size()) != *c.k) throw ParseError(e->line, "mix needs exactly k values");
    double s = 0.0;
    for (double m : c.mix) s += m * m;
    if (std::abs(s - 1.0) > 1e-12) throw ParseError(e->line, "mix must satisfy sum(mix^2) = 1");
  }
  if (const auto* e = get("seed.rng_seed")) c.rng_seed = detail::parse_u64(*e, "rng_seed");
  if (const auto* e = get("seed.rho")) {
    c.rho = detail::parse_real(*e, "rho");
    if (!(c.rho > 0.0) || !std::isfinite(c.rho)) throw ParseError(e->line, "rho must be positive");
  }
  if (const auto* e = get("seed.samples")) {
    const long long s = detail::parse_int(*e, "samples");
    if (s < 1 || s > 100000000) throw ParseError(e->line, "samples must be >= 1");
    c.samples = static_cast<int>(s);
  }

  const auto positive_real = [&](const char* key, double& dst) {
    if (const auto* e = get(std::string("solve.") + key)) {
      dst = detail::parse_real(*e, key);
      if (!(dst > 0.0)) throw ParseError(e->line, std::string(key) + " must be positive");
    }
  };
  const auto count = [&](const char* key, int& dst) {
    if (const auto* e = get(std::string("solve.") + key)) {
      const long long v = detail::parse_int(*e, key);
      if (v < 0 || v > 100000000) throw ParseError(e->line, std::string(key) + " must be non-negative");
      dst = static_cast<int>(v);
    }
  };
  positive_real("grad_tol", c.solve.grad_tol);
  count("max_descent_iters", c.solve.max_descent_iters);
  count("max_newton_iters", c.solve.max_newton_iters);
  positive_real("armijo_c", c.solve.armijo_c);
  positive_real("armijo_shrink", c.solve.armijo_shrink);
  positive_real("deflation_power", c.solve.deflation_power);
  positive_real("deflation_shift", c.solve.deflation_shift);
  if (const auto* e = get("solve.descend")) c.descend_first = detail::parse_bool(*e, "descend");
  try {
    c.solve.validate();
  } catch (const ConfigError& err) {
    throw ParseError(0, err.what());
  }

  auto& a = c.analysis;
  if (const auto* e = get("analysis.morse")) a.morse = detail::parse_bool(*e, "morse");
  if (const auto* e = get("analysis.morse_tol")) {
    a.morse_tol = detail::parse_real(*e, "morse_tol");
    if (!(*a.morse_tol > 0.0)) throw ParseError(e->line, "morse_tol must be positive");
  }
  if (const auto* e = get("analysis.pohozaev")) a.pohozaev = detail::parse_bool(*e, "pohozaev");
  if (const auto* e = get("analysis.cutoff_center")) a.cutoff_center = detail::parse_pair(*e, "cutoff_center", c.domain.dim);
  if (const auto* e = get("analysis.cutoff_radius")) {
    a.cutoff_radius = detail::parse_pair(*e, "cutoff_radius", c.domain.dim);
    if (!((*a.cutoff_radius)[0] > 0.0 && (*a.cutoff_radius)[1] > 0.0))
      throw ParseError(e->line, "cutoff_radius must be positive");
  }
  if (const auto* e = get("analysis.nodal")) a.nodal = detail::parse_bool(*e, "nodal");
  if (const auto* e = get("analysis.nodal_delta")) {
    a.nodal_delta = detail::parse_real(*e, "nodal_delta");
    if (!(a.nodal_delta > 0.0)) throw ParseError(e->line, "nodal_delta must be positive");
  }
  if (const auto* e = get("analysis.decay_fit")) a.decay_fit = detail::parse_bool(*e, "decay_fit");
  if (const auto* e = get("analysis.eig_count")) {
    const long long v = detail::parse_int(*e, "eig_count");
    if (v < 1 || v > 1000000) throw ParseError(e->line, "eig_count must be >= 1");
    a.eig_count = static_cast<int>(v);
  }
  if (const auto* e = get("analysis.input")) a.input_dir = e->value;
  if (const auto* e = get("output.dir")) {
    if (e->value.empty()) throw ParseError(e->line, "output dir must not be empty");
    c.output_dir = e->value;
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Field CSV

/// Header `x1[,x2],value`, one row per interior node in lexicographic order.
inline std::string field_csv(const Grid& grid, const Field& f) {
  grid.check(f);
  std::string out = grid.dim() == 1 ? "x1,value\n" : "x1,x2,value\n";
  for (int p = 0; p < grid.size(); ++p) {
    for (int a = 0; a < grid.dim(); ++a) out += format_real(grid.coordinate(p, a)) + ",";
    out += format_real(f(p)) + "\n";
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void export_field(const Grid& grid, const Field& f, const std::string& path) {
  write_text(path, field_csv(grid, f));
}

/// Inverse of export_field. Rows must match the grid's nodes and coordinates.
inline Field import_field(const Grid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read field file '" + path + "'");
  std::string line;
  const std::string header = grid.dim() == 1 ? "x1,value" : "x1,x2,value";
  if (!std::getline(in, line) || detail::trim(line) != header)
    throw IoError(path + ": expected header '" + header + "'");
  Field f(grid.size());
  int p = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    if (p >= grid.size()) throw IoError(path + ": more rows than grid nodes");
    std::stringstream ss(line);
    std::string item;
    std::vector<double> vals;
    while (std::getline(ss, item, ',')) {
      char* end = nullptr;
      const std::string t = detail::trim(item);
      const double x = std::strtod(t.c_str(), &end);
      if (t.empty() || end != t.c_str() + t.size()) throw IoError(path + ": malformed number '" + t + "'");
      vals.push_back(x);
    }
    if (static_cast<int>(vals.size()) != grid.dim() + 1) throw IoError(path + ": wrong column count");
    for (int a = 0; a < grid.dim(); ++a)
      if (std::abs(vals[a] - grid.coordinate(p, a)) > 1e-9 * grid.length(a))
        throw IoError(path + ": node coordinates do not match the configured grid");
    f(p++) = vals.back();
  }
  if (p != grid.size()) throw IoError(path + ": fewer rows than grid nodes");
  return f;
}

// ---------------------------------------------------------------------------
// Reports

/// Ordered `key: value` lines; blocks are separated by `---`.
class Report {
public:
  void add(const std::string& key, double v) { add_raw(key, format_real(v)); }
  void add(const std::string& key, int v) { add_raw(key, std::to_string(v)); }
  void add(const std::string& key, bool v) { add_raw(key, v ? "true" : "false"); }
  void add(const std::string& key, const std::string& v) { add_raw(key, v); }
  void add(const std::string& key, const char* v) { add_raw(key, v); }
  void separator() { text_ += "---\n"; }
  const std::string& str() const { return text_; }

private:
  void add_raw(const std::string& key, const std::string& v) { text_ += key + ": " + v + "\n"; }
  std::string text_;
};

inline void write_report(const Report& report, const std::string& path) { write_text(path, report.str()); }

}  // namespace gpseg
