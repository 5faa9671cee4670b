#pragma once

// Batch driver behind the gpseg tool. Each subcommand validates everything it
// can before touching the output directory, so configuration errors (exit 1)
// leave no artifacts. Solver failures (exit 2) still write the partial fields
// and a report ending in an `error:` line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gpseg/analysis.hpp"
#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"
#include "gpseg/io.hpp"
#include "gpseg/model.hpp"
#include "gpseg/solver.hpp"

namespace gpseg {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNotConverged = 2 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"eig", "solve", "continue", "analyze", "probe"};
  return names;
}

namespace detail {

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline std::optional<CutoffFunction> configured_cutoff(const Grid& grid, const RunConfig& cfg) {
  if (!cfg.analysis.pohozaev) return std::nullopt;
  std::array<double, 2> center{0.5 * grid.length(0), grid.dim() == 2 ? 0.5 * grid.length(1) : 0.0};
  std::array<double, 2> radius{0.25 * grid.length(0), grid.dim() == 2 ? 0.25 * grid.length(1) : 1.0};
  if (cfg.analysis.cutoff_center) center = *cfg.analysis.cutoff_center;
  if (cfg.analysis.cutoff_radius) radius = *cfg.analysis.cutoff_radius;
  CutoffFunction c = quintic_bump(grid, center, radius);
  try {
    check_cutoff_support(grid, c.values);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("pohozaev cutoff: ") + e.what());
  }
  return c;
}

inline void header(Report& r, const std::string& sub, const Grid& grid, const RunConfig& cfg) {
  r.add("subcommand", sub);
  r.add("dim", grid.dim());
  r.add("nodes", grid.size());
  r.add("variant", to_string(cfg.variant));
  r.add("lambda", cfg.params.lambda);
  r.add("mu", cfg.params.mu);
}

/// State keys in their fixed order; toggled analyses are skipped when off.
inline void state_block(Report& r, const Grid& grid, const RunConfig& cfg, const SystemParams& params,
                        const StatePair& s, const std::optional<CutoffFunction>& cutoff) {
  r.add("energy", energy(grid, params, s, cfg.variant));
  r.add("residual", residual_norm(grid, params, s, cfg.variant));
  if (cfg.analysis.morse) {
    const MorseReport m = morse_index(grid, params, s, cfg.variant, cfg.analysis.morse_tol);
    r.add("morse_index", m.index);
    r.add("nullity", m.nullity);
    r.add("morse_tol", m.tol);
  }
  r.add("segregation", segregation(grid, s));
  r.add("h1_u", h1_norm(grid, s.u));
  r.add("h1_v", h1_norm(grid, s.v));
  r.add("linf_u", s.u.cwiseAbs().maxCoeff());
  r.add("linf_v", s.v.cwiseAbs().maxCoeff());
  if (cfg.analysis.nodal) {
    const Field sum = s.u + s.v;
    const double top = sum.maxCoeff();
    const double delta = cfg.analysis.nodal_delta * (top > 0.0 ? top : 1.0);
    r.add("nodal_components", top > 0.0 ? nodal_components(grid, sum, delta) : 0);
    r.add("nodal_delta", delta);
  }
  if (cutoff) {
    const PohozaevReport p = pohozaev_residual(grid, params, s, *cutoff);
    r.add("pohozaev_residual", p.residual);
    r.add("pohozaev_cutoff", p.cutoff_id);
  }
}

inline void write_state(const Grid& grid, const StatePair& s, const std::string& dir, const std::string& suffix = "") {
  export_field(grid, s.u, join(dir, "u" + suffix + ".csv"));
  export_field(grid, s.v, join(dir, "v" + suffix + ".csv"));
}

struct Outcome {
  Report report;
  std::string report_path;
};

inline int cmd_eig(const RunConfig& cfg, Outcome& out) {
  const Grid grid = build_grid(cfg.domain);
  if (cfg.analysis.eig_count > grid.size()) throw ConfigError("eig_count exceeds the number of grid nodes");
  const auto pairs = dirichlet_eigenpairs(grid, cfg.analysis.eig_count);
  std::string table = "j,value\n";
  for (std::size_t j = 0; j < pairs.size(); ++j) table += std::to_string(j + 1) + "," + format_real(pairs[j].value) + "\n";
  write_text(join(cfg.output_dir, "eigenpairs.csv"), table);
  for (std::size_t j = 0; j < pairs.size(); ++j)
    export_field(grid, pairs[j].vector, join(cfg.output_dir, "phi_" + std::to_string(j + 1) + ".csv"));
  Report& r = out.report;
  r.add("subcommand", "eig");
  r.add("dim", grid.dim());
  r.add("nodes", grid.size());
  r.add("count", static_cast<int>(pairs.size()));
  for (std::size_t j = 0; j < pairs.size(); ++j) r.add("lambda_" + std::to_string(j + 1), pairs[j].value);
  write_report(r, out.report_path);
  return kExitOk;
}

/// Seed, optional descent, Newton. Returns the last iterate and its result.
inline SolveResult initial_solve(const Grid& grid, const RunConfig& cfg, const SystemParams& params) {
  StatePair init = minimax_init(grid, params, cfg.seed(), cfg.variant);
  if (cfg.descend_first) init = descend(grid, params, init, cfg.solve, cfg.variant).state;
  return newton_refine(grid, params, init, cfg.solve, cfg.variant);
}

inline int cmd_solve(const RunConfig& cfg, Outcome& out) {
  const Grid grid = build_grid(cfg.domain);
  const auto cutoff = configured_cutoff(grid, cfg);
  cfg.seed().coefficients();
  Report& r = out.report;
  header(r, "solve", grid, cfg);
  r.add("beta", cfg.params.beta);
  r.add("k", *cfg.k);
  SolveResult res = initial_solve(grid, cfg, cfg.params);
  res.state = canonical_representative(grid, res.state);
  write_state(grid, res.state, cfg.output_dir);
  r.add("converged", res.converged);
  r.add("newton_iterations", res.iterations);
  state_block(r, grid, cfg, cfg.params, res.state, cutoff);
  if (!res.converged) r.add("error", "Newton did not converge: " + res.note);
  write_report(r, out.report_path);
  return res.converged ? kExitOk : kExitNotConverged;
}

inline int cmd_continue(const RunConfig& cfg, Outcome& out) {
  const Grid grid = build_grid(cfg.domain);
  const auto cutoff = configured_cutoff(grid, cfg);
  cfg.seed().coefficients();
  const std::vector<double> schedule = cfg.schedule();
  Report& r = out.report;
  header(r, "continue", grid, cfg);
  r.add("k", *cfg.k);
  r.add("schedule_length", static_cast<int>(schedule.size()));

  SystemParams p0 = cfg.params;
  p0.beta = schedule.front();
  SolveResult first = initial_solve(grid, cfg, p0);
  if (!first.converged) {
    first.state = canonical_representative(grid, first.state);
    write_state(grid, first.state, cfg.output_dir);
    r.separator();
    r.add("beta", p0.beta);
    state_block(r, grid, cfg, p0, first.state, cutoff);
    r.add("error", "Newton did not converge at the first beta: " + first.note);
    write_report(r, out.report_path);
    return kExitNotConverged;
  }
  DiagnosticsOptions dopts;
  dopts.morse = cfg.analysis.morse;
  dopts.morse_tol = cfg.analysis.morse_tol;
  dopts.nodal_delta_rel = cfg.analysis.nodal_delta;
  Branch branch = continue_in_beta(grid, cfg.params, canonical_representative(grid, first.state), schedule, cfg.solve,
                                   cfg.variant, dopts);

  std::string table = "beta,energy,residual,morse_index,nullity,segregation,h1_u,h1_v,linf_u,linf_v,nodal_components\n";
  for (std::size_t i = 0; i < branch.size(); ++i) {
    const auto& d = branch.diagnostics[i];
    const StatePair& s = branch.states[i];
    table += format_real(d.beta) + "," + format_real(d.energy) + "," + format_real(d.residual) + "," +
             std::to_string(d.morse_index) + "," + std::to_string(d.nullity) + "," + format_real(d.segregation) +
             "," + format_real(d.h1_u) + "," + format_real(d.h1_v) + "," + format_real(s.u.cwiseAbs().maxCoeff()) +
             "," + format_real(s.v.cwiseAbs().maxCoeff()) + "," + std::to_string(d.nodal_components) + "\n";
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%03zu", i);
    write_state(grid, s, cfg.output_dir, suffix);
  }
  write_text(join(cfg.output_dir, "branch.csv"), table);
  write_state(grid, branch.states.back(), cfg.output_dir);

  for (std::size_t i = 0; i < branch.size(); ++i) {
    r.separator();
    SystemParams p = cfg.params;
    p.beta = branch.betas[i];
    r.add("beta", p.beta);
    r.add("newton_iterations", branch.diagnostics[i].newton_iterations);
    state_block(r, grid, cfg, p, branch.states[i], cutoff);
  }
  r.separator();
  r.add("branch_points", static_cast<int>(branch.size()));
  r.add("complete", branch.complete);
  for (const auto& w : branch.warnings) r.add("warning", w);
  if (cfg.analysis.decay_fit) {
    if (branch.size() >= 3) {
      try {
        const DecayFit fit = decay_fit(grid, branch);
        r.add("decay_slope", fit.slope);
        r.add("decay_r2", fit.r_squared);
        r.add("decay_excluded", static_cast<int>(fit.excluded.size()));
      } catch (const PreconditionError& e) {
        r.add("decay_skipped", e.what());
      }
    } else {
      r.add("decay_skipped", "fewer than 3 branch points");
    }
  }
  if (!branch.complete) r.add("error", branch.failure);
  write_report(r, out.report_path);
  return branch.complete ? kExitOk : kExitNotConverged;
}

inline int cmd_analyze(const RunConfig& cfg, Outcome& out) {
  const Grid grid = build_grid(cfg.domain);
  const auto cutoff = configured_cutoff(grid, cfg);
  const std::string in = cfg.analysis.input_dir.empty() ? cfg.output_dir : cfg.analysis.input_dir;
  const StatePair s{import_field(grid, join(in, "u.csv")), import_field(grid, join(in, "v.csv"))};
  Report& r = out.report;
  header(r, "analyze", grid, cfg);
  r.add("beta", cfg.params.beta);
  state_block(r, grid, cfg, cfg.params, s, cutoff);
  const auto [nu, nv] = nehari_residual(grid, cfg.params, s);
  r.add("nehari_u", nu);
  r.add("nehari_v", nv);
  r.add("step4_certificate", step4_positivity_certificate(grid, cfg.params, s));
  write_report(r, out.report_path);
  return kExitOk;
}

inline int cmd_probe(const RunConfig& cfg, Outcome& out) {
  const Grid grid = build_grid(cfg.domain);
  if (!cfg.k) throw ConfigError("[seed] k is required for probe");
  if (*cfg.k > std::min(grid.size(), 64)) throw ConfigError("probe k exceeds the sampled eigenmodes");
  const LinkingProbeReport rep = linking_probe(grid, cfg.params, *cfg.k, cfg.rho, cfg.samples, cfg.rng_seed);
  Report& r = out.report;
  header(r, "probe", grid, cfg);
  r.add("beta", rep.beta);
  r.add("eps", cfg.params.eps);
  r.add("R", cfg.params.R_trunc);
  r.add("k", rep.k);
  r.add("rho", rep.rho);
  r.add("samples", rep.samples);
  r.add("rng_seed", std::to_string(rep.rng_seed));
  r.add("min_energy", rep.min_energy);
  write_report(r, out.report_path);
  return kExitOk;
}

}  // namespace detail

/// Runs one subcommand. Exit 0 on success, 2 on non-convergence (report holds
/// an `error:` line), 1 on configuration or input errors (message on `err`,
/// nothing written).
inline int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& err) {
  detail::Outcome out;
  out.report_path =
      detail::join(cfg.output_dir, subcommand == "analyze" ? std::string("analysis.txt") : std::string("report.txt"));
  try {
    if (subcommand == "eig") return detail::cmd_eig(cfg, out);
    if (subcommand == "solve") return detail::cmd_solve(cfg, out);
    if (subcommand == "continue") return detail::cmd_continue(cfg, out);
    if (subcommand == "analyze") return detail::cmd_analyze(cfg, out);
    if (subcommand == "probe") return detail::cmd_probe(cfg, out);
    err << "error: unknown subcommand '" << subcommand << "'\n";
    return kExitConfig;
  } catch (const SolverError& e) {
    out.report.add("error", e.what());
    try {
      write_report(out.report, out.report_path);
    } catch (const IoError& io) {
      err << "error: " << io.what() << '\n';
    }
    err << "error: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

/// Loads a config file, applies the command-line overrides, and runs.
inline int run_file(const std::string& subcommand, const std::string& config_path,
                    const std::optional<std::string>& out_dir, const std::optional<std::uint64_t>& seed,
                    std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (out_dir) cfg.output_dir = *out_dir;
  if (seed) cfg.rng_seed = *seed;
  return run(subcommand, cfg, err);
}

}  // namespace gpseg
