#pragma once

// Critical-point solvers: minimax initialization from (w⁺, w⁻), Sobolev
// gradient descent, damped Newton, deflated Newton, β-continuation, and the
// Monte Carlo linking-level probe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "gpseg/analysis.hpp"
#include "gpseg/branch.hpp"
#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"
#include "gpseg/model.hpp"

namespace gpseg {

struct SolveOptions {
  double grad_tol = 1e-9;
  int max_descent_iters = 2000;
  int max_newton_iters = 50;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  double deflation_power = 2.0;
  double deflation_shift = 1.0;

  void validate() const {
    if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
    if (max_descent_iters < 0 || max_newton_iters < 0) throw ConfigError("iteration limits must be non-negative");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("armijo_c must lie in (0, 1)");
    if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) throw ConfigError("armijo_shrink must lie in (0, 1)");
    if (!(deflation_power >= 1.0)) throw ConfigError("deflation_power must be >= 1");
    if (!(deflation_shift > 0.0)) throw ConfigError("deflation_shift must be positive");
  }
};

struct MinimaxSeed {
  int k = 1;
  /// H¹ radius of w; empty means "pick by line search along the ray".
  std::optional<double> amplitude;
  /// Coefficients on φ_1..φ_k; empty means the unit vector e_k.
  std::vector<double> mix;

  std::vector<double> coefficients() const {
    if (k < 1) throw ConfigError("seed k must be >= 1");
    if (mix.empty()) {
      std::vector<double> c(k, 0.0);
      c.back() = 1.0;
      return c;
    }
    if (static_cast<int>(mix.size()) != k)
      throw ConfigError("seed mix needs exactly k = " + std::to_string(k) + " coefficients");
    double s = 0.0;
    for (double m : mix) s += m * m;
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError("seed mix must satisfy sum(mix^2) = 1");
    return mix;
  }
};

struct SolveResult {
  StatePair state;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residuals;  // residual_norm per iterate, starting point included
  std::vector<double> energies;   // descent only
  /// Newton fell back to the shifted solve (H + deflation_shift I) at least once.
  bool regularized = false;
  /// max r_{n+1} / r_n² over the last three steps; NaN with fewer than two steps.
  double quadratic_constant = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

// ---------------------------------------------------------------------------
// Minimax initialization

/// The boundary map of the minimax class: w = Σ mix_j φ_j scaled to unit H¹
/// norm, returned as (w⁺, w⁻).
inline StatePair minimax_direction(const Grid& grid, const MinimaxSeed& seed) {
  const std::vector<double> c = seed.coefficients();
  if (seed.k > grid.size())
    throw ConfigError("seed k = " + std::to_string(seed.k) + " exceeds the grid's " + std::to_string(grid.size()) +
                      " eigenpairs");
  const auto pairs = dirichlet_eigenpairs(grid, seed.k);
  Field w = Field::Zero(grid.size());
  for (int j = 0; j < seed.k; ++j) w += c[j] * pairs[j].vector;
  const double norm = h1_norm(grid, w);
  if (!(norm > 0.0)) throw ConfigError("seed mix produces a zero field");
  w /= norm;
  auto [plus, minus] = positive_negative_parts(w);
  return {std::move(plus), std::move(minus)};
}

/// Amplitude t maximizing the energy along t * direction: geometric bracket,
/// then golden-section search. Throws ConfigError when the energy has no
/// interior maximum on the ray.
inline double ray_amplitude(const Grid& grid, const SystemParams& params, const StatePair& direction,
                            FunctionalVariant variant = FunctionalVariant::plain) {
  const auto e = [&](double t) { return energy(grid, params, t * direction, variant); };
  double a = 1e-3, b = 2e-3;
  double ea = e(a), eb = e(b);
  if (!(eb > ea)) throw ConfigError("energy does not increase along the seed ray; no mountain-pass crossing");
  int doublings = 0;
  double c = 2.0 * b, ec = e(c);
  while (ec > eb) {
    if (++doublings > 60) throw ConfigError("energy unbounded above along the seed ray");
    a = b;
    b = c;
    eb = ec;
    c *= 2.0;
    ec = e(c);
  }
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = c - g * (c - a), x2 = a + g * (c - a);
  double f1 = e(x1), f2 = e(x2);
  while (c - a > 1e-10 * c) {
    if (f1 > f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - g * (c - a);
      f1 = e(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (c - a);
      f2 = e(x2);
    }
  }
  return 0.5 * (a + c);
}

/// (w⁺, w⁻) with ‖w‖_H¹ = amplitude. The seed must carry an amplitude.
inline StatePair minimax_init(const Grid& grid, const MinimaxSeed& seed) {
  if (!seed.amplitude) throw ConfigError("minimax_init needs an amplitude; use the params overload for the default");
  if (!(*seed.amplitude > 0.0)) throw ConfigError("seed amplitude must be positive");
  return *seed.amplitude * minimax_direction(grid, seed);
}

/// As above, with the default amplitude taken from the energy line search.
inline StatePair minimax_init(const Grid& grid, const SystemParams& params, const MinimaxSeed& seed,
                              FunctionalVariant variant = FunctionalVariant::plain) {
  if (seed.amplitude) return minimax_init(grid, seed);
  const StatePair dir = minimax_direction(grid, seed);
  return ray_amplitude(grid, params, dir, variant) * dir;
}

// ---------------------------------------------------------------------------
// Sobolev gradient descent

/// Armijo backtracking along the negative H¹ gradient. The trial step starts at
/// min(1, 2 t_prev) so step sizes adapt without breaking determinism.
inline SolveResult descend(const Grid& grid, const SystemParams& params, const StatePair& init,
                           const SolveOptions& opts = {}, FunctionalVariant variant = FunctionalVariant::plain) {
  opts.validate();
  check_state(grid, init);
  SolveResult out;
  out.state = init;
  double e = energy(grid, params, out.state, variant);
  double t_prev = 0.5;
  for (int it = 0;; ++it) {
    const StatePair g_l2 = gradient(grid, params, out.state, variant, Metric::L2);
    const double r = std::sqrt(pair_inner(grid, g_l2, g_l2));
    out.residuals.push_back(r);
    out.energies.push_back(e);
    out.iterations = it;
    if (r <= opts.grad_tol) {
      out.converged = true;
      return out;
    }
    if (it == opts.max_descent_iters) {
      out.note = "descent iteration limit reached";
      return out;
    }
    const StatePair g{solve_poisson(grid, g_l2.u), solve_poisson(grid, g_l2.v)};
    const double slope = -pair_inner(grid, g_l2, g);  // -‖g‖²_H¹
    double t = std::min(1.0, 2.0 * t_prev);
    for (;;) {
      StatePair trial = out.state - t * g;
      const double et = energy(grid, params, trial, variant);
      if (et <= e + opts.armijo_c * t * slope) {
        out.state = std::move(trial);
        e = et;
        t_prev = t;
        break;
      }
      t *= opts.armijo_shrink;
      if (t < 1e-14) {
        out.note = "descent line search stalled";
        return out;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Newton

namespace detail {

inline Field stack(const StatePair& s) {
  Field x(2 * s.u.size());
  x << s.u, s.v;
  return x;
}

inline StatePair unstack(const Field& x) {
  const Eigen::Index n = x.size() / 2;
  return {x.head(n), x.tail(n)};
}

/// Newton direction solving H δ = -F; falls back to (H + shift I) when the
/// LU factorization is singular or produces a non-finite step.
inline Field newton_direction(const Grid& grid, const SystemParams& params, const StatePair& x,
                              const StatePair& g, double shift, FunctionalVariant variant, bool& regularized) {
  const SparseMatrix h = hessian_matrix(grid, params, x, variant);
  const Field rhs = -stack(g);
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(h);
  if (lu.info() == Eigen::Success) {
    Field d = lu.solve(rhs);
    if (lu.info() == Eigen::Success && d.allFinite()) return d;
  }
  regularized = true;
  const SparseMatrix hs = h + shift * sparse_identity(h.rows());
  lu.compute(hs);
  if (lu.info() != Eigen::Success) throw SolverError("regularized Newton system is singular");
  Field d = lu.solve(rhs);
  if (!d.allFinite()) throw SolverError("regularized Newton step is not finite");
  return d;
}

/// Beyond this r_{n+1} / r_n² the final steps are flagged as not quadratic.
inline constexpr double kQuadraticFlag = 1e6;

inline double quadratic_constant(const std::vector<double>& r) {
  double c = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = r.size();
  for (std::size_t i = n >= 4 ? n - 4 : 0; i + 1 < n; ++i)
    if (r[i] > 0.0) c = std::isnan(c) ? r[i + 1] / (r[i] * r[i]) : std::max(c, r[i + 1] / (r[i] * r[i]));
  return c;
}

/// Deflation factor M(x) = Π (‖x - k‖_H¹^{-p} + shift) and the ratio
/// <∇M, δ>_{L2} / M for a step δ.
struct Deflation {
  const Grid* grid;
  std::vector<StatePair> roots;  // known solutions and their σ-images
  double power;
  double shift;

  double factor(const StatePair& x) const {
    double m = 1.0;
    for (const auto& k : roots) m *= std::pow(pair_h1_norm(*grid, x - k), -power) + shift;
    return m;
  }

  double log_derivative(const StatePair& x, const StatePair& d) const {
    double s = 0.0;
    for (const auto& k : roots) {
      const StatePair e = x - k;
      const double n2 = h1_seminorm_sq(*grid, e.u) + h1_seminorm_sq(*grid, e.v);
      const double npow = std::pow(n2, -0.5 * power);
      const double h1_dot = inner(*grid, grid->neg_laplacian() * e.u, d.u) + inner(*grid, grid->neg_laplacian() * e.v, d.v);
      s += -power * npow / n2 * h1_dot / (npow + shift);
    }
    return s;
  }
};

inline SolveResult newton_core(const Grid& grid, const SystemParams& params, const StatePair& start,
                               const SolveOptions& opts, FunctionalVariant variant, const Deflation* deflation) {
  opts.validate();
  check_state(grid, start);
  SolveResult out;
  out.state = start;
  const auto merit = [&](const StatePair& x, double r) { return deflation ? deflation->factor(x) * r : r; };
  double r = residual_norm(grid, params, out.state, variant);
  out.residuals.push_back(r);
  const double r0 = r;
  for (int it = 0;; ++it) {
    out.iterations = it;
    if (!std::isfinite(r)) throw DivergenceError("Newton produced a non-finite residual", out.residuals);
    if (r <= opts.grad_tol) {
      out.converged = true;
      break;
    }
    if (it == opts.max_newton_iters) {
      out.note = "Newton iteration limit reached";
      break;
    }
    const StatePair g = gradient(grid, params, out.state, variant, Metric::L2);
    StatePair d = unstack(newton_direction(grid, params, out.state, g, opts.deflation_shift, variant, out.regularized));
    if (deflation) {
      const double denom = 1.0 - deflation->log_derivative(out.state, d);
      if (std::abs(denom) > 1e-12) d = (1.0 / denom) * d;
    }
    const double m0 = merit(out.state, r);
    double t = 1.0;
    StatePair trial;
    double rt = 0.0;
    for (;;) {
      trial = out.state + t * d;
      rt = residual_norm(grid, params, trial, variant);
      if (std::isfinite(rt) && merit(trial, rt) <= (1.0 - opts.armijo_c * t) * m0) break;
      t *= opts.armijo_shrink;
      if (t < 1e-10) break;
    }
    if (t < 1e-10) {
      out.note = "Newton line search stalled";
      break;
    }
    out.state = std::move(trial);
    r = rt;
    out.residuals.push_back(r);
    if (!out.state.u.allFinite() || !out.state.v.allFinite() || r > 1e12 * std::max(1.0, r0))
      throw DivergenceError("Newton diverged", out.residuals);
  }
  out.quadratic_constant = quadratic_constant(out.residuals);
  if (out.converged && out.quadratic_constant > kQuadraticFlag)
    out.note = "residual decrease slower than quadratic over the final steps";
  return out;
}

}  // namespace detail

/// Damped Newton on the L2 gradient with backtracking on the residual norm.
inline SolveResult newton_refine(const Grid& grid, const SystemParams& params, const StatePair& state,
                                 const SolveOptions& opts = {}, FunctionalVariant variant = FunctionalVariant::plain) {
  return detail::newton_core(grid, params, state, opts, variant, nullptr);
}

/// Newton on the deflated residual M(x) F(x), where M blows up at every known
/// solution and at its σ-image. Throws NotFoundError if no new converged
/// solution at H¹ distance ≥ deflation_shift from all of them is reached.
inline SolveResult deflated_solve(const Grid& grid, const SystemParams& params, const std::vector<StatePair>& known,
                                  const StatePair& init, const SolveOptions& opts = {},
                                  FunctionalVariant variant = FunctionalVariant::plain) {
  if (known.empty()) return newton_refine(grid, params, init, opts, variant);
  detail::Deflation defl{&grid, {}, opts.deflation_power, opts.deflation_shift};
  for (const auto& k : known) {
    check_state(grid, k);
    defl.roots.push_back(k);
    defl.roots.push_back(swap_sigma(k));
  }
  SolveResult out;
  try {
    out = detail::newton_core(grid, params, init, opts, variant, &defl);
  } catch (const DivergenceError& e) {
    throw NotFoundError(std::string("deflated Newton diverged: ") + e.what(), opts.max_newton_iters);
  }
  if (!out.converged) throw NotFoundError("deflated Newton found no new solution: " + out.note, out.iterations);
  double dmin = kInfinity;
  for (const auto& k : defl.roots) dmin = std::min(dmin, pair_h1_norm(grid, out.state - k));
  if (dmin < opts.deflation_shift)
    throw NotFoundError("deflated Newton returned to a known solution", out.iterations);
  return out;
}

/// The member of {s, σ(s)} with the larger ∫u·x₁ moment (ties keep s).
inline StatePair canonical_representative(const Grid& grid, const StatePair& state) {
  check_state(grid, state);
  const Field x = grid.coordinate_field(0);
  return inner(grid, state.v, x) > inner(grid, state.u, x) ? swap_sigma(state) : state;
}

// ---------------------------------------------------------------------------
// Continuation in β

struct DiagnosticsOptions {
  bool morse = true;
  std::optional<double> morse_tol;
  /// Nodal threshold relative to max(u+v).
  double nodal_delta_rel = 1e-3;
};

inline BranchDiagnostics diagnose(const Grid& grid, const SystemParams& params, const StatePair& s,
                                  FunctionalVariant variant, const DiagnosticsOptions& dopts = {}) {
  BranchDiagnostics d;
  d.beta = params.beta;
  d.energy = energy(grid, params, s, variant);
  d.residual = residual_norm(grid, params, s, variant);
  if (dopts.morse) {
    const MorseReport m = morse_index(grid, params, s, variant, dopts.morse_tol);
    d.morse_index = m.index;
    d.nullity = m.nullity;
    d.morse_tol = m.tol;
  }
  d.segregation = segregation(grid, s);
  d.h1_u = h1_norm(grid, s.u);
  d.h1_v = h1_norm(grid, s.v);
  const Field sum = s.u + s.v;
  const double top = sum.maxCoeff();
  if (top > 0.0) {
    d.nodal_delta = dopts.nodal_delta_rel * top;
    d.nodal_components = nodal_components(grid, sum, d.nodal_delta);
  } else {
    d.nodal_components = 0;
  }
  return d;
}

/// Warm-started Newton along an ascending β schedule. A failed step is retried
/// through up to four levels of geometric β substeps (not recorded); if that
/// fails too the partial branch is returned with `complete = false`.
inline Branch continue_in_beta(const Grid& grid, const SystemParams& params, const StatePair& state,
                               const std::vector<double>& schedule, const SolveOptions& opts = {},
                               FunctionalVariant variant = FunctionalVariant::plain,
                               const DiagnosticsOptions& dopts = {}) {
  if (schedule.empty()) throw ConfigError("beta schedule is empty");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (!(schedule[i] > schedule[i - 1])) throw ConfigError("beta schedule must be strictly ascending");
  Branch branch;
  SystemParams p = params;
  p.beta = schedule[0];
  SolveResult first = newton_refine(grid, p, state, opts, variant);
  if (!first.converged) throw SolverError("state does not solve the system at the first beta", first.iterations);

  const auto record = [&](const SystemParams& pp, const SolveResult& res) {
    branch.betas.push_back(pp.beta);
    branch.states.push_back(res.state);
    BranchDiagnostics d = diagnose(grid, pp, res.state, variant, dopts);
    d.newton_iterations = res.iterations;
    if (!branch.diagnostics.empty()) {
      const auto& prev = branch.diagnostics.back();
      if (prev.nullity == 0 && d.nullity == 0 && prev.morse_index != d.morse_index)
        branch.warnings.push_back("Morse index changed between beta " + std::to_string(prev.beta) + " and " +
                                  std::to_string(d.beta) + " with zero nullity at both ends");
    }
    branch.diagnostics.push_back(d);
  };
  record(p, first);

  // Solves at `to` starting from `from_state` solved at `from`.
  std::function<std::optional<SolveResult>(double, double, const StatePair&, int)> step =
      [&](double from, double to, const StatePair& from_state, int depth) -> std::optional<SolveResult> {
    SystemParams q = params;
    q.beta = to;
    try {
      SolveResult res = newton_refine(grid, q, from_state, opts, variant);
      if (res.converged) return res;
    } catch (const SolverError&) {
    }
    if (depth == 4 || !(from > 0.0)) return std::nullopt;
    const double mid = std::sqrt(from * to);
    auto half = step(from, mid, from_state, depth + 1);
    if (!half) return std::nullopt;
    return step(mid, to, half->state, depth + 1);
  };

  for (std::size_t i = 1; i < schedule.size(); ++i) {
    auto res = step(schedule[i - 1], schedule[i], branch.states.back(), 0);
    if (!res) {
      branch.complete = false;
      branch.failure = "Newton failed at beta = " + std::to_string(schedule[i]);
      break;
    }
    p.beta = schedule[i];
    record(p, *res);
  }
  return branch;
}

// ---------------------------------------------------------------------------
// Linking probe

struct LinkingProbeReport {
  int k = 0;
  double rho = 0.0;
  int samples = 0;
  double min_energy = 0.0;
  double beta = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Random pairs (u, v) with u - v = d in span{φ_k .. φ_m}, ‖d‖_H¹ = rho and
/// u + v = s + τ|d|, where m = min(N, 64), coefficients are N(0,1)/λ_j and
/// τ ~ U[0,1). The |d| term reaches pairs close to (d⁺, d⁻).
inline std::vector<StatePair> draw_linking_pairs(const Grid& grid, int k, double rho, int samples,
                                                 std::uint64_t rng_seed) {
  if (k < 1) throw ConfigError("linking probe needs k >= 1");
  if (!(rho > 0.0)) throw ConfigError("linking probe needs rho > 0");
  if (samples < 1) throw ConfigError("linking probe needs samples >= 1");
  const int m = std::min(grid.size(), 64);
  if (k > m) throw ConfigError("linking probe k exceeds the " + std::to_string(m) + " sampled eigenmodes");
  const auto pairs = dirichlet_eigenpairs(grid, m);
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<StatePair> out;
  out.reserve(samples);
  while (static_cast<int>(out.size()) < samples) {
    Field s = Field::Zero(grid.size()), d = Field::Zero(grid.size());
    for (int j = 0; j < m; ++j) s += (normal(rng) / pairs[j].value) * pairs[j].vector;
    for (int j = k - 1; j < m; ++j) d += (normal(rng) / pairs[j].value) * pairs[j].vector;
    const double tau = uniform(rng);
    const double nd = h1_norm(grid, d);
    if (!(nd > 0.0)) continue;
    d *= rho / nd;
    s += tau * d.cwiseAbs();
    out.push_back({0.5 * (s + d), 0.5 * (s - d)});
  }
  return out;
}

/// Minimum truncated energy over the sampled linking set.
inline LinkingProbeReport linking_probe(const Grid& grid, const SystemParams& params, int k, double rho, int samples,
                                        std::uint64_t rng_seed) {
  params.validate();
  LinkingProbeReport rep{k, rho, samples, kInfinity, params.beta, rng_seed};
  for (const auto& s : draw_linking_pairs(grid, k, rho, samples, rng_seed))
    rep.min_energy = std::min(rep.min_energy, energy(grid, params, s, FunctionalVariant::truncated));
  return rep;
}

}  // namespace gpseg
