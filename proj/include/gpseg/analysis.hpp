#pragma once

// Numerical certificates for computed critical points: Morse index and nullity,
// the interior Pohozaev balance, Nehari identities, segregation and its decay
// in β, nodal-set component counts, and the non-vanishing / diagonal checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gpseg/branch.hpp"
#include "gpseg/detail/eigensolvers.hpp"
#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"
#include "gpseg/model.hpp"

namespace gpseg {

// ---------------------------------------------------------------------------
// Morse index

/// Default nullity band, relative to the largest Hessian eigenvalue magnitude.
inline constexpr double kMorseRelativeTol = 1e-6;

struct MorseReport {
  int index = 0;
  int nullity = 0;
  double tol = 0.0;
  std::vector<double> smallest_eigs;
};

namespace detail {

inline MorseReport classify(const Eigen::VectorXd& sorted, double tol) {
  MorseReport r;
  r.tol = tol;
  for (Eigen::Index i = 0; i < sorted.size(); ++i) {
    if (sorted(i) < -tol)
      ++r.index;
    else if (sorted(i) <= tol)
      ++r.nullity;
  }
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(10, sorted.size()); ++i) r.smallest_eigs.push_back(sorted(i));
  return r;
}

inline Eigen::MatrixXd h1_gram(const Grid& grid) {
  const int n = grid.size();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const Eigen::MatrixXd lap(grid.neg_laplacian());
  k.topLeftCorner(n, n) = lap;
  k.bottomRightCorner(n, n) = lap;
  return k;
}

}  // namespace detail

/// Inertia of the second variation, diagonalized against the weighted L2 inner
/// product. With no `tol`, eigenvalues within 1e-6 * max|eig| count as nullity.
/// Problems with 2N above the dense limit use LDL^T inertia counts and a
/// Gershgorin bound for max|eig|.
inline MorseReport morse_index(const Grid& grid, const SystemParams& params, const StatePair& state,
                               FunctionalVariant variant = FunctionalVariant::plain,
                               std::optional<double> tol = std::nullopt) {
  if (tol && !(*tol > 0.0)) throw ConfigError("Morse tolerance must be positive");
  const SparseMatrix h = hessian_matrix(grid, params, state, variant);
  if (h.rows() <= detail::kDenseEigenLimit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SolverError("Hessian eigen-solve failed");
    const Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
    return detail::classify(ev, tol.value_or(kMorseRelativeTol * scale));
  }
  const double t = tol.value_or(kMorseRelativeTol * detail::gershgorin_radius(h));
  MorseReport r;
  r.tol = t;
  r.index = static_cast<int>(detail::count_eigenvalues_below(h, -t));
  r.nullity = static_cast<int>(detail::count_eigenvalues_below(h, t)) - r.index;
  const auto low = detail::lowest_eigenpairs_sparse(h, std::min<Eigen::Index>(10, h.rows()),
                                                     detail::shift_below_spectrum(h));
  for (Eigen::Index i = 0; i < low.values.size(); ++i) r.smallest_eigs.push_back(low.values(i));
  return r;
}

/// Morse reports under the L2 and the H1 Gram matrices (dense only).
/// The H1 route diagonalizes the pencil (H, K) with K = diag(-Δ_h, -Δ_h); its
/// eigenvectors are classified by their L2 Rayleigh quotient so both routes
/// share one tolerance. `smallest_eigs` of the H1 report holds the pencil values.
inline std::pair<MorseReport, MorseReport> inertia_reports(const Grid& grid, const SystemParams& params,
                                                           const StatePair& state,
                                                           FunctionalVariant variant = FunctionalVariant::plain,
                                                           std::optional<double> tol = std::nullopt) {
  const SparseMatrix hs = hessian_matrix(grid, params, state, variant);
  if (hs.rows() > detail::kDenseEigenLimit)
    throw ConfigError("inertia comparison is limited to 2N <= " + std::to_string(detail::kDenseEigenLimit));
  const Eigen::MatrixXd h(hs);
  MorseReport l2 = morse_index(grid, params, state, variant, tol);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(h, detail::h1_gram(grid));
  if (ges.info() != Eigen::Success) throw SolverError("generalized eigen-solve failed");
  const Eigen::VectorXd theta = ges.eigenvalues();
  const Eigen::MatrixXd& x = ges.eigenvectors();
  MorseReport h1;
  h1.tol = l2.tol;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double rayleigh = theta(i) / x.col(i).squaredNorm();  // x^T K x = 1
    if (rayleigh < -h1.tol)
      ++h1.index;
    else if (rayleigh <= h1.tol)
      ++h1.nullity;
  }
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(10, theta.size()); ++i) h1.smallest_eigs.push_back(theta(i));
  return {std::move(l2), std::move(h1)};
}

/// Sylvester check: (index, nullity) agree under the L2 and H1 inner products.
inline bool inertia_invariance_check(const Grid& grid, const SystemParams& params, const StatePair& state,
                                     FunctionalVariant variant = FunctionalVariant::plain,
                                     std::optional<double> tol = std::nullopt) {
  const auto [l2, h1] = inertia_reports(grid, params, state, variant, tol);
  return l2.index == h1.index && l2.nullity == h1.nullity;
}

// ---------------------------------------------------------------------------
// Pohozaev balance with V(x) = x

struct CutoffFunction {
  Field values;
  std::string id;
};

/// Tensor product of C² quintic bumps S(1 - |x_a - c_a| / r_a) with
/// S(t) = 10t³ - 15t⁴ + 6t⁵ on [0,1]; equals 1 at the center, vanishes with two
/// derivatives at the support edges.
inline CutoffFunction quintic_bump(const Grid& grid, std::array<double, 2> center, std::array<double, 2> radius) {
  for (int a = 0; a < grid.dim(); ++a)
    if (!(radius[a] > 0.0)) throw ConfigError("cutoff radius must be positive");
  const auto smooth = [](double t) { return t <= 0.0 ? 0.0 : t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); };
  CutoffFunction c{Field(grid.size()), {}};
  for (int p = 0; p < grid.size(); ++p) {
    double val = 1.0;
    for (int a = 0; a < grid.dim(); ++a) val *= smooth(1.0 - std::abs(grid.coordinate(p, a) - center[a]) / radius[a]);
    c.values(p) = val;
  }
  char buf[160];
  if (grid.dim() == 1)
    std::snprintf(buf, sizeof buf, "quintic_bump(center=%.17g,radius=%.17g)", center[0], radius[0]);
  else
    std::snprintf(buf, sizeof buf, "quintic_bump(center=%.17g;%.17g,radius=%.17g;%.17g)", center[0], center[1],
                  radius[0], radius[1]);
  c.id = buf;
  return c;
}

struct PohozaevReport {
  double residual = 0.0;
  std::string cutoff_id;
  double grid_h = 0.0;
};

namespace detail {

/// Central difference along `axis` with the zero Dirichlet extension.
inline Field central_difference(const Grid& grid, const Field& f, int axis) {
  Field d(f.size());
  const int n = grid.nodes(axis);
  const int stride = axis == 0 ? grid.nodes(1) : 1;
  const double inv = 1.0 / (2.0 * grid.spacing(axis));
  for (int p = 0; p < f.size(); ++p) {
    const int i = grid.multi_index(p)[axis];
    const double fp = i + 1 < n ? f(p + stride) : 0.0;
    const double fm = i > 0 ? f(p - stride) : 0.0;
    d(p) = (fp - fm) * inv;
  }
  return d;
}

inline void check_cutoff_support(const Grid& grid, const Field& cutoff) {
  grid.check(cutoff, "cutoff");
  for (int p = 0; p < grid.size(); ++p) {
    const auto mi = grid.multi_index(p);
    bool layer = false;
    for (int a = 0; a < grid.dim(); ++a) layer = layer || mi[a] < 2 || mi[a] > grid.nodes(a) - 3;
    if (layer && cutoff(p) != 0.0)
      throw PreconditionError("cutoff must vanish on the two-node boundary layer");
  }
}

struct PohozaevTerms {
  Field bulk;                      // (1 - d/2)(|∇u|² + |∇v|²) + (d/4) Q
  std::array<Field, 2> w;          // the vector field W
};

inline PohozaevTerms pohozaev_terms(const Grid& grid, const SystemParams& p, const StatePair& s) {
  const int d = grid.dim();
  const Field u2 = s.u.cwiseProduct(s.u), v2 = s.v.cwiseProduct(s.v);
  const Field q = (u2.cwiseProduct(u2) + v2.cwiseProduct(v2) - 2.0 * p.beta * u2.cwiseProduct(v2) -
                   2.0 * p.lambda * u2 - 2.0 * p.mu * v2);
  std::array<Field, 2> gu, gv, x;
  Field gu2 = Field::Zero(grid.size()), gv2 = Field::Zero(grid.size());
  Field uv_dot = Field::Zero(grid.size()), vv_dot = Field::Zero(grid.size());
  for (int a = 0; a < d; ++a) {
    gu[a] = central_difference(grid, s.u, a);
    gv[a] = central_difference(grid, s.v, a);
    x[a] = grid.coordinate_field(a);
    gu2 += gu[a].cwiseProduct(gu[a]);
    gv2 += gv[a].cwiseProduct(gv[a]);
    uv_dot += gu[a].cwiseProduct(x[a]);
    vv_dot += gv[a].cwiseProduct(x[a]);
  }
  PohozaevTerms t;
  t.bulk = (1.0 - 0.5 * d) * (gu2 + gv2) + (0.25 * d) * q;
  for (int a = 0; a < d; ++a)
    t.w[a] = uv_dot.cwiseProduct(gu[a]) + vv_dot.cwiseProduct(gv[a]) +
             (-0.5 * (gu2 + gv2) + 0.25 * q).cwiseProduct(x[a]);
  return t;
}

}  // namespace detail

/// | ∫ [(1 - d/2)(|∇u|²+|∇v|²) + (d/4)Q(u,v)] φ² + ∫ <W, ∇(φ²)> | with central
/// differences throughout; vanishes for exact solutions in the continuum.
inline PohozaevReport pohozaev_residual(const Grid& grid, const SystemParams& params, const StatePair& state,
                                        const CutoffFunction& cutoff) {
  check_state(grid, state);
  detail::check_cutoff_support(grid, cutoff.values);
  const Field phi2 = cutoff.values.cwiseProduct(cutoff.values);
  const auto t = detail::pohozaev_terms(grid, params, state);
  double total = grid.weight() * t.bulk.cwiseProduct(phi2).sum();
  for (int a = 0; a < grid.dim(); ++a)
    total += grid.weight() * t.w[a].cwiseProduct(detail::central_difference(grid, phi2, a)).sum();
  return {std::abs(total), cutoff.id, grid.spacing(0)};
}

inline PohozaevReport pohozaev_residual(const Grid& grid, const SystemParams& params, const StatePair& state,
                                        const Field& cutoff) {
  return pohozaev_residual(grid, params, state, CutoffFunction{cutoff, "custom"});
}

/// | ∫ div_h(W φ²) | for the discrete central-difference divergence. Sums
/// telescope for compactly supported φ, so this is zero up to rounding for any
/// state; it isolates the divergence-theorem part of the Pohozaev balance.
inline double divergence_defect(const Grid& grid, const SystemParams& params, const StatePair& state,
                                const CutoffFunction& cutoff) {
  check_state(grid, state);
  detail::check_cutoff_support(grid, cutoff.values);
  const Field phi2 = cutoff.values.cwiseProduct(cutoff.values);
  const auto t = detail::pohozaev_terms(grid, params, state);
  double total = 0.0;
  for (int a = 0; a < grid.dim(); ++a)
    total += grid.weight() * detail::central_difference(grid, t.w[a].cwiseProduct(phi2), a).sum();
  return std::abs(total);
}

// ---------------------------------------------------------------------------
// Nehari identities and segregation

/// ( |‖u‖² + λ∫u² - ∫u⁴ + β∫u²v²| , same for v with μ ), the plain system
/// tested with (u,0) and (0,v).
inline std::pair<double, double> nehari_residual(const Grid& grid, const SystemParams& params,
                                                 const StatePair& state) {
  check_state(grid, state);
  const Field u2 = state.u.cwiseProduct(state.u), v2 = state.v.cwiseProduct(state.v);
  const double w = grid.weight();
  const double coupling = params.beta * w * u2.cwiseProduct(v2).sum();
  const double nu = h1_seminorm_sq(grid, state.u) + params.lambda * w * u2.sum() - w * u2.cwiseProduct(u2).sum() + coupling;
  const double nv = h1_seminorm_sq(grid, state.v) + params.mu * w * v2.sum() - w * v2.cwiseProduct(v2).sum() + coupling;
  return {std::abs(nu), std::abs(nv)};
}

/// ∫u²v², the overlap penalized by the coupling term.
inline double segregation(const Grid& grid, const StatePair& state) {
  check_state(grid, state);
  return detail::coupling_integral(grid, state.u, state.v);
}

struct Ball {
  std::array<double, 2> center{0.0, 0.0};
  double radius = 0.0;
};

/// ∫_B u²v² over the nodes inside a ball.
inline double local_overlap(const Grid& grid, const StatePair& state, const Ball& ball) {
  check_state(grid, state);
  double s = 0.0;
  for (int p = 0; p < grid.size(); ++p) {
    double r2 = 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
      const double dx = grid.coordinate(p, a) - ball.center[a];
      r2 += dx * dx;
    }
    if (r2 <= ball.radius * ball.radius) s += (state.u(p) * state.u(p)) * (state.v(p) * state.v(p));
  }
  return grid.weight() * s;
}

// ---------------------------------------------------------------------------
// Decay fit

struct DecayFit {
  std::vector<double> betas;
  std::vector<double> overlaps;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  /// β values dropped because their overlap was not positive.
  std::vector<double> excluded;
};

/// Least-squares fit of log(overlap) against sqrt(β).
inline DecayFit decay_fit(const std::vector<double>& betas, const std::vector<double>& overlaps) {
  if (betas.size() != overlaps.size()) throw DimensionError("decay fit: betas and overlaps differ in length");
  if (betas.size() < 3) throw PreconditionError("decay fit needs at least 3 branch points");
  DecayFit fit;
  fit.betas = betas;
  fit.overlaps = overlaps;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (overlaps[i] > 0.0) {
      xs.push_back(std::sqrt(betas[i]));
      ys.push_back(std::log(overlaps[i]));
    } else {
      fit.excluded.push_back(betas[i]);
    }
  }
  if (xs.size() < 3) throw PreconditionError("decay fit needs at least 3 points with positive overlap");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw PreconditionError("decay fit needs distinct β values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

/// Fit over a branch using the global overlap ∫u²v², or ∫_B u²v² if a ball is given.
inline DecayFit decay_fit(const Grid& grid, const Branch& branch, std::optional<Ball> ball = std::nullopt) {
  std::vector<double> overlaps;
  overlaps.reserve(branch.size());
  for (const auto& s : branch.states) overlaps.push_back(ball ? local_overlap(grid, s, *ball) : segregation(grid, s));
  return decay_fit(branch.betas, overlaps);
}

// ---------------------------------------------------------------------------
// Nodal components

/// Connected components of {f > delta} under face adjacency.
inline int nodal_components(const Grid& grid, const Field& f, double delta) {
  grid.check(f);
  if (!(delta > 0.0)) throw ConfigError("nodal threshold delta must be positive");
  std::vector<char> seen(grid.size(), 0);
  std::deque<int> queue;
  int count = 0;
  for (int start = 0; start < grid.size(); ++start) {
    if (seen[start] || !(f(start) > delta)) continue;
    ++count;
    seen[start] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const auto mi = grid.multi_index(p);
      for (int a = 0; a < grid.dim(); ++a) {
        const int stride = a == 0 ? grid.nodes(1) : 1;
        for (int step : {-1, 1}) {
          const int ia = mi[a] + step;
          if (ia < 0 || ia >= grid.nodes(a)) continue;
          const int q = p + step * stride;
          if (!seen[q] && f(q) > delta) {
            seen[q] = 1;
            queue.push_back(q);
          }
        }
      }
    }
  }
  return count;
}

// ---------------------------------------------------------------------------
// Non-vanishing and diagonal checks

/// (λ₁_h + λ)∫uφ₁ - ∫u³φ₁: zero if u solves -Δu + λu = u³ (test with φ₁).
/// For u ≥ 0, u ≠ 0 and λ₁_h + λ ≤ 0 it is strictly negative, which is the
/// contradiction ruling out a vanishing partner component.
inline double step4_identity_gap(const Grid& grid, double lambda, const Field& u) {
  grid.check(u, "u");
  const auto pairs = dirichlet_eigenpairs(grid, 1);
  const Field& phi = pairs[0].vector;
  return (pairs[0].value + lambda) * inner(grid, u, phi) - inner(grid, u.array().cube().matrix(), phi);
}

/// Regression guard that a solution has no vanishing component. Passes when
/// both components are positive at every node, or when a component vanishes
/// identically and the partner cannot solve the decoupled equation (the
/// tested identity is violated); fails otherwise.
inline bool step4_positivity_certificate(const Grid& grid, const SystemParams& params, const StatePair& state) {
  check_state(grid, state);
  if (state.u.minCoeff() > 0.0 && state.v.minCoeff() > 0.0) return true;
  const bool u_zero = state.u.cwiseAbs().maxCoeff() == 0.0;
  const bool v_zero = state.v.cwiseAbs().maxCoeff() == 0.0;
  if (u_zero && v_zero) return true;
  if (!u_zero && !v_zero) return false;  // a component touches zero without vanishing
  const Field& other = u_zero ? state.v : state.u;
  const double lambda = u_zero ? params.mu : params.lambda;
  if (other.minCoeff() < 0.0) return false;
  const double lambda1 = dirichlet_eigenpairs(grid, 1)[0].value;
  if (lambda1 + lambda > 0.0) return false;  // the test-function argument does not apply
  return step4_identity_gap(grid, lambda, other) < 0.0;
}

struct DiagonalCheck {
  StatePair state;        // (u, u)
  double energy = 0.0;    // plain energy at λ = μ = -1
  double identity = 0.0;  // -(β-1)/2 ∫u⁴
  double residual = 0.0;  // L2 residual of -Δu + (β-1)u³ - u
  int iterations = 0;
};

/// L2 residual of the diagonal equation -Δu + (β-1)u³ = u.
inline double diagonal_residual(const Grid& grid, const Field& u, double beta) {
  const Field r = grid.neg_laplacian() * u + (beta - 1.0) * u.array().cube().matrix() - u;
  return l2_norm(grid, r);
}

/// If u solves the diagonal equation at β, the same profile rescaled by
/// sqrt((β-1)/(β'-1)) solves it at β'.
inline Field diagonal_rescale(const Field& u, double beta_from, double beta_to) {
  if (!(beta_from > 1.0) || !(beta_to > 1.0)) throw ConfigError("diagonal rescaling needs beta > 1");
  return u * std::sqrt((beta_from - 1.0) / (beta_to - 1.0));
}

/// Solves -Δu + (β-1)u³ = u by Newton from the positive eigenfunction with its
/// one-mode Galerkin amplitude and evaluates both sides of
/// I(u,u) = -(β-1)/2 ∫u⁴.
inline DiagonalCheck step5_diagonal_check(const Grid& grid, double beta, int max_iter = 60) {
  if (!(beta > 1.0)) throw PreconditionError("diagonal check needs beta > 1");
  const auto pairs = dirichlet_eigenpairs(grid, 1);
  const double lambda1 = pairs[0].value;
  if (!(lambda1 < 1.0)) throw PreconditionError("diagonal check needs lambda_1 < 1 on this grid");
  const Field& phi = pairs[0].vector;
  const Field phi2 = phi.cwiseProduct(phi);
  const double amp = std::sqrt((1.0 - lambda1) / ((beta - 1.0) * grid.weight() * phi2.cwiseProduct(phi2).sum()));
  Field u = amp * phi;

  const SparseMatrix& lap = grid.neg_laplacian();
  const SparseMatrix id = detail::sparse_identity(grid.size());
  DiagonalCheck out;
  double last_step = kInfinity;
  for (int it = 0; it < max_iter; ++it) {
    const Field r = lap * u + (beta - 1.0) * u.array().cube().matrix() - u;
    SparseMatrix j = lap - id;
    j += SparseMatrix(((3.0 * (beta - 1.0)) * u.cwiseProduct(u)).asDiagonal());
    Eigen::SimplicialLDLT<SparseMatrix> solver(j);
    if (solver.info() != Eigen::Success) throw SolverError("diagonal Newton: linearization factorization failed", it);
    const Field step = solver.solve(r);
    if (!step.allFinite()) throw SolverError("diagonal Newton: non-finite step", it);
    u -= step;
    out.iterations = it + 1;
    // Stop once the correction has reached rounding level and stopped shrinking.
    const double s = step.norm();
    if (s <= 4.0 * std::numeric_limits<double>::epsilon() * u.norm() || s >= last_step) break;
    last_step = s;
  }
  out.residual = diagonal_residual(grid, u, beta);
  if (!(u.minCoeff() > 0.0) || !(out.residual <= 1e-8))
    throw SolverError("diagonal Newton did not reach a positive solution", out.iterations);
  out.state = {u, u};
  const SystemParams p{-1.0, -1.0, beta};
  out.energy = energy(grid, p, out.state, FunctionalVariant::plain);
  const Field u2 = u.cwiseProduct(u);
  out.identity = -0.5 * (beta - 1.0) * grid.weight() * u2.cwiseProduct(u2).sum();
  return out;
}

// ---------------------------------------------------------------------------
// Norms along a branch

struct NormRow {
  double beta = 0.0;
  double h1_u = 0.0;
  double h1_v = 0.0;
  double linf_u = 0.0;
  double linf_v = 0.0;
};

inline std::vector<NormRow> norm_tracking(const Grid& grid, const Branch& branch) {
  std::vector<NormRow> rows;
  rows.reserve(branch.size());
  for (std::size_t i = 0; i < branch.size(); ++i) {
    const StatePair& s = branch.states[i];
    rows.push_back({branch.betas[i], h1_norm(grid, s.u), h1_norm(grid, s.v), s.u.cwiseAbs().maxCoeff(),
                    s.v.cwiseAbs().maxCoeff()});
  }
  return rows;
}

}  // namespace gpseg
