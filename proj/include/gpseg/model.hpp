#pragma once

// Energy, gradient, and Hessian of the coupled cubic system
//
//   -Δu + λu = u³ - βuv²,   -Δv + μv = v³ - βvu²,   u, v ∈ H¹₀(Ω),
//
// in two forms: the plain functional with linear terms λ, μ and the truncated
// positive-part functional normalized to λ = μ = -1,
//
//   I(u,v) = I₀(u) + I₀(v) + β/2 ∫u²v²,   I₀(u) = ½‖u‖² - ∫F(u⁺) - ¼∫(u⁺)⁴.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"

namespace gpseg {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct SystemParams {
  double lambda = -1.0;
  double mu = -1.0;
  double beta = 0.0;
  /// Truncation exponent; 0 reduces f to the identity on [0, R].
  double eps = 0.0;
  /// Sublinear cutoff level, > 1 or infinite.
  double R_trunc = kInfinity;

  void validate() const {
    if (!std::isfinite(lambda) || !std::isfinite(mu) || !std::isfinite(beta))
      throw ConfigError("lambda, mu and beta must be finite");
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in [0, 1]");
    if (!(R_trunc > 1.0)) throw ConfigError("R_trunc must be > 1 (or infinite)");
  }
};

struct StatePair {
  Field u;
  Field v;

  static StatePair zero(const Grid& grid) { return {Field::Zero(grid.size()), Field::Zero(grid.size())}; }
  Eigen::Index size() const { return u.size(); }

  StatePair& operator+=(const StatePair& o) {
    u += o.u;
    v += o.v;
    return *this;
  }
  friend StatePair operator+(StatePair a, const StatePair& b) { return a += b; }
  friend StatePair operator-(const StatePair& a, const StatePair& b) { return {a.u - b.u, a.v - b.v}; }
  friend StatePair operator*(double t, const StatePair& a) { return {t * a.u, t * a.v}; }
  friend bool operator==(const StatePair& a, const StatePair& b) { return a.u == b.u && a.v == b.v; }
};

enum class FunctionalVariant { plain, truncated };

inline std::string to_string(FunctionalVariant v) { return v == FunctionalVariant::plain ? "plain" : "truncated"; }

enum class Metric { L2, H1 };

inline void check_state(const Grid& grid, const StatePair& s) {
  grid.check(s.u, "u");
  grid.check(s.v, "v");
}

// ---------------------------------------------------------------------------
// Truncation functions

/// Odd truncation f_{ε,R}: s^{1+ε} on [0,1], (1+ε)s - ε on [1,R], and a
/// square-root tail beyond R, shifted so the function stays continuous.
inline double f_trunc(double s, double eps, double R) {
  const double a = std::abs(s);
  double r;
  if (a <= 1.0)
    r = std::pow(a, 1.0 + eps);
  else if (a <= R)
    r = (1.0 + eps) * a - eps;
  else
    r = 2.0 * std::sqrt(R) * std::sqrt(a) - R + eps * (R - 1.0);
  return s < 0.0 ? -r : r;
}

/// Closed-form antiderivative of f_trunc; even, F(0) = 0.
inline double F_trunc(double s, double eps, double R) {
  const double a = std::abs(s);
  if (a <= 1.0) return std::pow(a, 2.0 + eps) / (2.0 + eps);
  const auto middle = [eps](double x) { return 1.0 / (2.0 + eps) + 0.5 * (1.0 + eps) * (x * x - 1.0) - eps * (x - 1.0); };
  if (a <= R) return middle(a);
  const double sr = std::sqrt(R);
  return middle(R) + 4.0 / 3.0 * sr * (a * std::sqrt(a) - R * sr) - (R - eps * (R - 1.0)) * (a - R);
}

/// Almost-everywhere derivative of f_trunc, with f'(R) := 1 at the kink.
inline double f_trunc_prime(double s, double eps, double R) {
  const double a = std::abs(s);
  if (a <= 1.0) return (1.0 + eps) * std::pow(a, eps);
  if (a < R) return 1.0 + eps;
  return std::sqrt(R / a);
}

inline std::pair<Field, Field> positive_negative_parts(const Field& f) {
  return {f.cwiseMax(0.0), (-f).cwiseMax(0.0)};
}

/// The involution (u, v) -> (v, u).
inline StatePair swap_sigma(const StatePair& s) { return {s.v, s.u}; }

// ---------------------------------------------------------------------------
// Functional, gradient, Hessian

namespace detail {

// Per-component energy density integrals that do not involve the coupling.
inline double single_energy(const Grid& grid, const Field& w, double linear, const SystemParams& p,
                            FunctionalVariant variant) {
  const double grad = h1_seminorm_sq(grid, w);
  if (variant == FunctionalVariant::plain) {
    const Field w2 = w.cwiseProduct(w);
    return 0.5 * grad + 0.5 * linear * grid.weight() * w2.sum() - 0.25 * grid.weight() * w2.cwiseProduct(w2).sum();
  }
  double f_sum = 0.0, q_sum = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double wp = w(i) > 0.0 ? w(i) : 0.0;
    f_sum += F_trunc(wp, p.eps, p.R_trunc);
    q_sum += (wp * wp) * (wp * wp);
  }
  return 0.5 * grad - grid.weight() * f_sum - 0.25 * grid.weight() * q_sum;
}

inline double coupling_integral(const Grid& grid, const Field& u, const Field& v) {
  return grid.weight() * u.cwiseProduct(u).cwiseProduct(v.cwiseProduct(v)).sum();
}

// L2 gradient of one component given the other.
inline Field single_gradient(const Grid& grid, const Field& w, const Field& other, double linear,
                             const SystemParams& p, FunctionalVariant variant) {
  Field g = grid.neg_laplacian() * w;
  const Field other2 = other.cwiseProduct(other);
  if (variant == FunctionalVariant::plain) {
    g.array() += linear * w.array() - w.array().cube() + p.beta * w.array() * other2.array();
  } else {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double wp = w(i) > 0.0 ? w(i) : 0.0;
      g(i) += -f_trunc(wp, p.eps, p.R_trunc) - wp * wp * wp + p.beta * w(i) * other2(i);
    }
  }
  return g;
}

// Diagonal of the reaction part of the Hessian block for component w.
inline Field hessian_diagonal(const Field& w, const Field& other, double linear, const SystemParams& p,
                              FunctionalVariant variant) {
  Field d(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double o2 = other(i) * other(i);
    if (variant == FunctionalVariant::plain) {
      d(i) = linear - 3.0 * w(i) * w(i) + p.beta * o2;
    } else {
      const double wp = w(i) > 0.0 ? w(i) : 0.0;
      const double fp = w(i) > 0.0 ? f_trunc_prime(wp, p.eps, p.R_trunc) : 0.0;
      d(i) = -fp - 3.0 * wp * wp + p.beta * o2;
    }
  }
  return d;
}

}  // namespace detail

inline double energy(const Grid& grid, const SystemParams& params, const StatePair& state,
                     FunctionalVariant variant = FunctionalVariant::plain) {
  check_state(grid, state);
  return detail::single_energy(grid, state.u, params.lambda, params, variant) +
         detail::single_energy(grid, state.v, params.mu, params, variant) +
         0.5 * params.beta * detail::coupling_integral(grid, state.u, state.v);
}

/// L2 metric: the strong-form residual pair. H1 metric: its Poisson solve, i.e.
/// the Riesz representative in the H¹₀ inner product ∫∇·∇.
inline StatePair gradient(const Grid& grid, const SystemParams& params, const StatePair& state,
                          FunctionalVariant variant = FunctionalVariant::plain, Metric metric = Metric::L2) {
  check_state(grid, state);
  StatePair g{detail::single_gradient(grid, state.u, state.v, params.lambda, params, variant),
              detail::single_gradient(grid, state.v, state.u, params.mu, params, variant)};
  if (metric == Metric::H1) {
    g.u = solve_poisson(grid, g.u);
    g.v = solve_poisson(grid, g.v);
  }
  return g;
}

inline StatePair hessian_apply(const Grid& grid, const SystemParams& params, const StatePair& state,
                               const StatePair& dir, FunctionalVariant variant = FunctionalVariant::plain) {
  check_state(grid, state);
  check_state(grid, dir);
  const Field du = detail::hessian_diagonal(state.u, state.v, params.lambda, params, variant);
  const Field dv = detail::hessian_diagonal(state.v, state.u, params.mu, params, variant);
  const Field cross = 2.0 * params.beta * state.u.cwiseProduct(state.v);
  return {grid.neg_laplacian() * dir.u + du.cwiseProduct(dir.u) + cross.cwiseProduct(dir.v),
          grid.neg_laplacian() * dir.v + dv.cwiseProduct(dir.v) + cross.cwiseProduct(dir.u)};
}

/// The 2N x 2N symmetric matrix of hessian_apply, ordered (u-block, v-block).
inline SparseMatrix hessian_matrix(const Grid& grid, const SystemParams& params, const StatePair& state,
                                   FunctionalVariant variant = FunctionalVariant::plain) {
  check_state(grid, state);
  const int n = grid.size();
  const Field du = detail::hessian_diagonal(state.u, state.v, params.lambda, params, variant);
  const Field dv = detail::hessian_diagonal(state.v, state.u, params.mu, params, variant);
  const SparseMatrix& lap = grid.neg_laplacian();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * lap.nonZeros() + 4 * n);
  for (int c = 0; c < lap.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(lap, c); it; ++it) {
      t.emplace_back(it.row(), it.col(), it.value());
      t.emplace_back(it.row() + n, it.col() + n, it.value());
    }
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, du(i));
    t.emplace_back(i + n, i + n, dv(i));
    const double c = 2.0 * params.beta * state.u(i) * state.v(i);
    if (c != 0.0) {
      t.emplace_back(i, i + n, c);
      t.emplace_back(i + n, i, c);
    }
  }
  SparseMatrix h(2 * n, 2 * n);
  h.setFromTriplets(t.begin(), t.end());
  return h;
}

/// ∫ a·H a, the second variation in direction a.
inline double hessian_quadform(const Grid& grid, const SystemParams& params, const StatePair& state,
                               const StatePair& dir, FunctionalVariant variant = FunctionalVariant::plain) {
  const StatePair h = hessian_apply(grid, params, state, dir, variant);
  return inner(grid, h.u, dir.u) + inner(grid, h.v, dir.v);
}

/// L2 norm of the L2 gradient; the convergence measure of every solver path.
inline double residual_norm(const Grid& grid, const SystemParams& params, const StatePair& state,
                            FunctionalVariant variant = FunctionalVariant::plain) {
  const StatePair g = gradient(grid, params, state, variant, Metric::L2);
  return std::sqrt(inner(grid, g.u, g.u) + inner(grid, g.v, g.v));
}

/// ∫ <a, b> summed over both components.
inline double pair_inner(const Grid& grid, const StatePair& a, const StatePair& b) {
  return inner(grid, a.u, b.u) + inner(grid, a.v, b.v);
}

/// H¹₀ norm of a pair, sqrt(‖a.u‖² + ‖a.v‖²).
inline double pair_h1_norm(const Grid& grid, const StatePair& a) {
  return std::sqrt(h1_seminorm_sq(grid, a.u) + h1_seminorm_sq(grid, a.v));
}

}  // namespace gpseg
