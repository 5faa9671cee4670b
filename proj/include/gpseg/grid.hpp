#pragma once

// Uniform tensor-product finite-difference grids on boxes (0,L_1) x ... with
// homogeneous Dirichlet data. Fields live on interior nodes only; the zero
// boundary value is implicit.

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gpseg/detail/eigensolvers.hpp"
#include "gpseg/error.hpp"

namespace gpseg {

using Field = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Domain {
  int dim = 1;
  std::array<double, 2> lengths{M_PI, M_PI};
  std::array<int, 2> nodes{3, 3};

  static Domain interval(double length, int n) { return {1, {length, 0.0}, {n, 1}}; }
  static Domain box(double lx, double ly, int nx, int ny) { return {2, {lx, ly}, {nx, ny}}; }
};

struct EigenPair {
  double value;
  Field vector;  // L2-normalized with respect to the grid quadrature
};

class Grid {
public:
  explicit Grid(const Domain& domain) {
    if (domain.dim != 1 && domain.dim != 2)
      throw ConfigError("grid dimension must be 1 or 2, got " + std::to_string(domain.dim));
    for (int a = 0; a < domain.dim; ++a) {
      if (!(domain.lengths[a] > 0.0) || !std::isfinite(domain.lengths[a]))
        throw ConfigError("domain length must be positive on axis " + std::to_string(a));
      if (domain.nodes[a] < 3)
        throw ConfigError("need at least 3 interior nodes on axis " + std::to_string(a));
    }
    auto d = std::make_shared<Data>();
    d->domain = domain;
    d->size = 1;
    d->weight = 1.0;
    for (int a = 0; a < 2; ++a) {
      if (a < domain.dim) {
        d->n[a] = domain.nodes[a];
        d->h[a] = domain.lengths[a] / (domain.nodes[a] + 1);
      } else {
        d->n[a] = 1;
        d->h[a] = 1.0;
      }
    }
    for (int a = 0; a < domain.dim; ++a) {
      d->size *= d->n[a];
      d->weight *= d->h[a];
    }
    d->domain.nodes[1] = d->n[1];
    d->neg_laplacian = assemble(*d);
    d->poisson.compute(d->neg_laplacian);
    if (d->poisson.info() != Eigen::Success) throw SolverError("Cholesky factorization of -Laplacian failed");
    data_ = std::move(d);
  }

  const Domain& domain() const { return data_->domain; }
  int dim() const { return data_->domain.dim; }
  /// Total number of interior nodes N.
  int size() const { return data_->size; }
  int nodes(int axis) const { return data_->n[axis]; }
  double spacing(int axis) const { return data_->h[axis]; }
  double length(int axis) const { return data_->domain.lengths[axis]; }
  /// Quadrature weight shared by every node (product of spacings).
  double weight() const { return data_->weight; }

  /// Lexicographic node index: (i, j) precedes (i, j+1) precedes (i+1, 0).
  int index(int i, int j = 0) const { return i * data_->n[1] + j; }
  std::array<int, 2> multi_index(int node) const { return {node / data_->n[1], node % data_->n[1]}; }

  /// Physical coordinate of a node along `axis`.
  double coordinate(int node, int axis) const { return (multi_index(node)[axis] + 1) * data_->h[axis]; }

  Field coordinate_field(int axis) const {
    Field x(size());
    for (int p = 0; p < size(); ++p) x(p) = coordinate(p, axis);
    return x;
  }

  /// The strong-form operator -Δ_h (second-order central stencil).
  const SparseMatrix& neg_laplacian() const { return data_->neg_laplacian; }

  void check(const Field& f, const char* what = "field") const {
    if (f.size() != size())
      throw DimensionError(std::string(what) + " has " + std::to_string(f.size()) + " values, grid has " +
                           std::to_string(size()) + " nodes");
  }

private:
  struct Data {
    Domain domain;
    std::array<int, 2> n{};
    std::array<double, 2> h{};
    int size = 0;
    double weight = 0.0;
    SparseMatrix neg_laplacian;
    Eigen::SimplicialLLT<SparseMatrix> poisson;
  };

  static SparseMatrix assemble(const Data& d) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(d.size) * (1 + 2 * d.domain.dim));
    for (int i = 0; i < d.n[0]; ++i)
      for (int j = 0; j < d.n[1]; ++j) {
        const int p = i * d.n[1] + j;
        double diag = 0.0;
        for (int a = 0; a < d.domain.dim; ++a) {
          const double c = 1.0 / (d.h[a] * d.h[a]);
          diag += 2.0 * c;
          const int ia = a == 0 ? i : j;
          const int stride = a == 0 ? d.n[1] : 1;
          if (ia > 0) t.emplace_back(p, p - stride, -c);
          if (ia < d.n[a] - 1) t.emplace_back(p, p + stride, -c);
        }
        t.emplace_back(p, p, diag);
      }
    SparseMatrix m(d.size, d.size);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  friend Field solve_poisson(const Grid& grid, const Field& rhs);

  std::shared_ptr<const Data> data_;
};

inline Grid build_grid(const Domain& domain) { return Grid(domain); }

inline Field apply_neg_laplacian(const Grid& grid, const Field& f) {
  grid.check(f);
  return grid.neg_laplacian() * f;
}

inline double integrate(const Grid& grid, const Field& nodal) {
  grid.check(nodal, "integrand");
  return grid.weight() * nodal.sum();
}

/// ∫ a b with the grid quadrature.
inline double inner(const Grid& grid, const Field& a, const Field& b) {
  grid.check(a);
  grid.check(b);
  return grid.weight() * a.dot(b);
}

/// Discrete ∫|∇f|², summed as squared one-sided differences over every grid
/// edge including the ones touching the boundary. Equals <f, -Δ_h f> exactly in
/// exact arithmetic, with no cancellation in floating point.
inline double h1_seminorm_sq(const Grid& grid, const Field& f) {
  grid.check(f);
  const int n0 = grid.nodes(0), n1 = grid.nodes(1);
  double total = 0.0;
  for (int a = 0; a < grid.dim(); ++a) {
    const double inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
    const int len = a == 0 ? n0 : n1;
    const int stride = a == 0 ? n1 : 1;
    const int lines = a == 0 ? n1 : n0;
    double s = 0.0;
    for (int l = 0; l < lines; ++l) {
      const int base = a == 0 ? l : l * n1;
      double prev = 0.0;
      for (int m = 0; m < len; ++m) {
        const double cur = f(base + m * stride);
        s += (cur - prev) * (cur - prev);
        prev = cur;
      }
      s += prev * prev;
    }
    total += s * inv_h2;
  }
  return grid.weight() * total;
}

inline double h1_norm(const Grid& grid, const Field& f) { return std::sqrt(h1_seminorm_sq(grid, f)); }

inline double l2_norm(const Grid& grid, const Field& f) { return std::sqrt(inner(grid, f, f)); }

/// Solves -Δ_h g = rhs by sparse Cholesky with iterative refinement until the
/// relative residual is at most 1e-12.
inline Field solve_poisson(const Grid& grid, const Field& rhs) {
  grid.check(rhs, "right-hand side");
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return Field::Zero(rhs.size());
  const auto& a = grid.neg_laplacian();
  Field g = grid.data_->poisson.solve(rhs);
  constexpr int kMaxRefine = 5;
  for (int it = 0;; ++it) {
    const Field r = rhs - a * g;
    if (r.norm() <= 1e-12 * bnorm) return g;
    if (it == kMaxRefine) throw SolverError("Poisson solve residual stalled above 1e-12", it);
    g += grid.data_->poisson.solve(r);
  }
}

/// The k smallest eigenpairs of (-Δ_h, Dirichlet), values ascending, vectors
/// L2-orthonormal. Each vector is signed so its first significant entry is
/// positive (the first one is then positive everywhere).
inline std::vector<EigenPair> dirichlet_eigenpairs(const Grid& grid, int k) {
  if (k < 1 || k > grid.size())
    throw ConfigError("requested " + std::to_string(k) + " eigenpairs on a grid with " +
                      std::to_string(grid.size()) + " nodes");
  detail::EigenDecomposition dec =
      grid.size() <= detail::kDenseEigenLimit
          ? detail::lowest_eigenpairs_dense(Eigen::MatrixXd(grid.neg_laplacian()), k)
          : detail::lowest_eigenpairs_sparse(grid.neg_laplacian(), k, 0.0, 1e-10);

  std::vector<EigenPair> out;
  out.reserve(k);
  const double scale = 1.0 / std::sqrt(grid.weight());
  for (int j = 0; j < k; ++j) {
    Field v = dec.vectors.col(j) * scale;
    const double vmax = v.cwiseAbs().maxCoeff();
    for (int p = 0; p < v.size(); ++p)
      if (std::abs(v(p)) > 1e-8 * vmax) {
        if (v(p) < 0) v = -v;
        break;
      }
    // Rayleigh quotient through the difference form is accurate to a few ulps
    // even for the smallest eigenvalue, where the solver's absolute error is
    // of order eps * ||-Δ_h||.
    const double value = h1_seminorm_sq(grid, v) / inner(grid, v, v);
    out.push_back({value, std::move(v)});
  }
  return out;
}

}  // namespace gpseg
