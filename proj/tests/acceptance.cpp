// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "gpseg/gpseg.hpp"

using namespace gpseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed sub-checks and a short summary of the measured values.
class Check {
public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failed_ += (failed_.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome done() const { return {pass_, pass_ ? notes_ : "failed: " + failed_ + " | " + notes_}; }

private:
  bool pass_ = true;
  std::string failed_, notes_;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// (2 - 2cos(jh))/h² on (0, π), written out independently of the library.
double stencil(int j, int n) {
  const double h = M_PI / (n + 1);
  return (2.0 - 2.0 * std::cos(j * h)) / (h * h);
}

const SystemParams kBeta50{-1.0, -1.0, 50.0};

StatePair k2_solution(const Grid& g, const SystemParams& p = kBeta50) {
  const SolveResult r = newton_refine(g, p, minimax_init(g, p, MinimaxSeed{2, std::nullopt, {}}));
  if (!r.converged) throw SolverError("k = 2 solve did not converge: " + r.note, r.iterations);
  return canonical_representative(g, r.state);
}

const Grid& line(int n) {
  static std::map<int, Grid> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_grid(Domain::interval(M_PI, n))).first;
  return it->second;
}

const StatePair& solution199() {
  static const StatePair s = k2_solution(line(199));
  return s;
}

const Branch& branch() {
  static const Branch b = [] {
    const Grid& g = line(199);
    SystemParams p = kBeta50;
    p.beta = 100.0;
    return continue_in_beta(g, p, k2_solution(g, p), {1e2, 1e3, 1e4});
  }();
  return b;
}

Field smooth_direction(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = M_PI / (g.size() + 1);
  Field f = Field::Zero(g.size());
  for (int j = 1; j <= 6; ++j) {
    const double c = normal(rng) / j;
    for (int i = 0; i < g.size(); ++i) f(i) += c * std::sin(j * (i + 1) * h);
  }
  return f;
}

// ---------------------------------------------------------------------------

Outcome spectral() {
  Check c;
  const auto pairs = dirichlet_eigenpairs(line(199), 199);
  double worst = 0.0;
  for (int j = 1; j <= 199; ++j) worst = std::max(worst, std::abs(pairs[j - 1].value - stencil(j, 199)) / stencil(j, 199));
  c.expect(worst <= 1e-12, "closed form");
  c.note("closed-form rel err " + num(worst));

  double ratio_lo = 1e9, ratio_hi = 0.0;
  for (int j = 1; j <= 5; ++j) {
    std::vector<double> errs;
    for (int n : {99, 199, 399}) errs.push_back(std::abs(dirichlet_eigenpairs(line(n), j)[j - 1].value - j * j));
    for (std::size_t a = 1; a < errs.size(); ++a) {
      ratio_lo = std::min(ratio_lo, errs[a - 1] / errs[a]);
      ratio_hi = std::max(ratio_hi, errs[a - 1] / errs[a]);
    }
  }
  c.expect(ratio_lo > 3.5 && ratio_hi < 4.5, "1D O(h^2)");
  c.note("1D error ratios [" + num(ratio_lo) + ", " + num(ratio_hi) + "]");

  std::vector<double> errs2;
  for (int n : {15, 31, 63}) {
    const double l1 = dirichlet_eigenpairs(build_grid(Domain::box(M_PI, M_PI, n, n)), 1)[0].value;
    c.expect(std::abs(l1 - 2.0 * stencil(1, n)) <= 1e-10, "2D closed form n=" + std::to_string(n));
    errs2.push_back(std::abs(l1 - 2.0));
  }
  for (std::size_t a = 1; a < errs2.size(); ++a) {
    const double r = errs2[a - 1] / errs2[a];
    c.expect(r > 3.5 && r < 4.5, "2D O(h^2)");
    c.note("2D ratio " + num(r));
  }
  return c.done();
}

Outcome calculus() {
  Check c;
  const Grid& g = line(199);
  std::mt19937_64 rng(2024);
  double grad_worst = 0.0, hess_worst = 0.0;
  for (FunctionalVariant variant : {FunctionalVariant::plain, FunctionalVariant::truncated}) {
    const SystemParams p{-1.0, -1.0, 50.0, variant == FunctionalVariant::plain ? 0.0 : 0.1, 10.0};
    for (int trial = 0; trial < 5; ++trial) {
      // Positive states near the criterion-3 solution keep away from the positive-part kink.
      StatePair s = solution199();
      s.u += 0.2 * smooth_direction(g, rng).cwiseAbs();
      s.v += 0.2 * smooth_direction(g, rng).cwiseAbs();
      const StatePair d{smooth_direction(g, rng), smooth_direction(g, rng)};
      const double t = 1e-4;
      const double fd = (energy(g, p, s + t * d, variant) - energy(g, p, s - t * d, variant)) / (2 * t);
      const double exact = pair_inner(g, gradient(g, p, s, variant), d);
      grad_worst = std::max(grad_worst, std::abs(fd - exact) / std::abs(exact));
      const StatePair gd = (1.0 / (2 * t)) * (gradient(g, p, s + t * d, variant) - gradient(g, p, s - t * d, variant));
      const StatePair hd = hessian_apply(g, p, s, d, variant);
      hess_worst = std::max(hess_worst, std::sqrt(pair_inner(g, gd - hd, gd - hd) / pair_inner(g, hd, hd)));
    }
  }
  c.expect(grad_worst <= 1e-6, "gradient");
  c.expect(hess_worst <= 1e-5, "hessian");
  c.note("gradient rel err " + num(grad_worst) + ", hessian rel err " + num(hess_worst));
  return c.done();
}

Outcome positive_pair() {
  Check c;
  const Grid& g = line(199);
  const StatePair& s = solution199();
  const double res = residual_norm(g, kBeta50, s);
  const double sep = h1_norm(g, s.u - s.v);
  const double e = energy(g, kBeta50, s);
  const Field uv = s.u.cwiseProduct(s.v);
  const double odd = integrate(g, uv.cwiseProduct(s.v.cwiseAbs2() - s.u.cwiseAbs2()));
  const double scale = integrate(g, uv.cwiseProduct(s.v.cwiseAbs2() + s.u.cwiseAbs2()));
  c.expect(res <= 1e-9, "residual");
  c.expect(s.u.minCoeff() > 0.0 && s.v.minCoeff() > 0.0, "positivity");
  c.expect(sep > 1e-2, "u != v");
  c.expect(e > 0.0, "energy");
  c.expect(std::abs(odd) <= 1e-8 * scale, "odd moment");
  c.note("residual " + num(res) + ", min u " + num(s.u.minCoeff()) + ", min v " + num(s.v.minCoeff()) + ", |u-v|_H1 " +
         num(sep) + ", energy " + num(e) + ", odd moment " + num(std::abs(odd) / scale));
  return c.done();
}

Outcome morse_branch() {
  Check c;
  const MorseReport m = morse_index(line(199), kBeta50, solution199());
  c.expect(m.index <= 2, "index <= 2");
  c.note("index at beta=50: " + std::to_string(m.index));
  const Branch& b = branch();
  c.expect(b.complete && b.size() == 3, "branch complete");
  if (b.size() != 3) return c.done();
  std::string idx;
  double lo = kInfinity, hi = 0.0;
  for (const auto& d : b.diagnostics) {
    idx += std::to_string(d.morse_index) + "/" + std::to_string(d.nullity) + " ";
    c.expect(d.morse_index == b.diagnostics[0].morse_index, "index constant");
    lo = std::min(lo, d.h1_u + d.h1_v);
    hi = std::max(hi, d.h1_u + d.h1_v);
  }
  c.expect(b.diagnostics.front().nullity == 0 && b.diagnostics.back().nullity == 0, "endpoint nullity");
  c.expect(hi / lo <= 2.0, "norm variation");
  c.note("index/nullity " + idx + "H1 sum ratio " + num(hi / lo));
  return c.done();
}

Outcome segregation_branch() {
  Check c;
  const Grid& g = line(199);
  const Branch& b = branch();
  c.expect(b.size() == 3, "branch complete");
  if (b.size() != 3) return c.done();
  const Field sum = b.states.back().u + b.states.back().v;
  const int comps = nodal_components(g, sum, 1e-3 * sum.maxCoeff());
  c.expect(comps <= 2, "nodal components");
  for (std::size_t i = 1; i < b.size(); ++i)
    c.expect(b.diagnostics[i].segregation < b.diagnostics[i - 1].segregation, "segregation decreasing");
  const DecayFit fit = decay_fit(g, b);
  c.expect(fit.slope < 0.0 && fit.r_squared >= 0.9, "decay fit");
  c.note("components " + std::to_string(comps) + ", overlaps " + num(b.diagnostics[0].segregation) + " " +
         num(b.diagnostics[1].segregation) + " " + num(b.diagnostics[2].segregation) + ", slope " + num(fit.slope) +
         ", r2 " + num(fit.r_squared));
  return c.done();
}

Outcome diagonal() {
  Check c;
  const Grid& g = line(199);
  const DiagonalCheck d = step5_diagonal_check(g, 50.0);
  const double rel = std::abs(d.energy - d.identity) / std::abs(d.identity);
  c.expect(rel <= 1e-8, "identity");
  c.expect(d.energy < 0.0 && d.identity < 0.0, "negative");
  const DiagonalCheck d2 = step5_diagonal_check(g, 2.0);
  const double r5 = diagonal_residual(g, diagonal_rescale(d2.state.u, 2.0, 5.0), 5.0);
  c.expect(r5 <= 1e-8, "scaling law");
  c.note("energy " + num(d.energy) + ", identity gap " + num(rel) + ", rescaled residual " + num(r5));
  return c.done();
}

Outcome pohozaev() {
  Check c;
  const auto bump = [](const Grid& g) { return quintic_bump(g, {M_PI / 2, 0.0}, {M_PI / 4, 0.0}); };
  const double r1 = pohozaev_residual(line(199), kBeta50, solution199(), bump(line(199))).residual;
  const double r2 = pohozaev_residual(line(399), kBeta50, k2_solution(line(399)), bump(line(399))).residual;
  c.expect(r1 / r2 >= 1.8, "refinement factor");
  const auto [nu, nv] = nehari_residual(line(199), kBeta50, solution199());
  const double su = integrate(line(199), solution199().u.array().pow(4).matrix());
  const double sv = integrate(line(199), solution199().v.array().pow(4).matrix());
  c.expect(nu <= 1e-7 * su && nv <= 1e-7 * sv, "Nehari");
  c.note("residual " + num(r1) + " -> " + num(r2) + " (factor " + num(r1 / r2) + "), Nehari " + num(nu / su) + ", " +
         num(nv / sv));
  return c.done();
}

Outcome truncation() {
  Check c;
  // Linking level estimate per k: sup over rho of the sampled inf over S_k.
  const Grid& g = line(128);
  const SystemParams p{-1.0, -1.0, 30.0, 0.1, kInfinity};
  std::vector<double> level;
  for (int k : {2, 4, 8}) {
    double best = -kInfinity;
    for (double rho : {5.0, 10.0, 20.0, 40.0, 80.0})
      best = std::max(best, linking_probe(g, p, k, rho, 200, 20240 + k).min_energy);
    level.push_back(best);
  }
  c.expect(level[0] < level[1] && level[1] < level[2], "linking levels increase");
  c.note("levels " + num(level[0]) + " " + num(level[1]) + " " + num(level[2]));

  const Grid& g2 = line(199);
  StatePair s = solution199();
  std::vector<double> energies;
  double linf = 0.0;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    const SystemParams pe{-1.0, -1.0, 50.0, eps, 10.0};
    const SolveResult r = newton_refine(g2, pe, s, {}, FunctionalVariant::truncated);
    c.expect(r.converged, "truncated solve eps=" + num(eps));
    s = r.state;
    energies.push_back(energy(g2, pe, s, FunctionalVariant::truncated));
    linf = std::max({linf, s.u.cwiseAbs().maxCoeff(), s.v.cwiseAbs().maxCoeff()});
  }
  const double gap1 = std::abs(energies[1] - energies[0]), gap2 = std::abs(energies[2] - energies[1]);
  c.expect(gap1 >= 3.0 * gap2, "eps convergence");
  c.expect(linf < 10.0, "R inactive");
  c.note("eps gaps " + num(gap1) + " " + num(gap2) + " (ratio " + num(gap1 / gap2) + "), sup norm " + num(linf));
  return c.done();
}

Outcome inertia() {
  Check c;
  const Grid& g = line(199);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  int checked = 0;
  for (int t = 0; t < 20; ++t) {
    StatePair s = StatePair::zero(g);
    for (int i = 0; i < g.size(); ++i) {
      s.u(i) = uni(rng);
      s.v(i) = uni(rng);
    }
    c.expect(inertia_invariance_check(g, kBeta50, s), "random state " + std::to_string(t));
    ++checked;
  }
  c.expect(inertia_invariance_check(g, kBeta50, solution199()), "criterion-3 solution");
  ++checked;
  const Branch& b = branch();
  for (std::size_t i = 0; i < b.size(); ++i) {
    SystemParams p = kBeta50;
    p.beta = b.betas[i];
    c.expect(inertia_invariance_check(g, p, b.states[i]), "branch state " + std::to_string(i));
    ++checked;
  }
  const DiagonalCheck d = step5_diagonal_check(g, 50.0);
  c.expect(inertia_invariance_check(g, kBeta50, d.state), "diagonal solution");
  ++checked;
  c.note(std::to_string(checked) + " states");
  return c.done();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int tool(const std::string& args) {
  const int status = std::system((std::string(GPSEG_TOOL) + " " + args + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome formats() {
  Check c;
  const fs::path dir = fs::temp_directory_path() / ("gpseg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string base = "[domain]\ndim = 1\nL = 3.141592653589793\nn = 199\n"
                           "[params]\nlambda = -1\nmu = -1\nbeta = 50\n[seed]\nk = 2\nrng_seed = 5\n";
  std::ofstream(dir / "run.cfg") << base << "[analysis]\nmorse = true\npohozaev = true\nnodal = true\n";
  std::ofstream(dir / "fail.cfg") << base << "[solve]\nmax_newton_iters = 1\n";
  std::ofstream(dir / "bad.cfg") << base << "[solve]\ngrad_tol = tiny\n";

  const std::string cfg = " --config " + (dir / "run.cfg").string() + " --out ";
  c.expect(tool("solve" + cfg + (dir / "a").string()) == 0, "solve a");
  c.expect(tool("solve" + cfg + (dir / "b").string()) == 0, "solve b");
  for (const char* f : {"u.csv", "v.csv", "report.txt"})
    c.expect(!slurp(dir / "a" / f).empty() && slurp(dir / "a" / f) == slurp(dir / "b" / f), std::string("identical ") + f);
  c.expect(tool("probe" + cfg + (dir / "pa").string()) == 0 && tool("probe" + cfg + (dir / "pb").string()) == 0,
           "probe runs");
  c.expect(slurp(dir / "pa" / "report.txt") == slurp(dir / "pb" / "report.txt"), "identical probe");

  const Grid& g = line(199);
  bool exact = true;
  for (const Field& f : {solution199().u, solution199().v, Field(g.size()).setRandom()}) {
    export_field(g, f, (dir / "rt.csv").string());
    const Field back = import_field(g, (dir / "rt.csv").string());
    exact = exact && std::memcmp(f.data(), back.data(), sizeof(double) * f.size()) == 0;
  }
  c.expect(exact, "round trip");

  const int fail = tool("solve --config " + (dir / "fail.cfg").string() + " --out " + (dir / "f").string());
  c.expect(fail == 2, "non-convergence exit");
  c.expect(slurp(dir / "f" / "report.txt").find("\nerror: ") != std::string::npos, "error record");
  c.expect(fs::exists(dir / "f" / "u.csv"), "partial artifacts");
  const int bad = tool("solve --config " + (dir / "bad.cfg").string() + " --out " + (dir / "x").string());
  c.expect(bad == 1 && !fs::exists(dir / "x"), "config error exit");
  const int missing = tool("analyze --config " + (dir / "run.cfg").string() + " --out " + (dir / "y").string());
  c.expect(missing == 1 && !fs::exists(dir / "y"), "missing input exit");
  c.note("exit codes ok=0 fail=" + std::to_string(fail) + " bad=" + std::to_string(bad) +
         " missing=" + std::to_string(missing));
  fs::remove_all(dir);
  return c.done();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"spectral correctness", spectral},
      {"calculus correctness", calculus},
      {"positive distinct solution (beta=50, k=2)", positive_pair},
      {"Morse index and branch norms", morse_branch},
      {"segregation and nodal structure", segregation_branch},
      {"diagonal identity and scaling", diagonal},
      {"Pohozaev and Nehari certificates", pohozaev},
      {"linking levels and eps convergence", truncation},
      {"inertia invariance", inertia},
      {"determinism, formats, exit codes", formats},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
