#pragma once

// Periodic grid discretizations of the continuum PageRank equations:
//
//   u + ge rho^-2 div(rho^2 b u) - (1/2) sigma gh rho^-2 div(rho^2 grad u) = v / rho
//
// its first-order (gh = 0) limit by vanishing viscosity, the time-dependent
// form, and the characteristic ODEs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/fields.hpp"
#include "cpr/geometry.hpp"

namespace cpr {

/// Real values on the N^d periodic grid, node j at j/N. Flat index
/// sum_a j_a N^a (axis 0 fastest).
class GridField {
 public:
  GridField() = default;
  GridField(int dim, std::size_t N, double fill = 0.0) : dim_(dim), N_(N) {
    if (dim < 1 || dim > 3) throw InvalidArgument("GridField: dimension must be 1, 2 or 3");
    if (N < 2) throw InvalidArgument("GridField: resolution must be at least 2");
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= N;
    values_.assign(total, fill);
  }

  static GridField sample(const ScalarField& f, std::size_t N) {
    GridField g(f.dim(), N);
    Vec x(static_cast<std::size_t>(f.dim()));
    for (std::size_t j = 0; j < g.size(); ++j) {
      g.node(j, x);
      g.values_[j] = f(x);
    }
    return g;
  }

  int dim() const noexcept { return dim_; }
  std::size_t resolution() const noexcept { return N_; }
  std::size_t size() const noexcept { return values_.size(); }
  double spacing() const noexcept { return 1.0 / static_cast<double>(N_); }

  double& operator[](std::size_t j) { return values_[j]; }
  double operator[](std::size_t j) const { return values_[j]; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::size_t stride(int axis) const noexcept {
    std::size_t s = 1;
    for (int a = 0; a < axis; ++a) s *= N_;
    return s;
  }

  std::size_t index_along(std::size_t j, int axis) const noexcept { return (j / stride(axis)) % N_; }

  /// Neighbor of node j one step along `axis` in direction `step` (+1 or -1).
  std::size_t neighbor(std::size_t j, int axis, int step) const noexcept {
    const std::size_t s = stride(axis);
    const std::size_t i = (j / s) % N_;
    if (step > 0) return i + 1 == N_ ? j - (N_ - 1) * s : j + s;
    return i == 0 ? j + (N_ - 1) * s : j - s;
  }

  void node(std::size_t j, std::span<double> x) const {
    for (int a = 0; a < dim_; ++a) {
      x[static_cast<std::size_t>(a)] = static_cast<double>(j % N_) / static_cast<double>(N_);
      j /= N_;
    }
  }

  Vec node(std::size_t j) const {
    Vec x(static_cast<std::size_t>(dim_));
    node(j, x);
    return x;
  }

  /// Multilinear periodic interpolation at an arbitrary point.
  double interpolate(CSpan x) const {
    if (static_cast<int>(x.size()) != dim_) throw InvalidArgument("GridField::interpolate: dimension mismatch");
    std::size_t base[3];
    double frac[3];
    for (int a = 0; a < dim_; ++a) {
      const double s = wrap_coord(x[static_cast<std::size_t>(a)]) * static_cast<double>(N_);
      const double fl = std::floor(s);
      base[a] = static_cast<std::size_t>(fl) % N_;
      frac[a] = s - fl;
    }
    double out = 0.0;
    for (unsigned corner = 0; corner < (1u << dim_); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      std::size_t s = 1;
      for (int a = 0; a < dim_; ++a) {
        const bool up = (corner >> a) & 1u;
        w *= up ? frac[a] : 1.0 - frac[a];
        idx += ((base[a] + (up ? 1 : 0)) % N_) * s;
        s *= N_;
      }
      if (w != 0.0) out += w * values_[idx];
    }
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  void check_same_shape(const GridField& o, const char* who) const {
    if (o.dim_ != dim_ || o.N_ != N_) throw InvalidArgument(std::string(who) + ": grid resolution mismatch");
  }

 private:
  int dim_ = 0;
  std::size_t N_ = 0;
  std::vector<double> values_;
};

inline double max_abs_difference(const GridField& a, const GridField& b) {
  a.check_same_shape(b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

namespace detail {

/// Face averages of rho^2 b_a and rho^2 on the + face of every node.
struct FaceData {
  std::vector<std::vector<double>> flux_coef;  // [axis][node]
  std::vector<double> rho2;                     // node values
  std::vector<std::vector<double>> rho2_face;   // [axis][node]
};

inline FaceData face_data(const GridField& rho, const std::vector<GridField>& b) {
  FaceData f;
  const int d = rho.dim();
  const std::size_t M = rho.size();
  f.rho2.resize(M);
  for (std::size_t j = 0; j < M; ++j) f.rho2[j] = rho[j] * rho[j];
  f.flux_coef.assign(static_cast<std::size_t>(d), std::vector<double>(M));
  f.rho2_face.assign(static_cast<std::size_t>(d), std::vector<double>(M));
  for (int a = 0; a < d; ++a) {
    const auto au = static_cast<std::size_t>(a);
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t jp = rho.neighbor(j, a, +1);
      f.flux_coef[au][j] = 0.5 * (f.rho2[j] * b[au][j] + f.rho2[jp] * b[au][jp]);
      f.rho2_face[au][j] = 0.5 * (f.rho2[j] + f.rho2[jp]);
    }
  }
  return f;
}

}  // namespace detail

/// Coefficients of the continuum problem sampled on one grid.
struct PdeCoeffs {
  GridField rho;
  std::vector<GridField> b;
  GridField v;
  double gamma_eps = 0.0;
  double gamma_h = 0.0;
  double sigma_phi = 0.0;
  /// max_j |discrete rho^-2 div(rho^2 b)|.
  double eta = 0.0;
  /// Analytic fields, when known; used for characteristics.
  std::optional<ScalarField> rho_field;
  std::optional<VectorField> b_field;

  int dim() const noexcept { return rho.dim(); }
  std::size_t resolution() const noexcept { return rho.resolution(); }
  double diffusion() const noexcept { return 0.5 * sigma_phi * gamma_h; }

  /// (gamma_eps, gamma_h) = ((1 - alpha) eps / alpha, (1 - alpha) h^2 / alpha).
  static std::pair<double, double> gammas(double alpha, double eps, double h) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("gammas: alpha must lie in (0, 1]");
    return {(1.0 - alpha) * eps / alpha, (1.0 - alpha) * h * h / alpha};
  }

  static PdeCoeffs from_grids(GridField rho, std::vector<GridField> b, GridField v, double gamma_eps, double gamma_h,
                              double sigma_phi) {
    PdeCoeffs c;
    c.rho = std::move(rho);
    c.b = std::move(b);
    c.v = std::move(v);
    c.gamma_eps = gamma_eps;
    c.gamma_h = gamma_h;
    c.sigma_phi = sigma_phi;
    c.validate();
    c.eta = c.compute_eta();
    return c;
  }

  static PdeCoeffs from_fields(std::size_t N, const ScalarField& rho, const VectorField& b, const ScalarField& v,
                               double gamma_eps, double gamma_h, double sigma_phi) {
    const int d = rho.dim();
    if (b.dim() != d || v.dim() != d) throw InvalidArgument("PdeCoeffs: field dimensions differ");
    GridField rg = GridField::sample(rho, N);
    std::vector<GridField> bg(static_cast<std::size_t>(d), GridField(d, N));
    Vec x(static_cast<std::size_t>(d));
    Vec bx(static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < rg.size(); ++j) {
      rg.node(j, x);
      b.eval(x, bx);
      for (std::size_t a = 0; a < bx.size(); ++a) bg[a][j] = bx[a];
    }
    PdeCoeffs c = from_grids(std::move(rg), std::move(bg), GridField::sample(v, N), gamma_eps, gamma_h, sigma_phi);
    c.rho_field = rho;
    c.b_field = b;
    return c;
  }

  void validate() const {
    const int d = rho.dim();
    if (b.size() != static_cast<std::size_t>(d)) throw InvalidArgument("PdeCoeffs: need one drift grid per axis");
    for (const auto& g : b) rho.check_same_shape(g, "PdeCoeffs");
    rho.check_same_shape(v, "PdeCoeffs");
    for (std::size_t j = 0; j < rho.size(); ++j) {
      if (!(rho[j] > 0.0) || !std::isfinite(rho[j])) throw InvalidArgument("PdeCoeffs: rho must be positive and finite");
      if (!std::isfinite(v[j])) throw InvalidArgument("PdeCoeffs: v must be finite");
      for (const auto& g : b)
        if (!std::isfinite(g[j])) throw InvalidArgument("PdeCoeffs: b must be finite");
    }
    if (!(gamma_eps >= 0.0) || !(gamma_h >= 0.0)) throw InvalidArgument("PdeCoeffs: gammas must be nonnegative");
    if (!(sigma_phi >= 0.0)) throw InvalidArgument("PdeCoeffs: sigma_phi must be nonnegative");
  }

  /// Discrete rho^-2 div(rho^2 b) at every node.
  std::vector<double> drift_divergence() const {
    const auto f = detail::face_data(rho, b);
    const double inv_dx = static_cast<double>(resolution());
    std::vector<double> out(rho.size(), 0.0);
    for (int a = 0; a < dim(); ++a) {
      const auto& q = f.flux_coef[static_cast<std::size_t>(a)];
      for (std::size_t j = 0; j < rho.size(); ++j) out[j] += (q[j] - q[rho.neighbor(j, a, -1)]) * inv_dx;
    }
    for (std::size_t j = 0; j < rho.size(); ++j) out[j] /= f.rho2[j];
    return out;
  }

  /// c(x) = 1 + gamma_eps rho^-2 div(rho^2 b).
  std::vector<double> reaction_coefficient() const {
    auto c = drift_divergence();
    for (double& x : c) x = 1.0 + gamma_eps * x;
    return c;
  }

  double compute_eta() const {
    double m = 0.0;
    for (double x : drift_divergence()) m = std::max(m, std::abs(x));
    return m;
  }

  void require_regime(const char* who) const {
    if (!(eta * gamma_eps < 1.0)) {
      throw RegimeError(std::string(who) + ": eta * gamma_eps = " + std::to_string(eta * gamma_eps) +
                        " must be < 1");
    }
  }
};

/// Solution of a stationary grid problem.
struct PdeSolution {
  GridField u;
  /// Final infinity-norm residual of operator(u) - v / rho.
  double residual = 0.0;
  std::size_t sweeps = 0;
  double delta = 0.0;
};

/// Applies u + ge rho^-2 div(rho^2 b u) - (1/2) sigma gh rho^-2 div(rho^2 grad u) in
/// flux form: face fluxes use two-point averages, and each face flux is
/// computed identically from both sides so sums over the grid telescope.
inline GridField continuum_operator_2nd(const PdeCoeffs& c, const GridField& u) {
  c.rho.check_same_shape(u, "continuum_operator_2nd");
  const auto f = detail::face_data(c.rho, c.b);
  const double N = static_cast<double>(c.resolution());
  const double D = c.diffusion();
  GridField out(u.dim(), u.resolution());
  for (std::size_t j = 0; j < u.size(); ++j) {
    double acc = 0.0;
    for (int a = 0; a < u.dim(); ++a) {
      const auto au = static_cast<std::size_t>(a);
      const std::size_t jp = u.neighbor(j, a, +1);
      const std::size_t jm = u.neighbor(j, a, -1);
      const double adv_p = f.flux_coef[au][j] * (0.5 * (u[j] + u[jp]));
      const double adv_m = f.flux_coef[au][jm] * (0.5 * (u[jm] + u[j]));
      const double dif_p = f.rho2_face[au][j] * ((u[jp] - u[j]) * N);
      const double dif_m = f.rho2_face[au][jm] * ((u[j] - u[jm]) * N);
      acc += c.gamma_eps * (adv_p - adv_m) * N - D * (dif_p - dif_m) * N;
    }
    out[j] = u[j] + acc / f.rho2[j];
  }
  return out;
}

namespace detail {

/// Five- or seven-point periodic stencil, rows scaled by rho^2:
///   diag_j u_j + sum_k off_{j,k} u_{nbr_{j,k}} = rhs_j.
struct Stencil {
  int dim = 0;
  std::size_t N = 0;
  std::vector<double> diag;
  std::vector<double> off;       // 2d per node: (axis a, minus) at 2a, (axis a, plus) at 2a+1
  std::vector<std::size_t> nbr;  // same layout
  std::vector<double> rho2;
};

/// Second-order stencil (centered advection) when `upwind` is false, otherwise
/// upwinded advection. `visc` is the diffusion coefficient.
inline Stencil build_stencil(const PdeCoeffs& c, double visc, bool upwind) {
  const auto f = face_data(c.rho, c.b);
  const GridField& g = c.rho;
  const int d = g.dim();
  const auto du = static_cast<std::size_t>(d);
  const double N = static_cast<double>(g.resolution());
  const double ge = c.gamma_eps;
  Stencil s;
  s.dim = d;
  s.N = g.resolution();
  s.diag.assign(g.size(), 0.0);
  s.off.assign(g.size() * 2 * du, 0.0);
  s.nbr.assign(g.size() * 2 * du, 0);
  s.rho2 = f.rho2;
  for (std::size_t j = 0; j < g.size(); ++j) {
    double diag = f.rho2[j];
    for (std::size_t a = 0; a < du; ++a) {
      const std::size_t jm = g.neighbor(j, static_cast<int>(a), -1);
      const std::size_t jp = g.neighbor(j, static_cast<int>(a), +1);
      const double ap = f.flux_coef[a][j];
      const double am = f.flux_coef[a][jm];
      const double kp = visc * f.rho2_face[a][j] * N * N;
      const double km = visc * f.rho2_face[a][jm] * N * N;
      double cm = -km;
      double cp = -kp;
      diag += kp + km;
      if (upwind) {
        cp += ge * std::min(ap, 0.0) * N;
        cm -= ge * std::max(am, 0.0) * N;
        diag += ge * (std::max(ap, 0.0) - std::min(am, 0.0)) * N;
      } else {
        cp += 0.5 * ge * ap * N;
        cm -= 0.5 * ge * am * N;
        diag += 0.5 * ge * (ap - am) * N;
      }
      s.off[j * 2 * du + 2 * a] = cm;
      s.off[j * 2 * du + 2 * a + 1] = cp;
      s.nbr[j * 2 * du + 2 * a] = jm;
      s.nbr[j * 2 * du + 2 * a + 1] = jp;
    }
    s.diag[j] = diag;
  }
  return s;
}

inline double stencil_row(const Stencil& s, std::span<const double> u, std::size_t j) {
  const std::size_t k = 2 * static_cast<std::size_t>(s.dim);
  double acc = s.diag[j] * u[j];
  for (std::size_t e = 0; e < k; ++e) acc += s.off[j * k + e] * u[s.nbr[j * k + e]];
  return acc;
}

/// max_j |(A u - rhs)_j| / rho2_j.
inline double stencil_residual(const Stencil& s, std::span<const double> u, std::span<const double> rhs) {
  double m = 0.0;
  for (std::size_t j = 0; j < s.diag.size(); ++j) m = std::max(m, std::abs(stencil_row(s, u, j) - rhs[j]) / s.rho2[j]);
  return m;
}

/// Successive over-relaxation, red-black when N is even (lexicographic
/// otherwise). The relaxation factor starts from the Jacobi estimate and is
/// pulled toward 1 when the residual stops improving.
inline std::size_t sor_solve(const Stencil& s, std::span<const double> rhs, std::span<double> u, double tol,
                             std::size_t max_sweeps, double& residual) {
  const std::size_t M = s.diag.size();
  const std::size_t k = 2 * static_cast<std::size_t>(s.dim);
  double rho_j = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    double off = 0.0;
    for (std::size_t e = 0; e < k; ++e) off += std::abs(s.off[j * k + e]);
    rho_j = std::max(rho_j, off / s.diag[j]);
  }
  rho_j = std::min(rho_j, 1.0 - 1e-12);
  double omega = 2.0 / (1.0 + std::sqrt(1.0 - rho_j * rho_j));
  omega = std::min(omega, 1.99);

  const bool red_black = s.N % 2 == 0;
  std::vector<unsigned char> color;
  if (red_black) {
    color.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
      std::size_t rem = j;
      std::size_t parity = 0;
      for (int a = 0; a < s.dim; ++a) {
        parity += rem % s.N;
        rem /= s.N;
      }
      color[j] = static_cast<unsigned char>(parity % 2);
    }
  }

  auto relax = [&](std::size_t j) {
    double acc = rhs[j];
    for (std::size_t e = 0; e < k; ++e) acc -= s.off[j * k + e] * u[s.nbr[j * k + e]];
    u[j] += omega * (acc / s.diag[j] - u[j]);
  };

  residual = stencil_residual(s, u, rhs);
  if (residual <= tol) return 0;
  double best = residual;
  int since_best = 0;
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    if (red_black) {
      for (unsigned char c = 0; c < 2; ++c) {
#pragma omp parallel for schedule(static)
        for (std::int64_t ji = 0; ji < static_cast<std::int64_t>(M); ++ji) {
          const auto j = static_cast<std::size_t>(ji);
          if (color[j] == c) relax(j);
        }
      }
    } else {
      for (std::size_t j = 0; j < M; ++j) relax(j);
    }
    if (sweep % 10 == 0 || sweep == max_sweeps) {
      residual = stencil_residual(s, u, rhs);
      if (!std::isfinite(residual)) throw NonConvergence("sor_solve: iteration diverged", residual);
      if (residual <= tol) return sweep;
      // Over-relaxation has transient growth; reduce omega only on stagnation
      // (no new best residual for 20 checks) or on violent growth.
      if (residual < best) {
        best = residual;
        since_best = 0;
      } else if (++since_best >= 20 || residual > 1e6 * best) {
        if (omega > 1.0) omega = 1.0 + 0.5 * (omega - 1.0);
        since_best = 0;
        best = residual;
      }
    }
  }
  throw NonConvergence("sor_solve: residual " + std::to_string(residual) + " above tolerance after " +
                           std::to_string(max_sweeps) + " sweeps",
                       residual);
}

inline std::vector<double> scaled_rhs(const PdeCoeffs& c) {
  // rho^2 * (v / rho) = rho * v.
  std::vector<double> rhs(c.rho.size());
  for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = c.rho[j] * c.v[j];
  return rhs;
}

inline GridField initial_guess(const PdeCoeffs& c) {
  GridField u(c.dim(), c.resolution());
  for (std::size_t j = 0; j < u.size(); ++j) u[j] = c.v[j] / c.rho[j];
  return u;
}

}  // namespace detail

struct SolverOptions {
  /// Infinity-norm tolerance on operator(u) - v / rho.
  double tol = 1e-10;
  std::size_t max_sweeps = 500000;
};

/// Solves the second-order equation with right side v / rho.
inline PdeSolution solve_pde_2nd(const PdeCoeffs& c, SolverOptions opt = {}) {
  c.validate();
  if (!(c.gamma_h > 0.0) || !(c.sigma_phi > 0.0)) throw InvalidArgument("solve_pde_2nd: gamma_h and sigma_phi must be positive");
  if (!(opt.tol > 0.0)) throw InvalidArgument("solve_pde_2nd: tol must be positive");
  c.require_regime("solve_pde_2nd");
  const auto st = detail::build_stencil(c, c.diffusion(), false);
  const auto rhs = detail::scaled_rhs(c);
  PdeSolution sol;
  sol.u = detail::initial_guess(c);
  try {
    sol.sweeps = detail::sor_solve(st, rhs, sol.u.values(), 0.5 * opt.tol, opt.max_sweeps, sol.residual);
  } catch (const NonConvergence& e) {
    // Centered advection loses diagonal dominance once advection outweighs
    // diffusion on the grid scale; say so, since that is the usual cause.
    double bmax = 0.0;
    for (const auto& g : c.b) bmax = std::max(bmax, g.max_abs());
    const double peclet = c.gamma_eps * bmax / (static_cast<double>(c.resolution()) * c.sigma_phi * c.gamma_h);
    if (peclet <= 1.0) throw;
    throw NonConvergence(std::string(e.what()) + " (grid Peclet number " + std::to_string(peclet) +
                             " > 1; refine the grid or use solve_pde_1st)",
                         e.residual());
  }
  // Report the residual of the flux-form operator itself.
  const GridField Au = continuum_operator_2nd(c, sol.u);
  double r = 0.0;
  for (std::size_t j = 0; j < Au.size(); ++j) r = std::max(r, std::abs(Au[j] - c.v[j] / c.rho[j]));
  sol.residual = r;
  return sol;
}

/// Applies u + ge rho^-2 div(rho^2 b u) - delta rho^-2 div(rho^2 grad u) with
/// upwinded advection fluxes.
inline GridField continuum_operator_1st(const PdeCoeffs& c, double delta, const GridField& u) {
  c.rho.check_same_shape(u, "continuum_operator_1st");
  const auto st = detail::build_stencil(c, delta, true);
  GridField out(u.dim(), u.resolution());
  for (std::size_t j = 0; j < u.size(); ++j) out[j] = detail::stencil_row(st, u.values(), j) / st.rho2[j];
  return out;
}

/// Vanishing-viscosity approximation of the first-order equation
///   u + ge rho^-2 div(rho^2 b u) = v / rho
/// with upwinded advection and viscosity delta (0 selects 1/N).
inline PdeSolution solve_pde_1st(const PdeCoeffs& c, double delta = 0.0, SolverOptions opt = {}) {
  c.validate();
  if (delta == 0.0) delta = 1.0 / static_cast<double>(c.resolution());
  if (!(delta > 0.0)) throw InvalidArgument("solve_pde_1st: viscosity must be positive");
  if (!(opt.tol > 0.0)) throw InvalidArgument("solve_pde_1st: tol must be positive");
  c.require_regime("solve_pde_1st");
  const auto st = detail::build_stencil(c, delta, true);
  const auto rhs = detail::scaled_rhs(c);
  PdeSolution sol;
  sol.delta = delta;
  sol.u = detail::initial_guess(c);
  sol.sweeps = detail::sor_solve(st, rhs, sol.u.values(), opt.tol, opt.max_sweeps, sol.residual);
  return sol;
}

/// Largest forward-Euler step accepted by solve_pde_time: the smaller of the
/// grid diffusion bound and the rho-weighted advective CFL bound.
inline double stable_time_step(const PdeCoeffs& c) {
  const auto f = detail::face_data(c.rho, c.b);
  const double N = static_cast<double>(c.resolution());
  const double D = c.diffusion();
  double dt_diff = std::numeric_limits<double>::infinity();
  double dt_adv = std::numeric_limits<double>::infinity();
  double rho2_min = std::numeric_limits<double>::infinity();
  for (double r : f.rho2) rho2_min = std::min(rho2_min, r);
  for (std::size_t j = 0; j < c.rho.size(); ++j) {
    double s = 1.0;
    for (int a = 0; a < c.dim(); ++a) {
      const auto au = static_cast<std::size_t>(a);
      s += D * (f.rho2_face[au][j] + f.rho2_face[au][c.rho.neighbor(j, a, -1)]) * N * N / f.rho2[j];
      const double flux = std::abs(f.flux_coef[au][j]);
      if (c.gamma_eps > 0.0 && flux > 0.0) dt_adv = std::min(dt_adv, rho2_min / (c.gamma_eps * flux * N));
    }
    dt_diff = std::min(dt_diff, 1.0 / s);
  }
  return std::min(dt_diff, dt_adv);
}

struct TimeSeries {
  std::vector<double> times;
  std::vector<GridField> snapshots;
};

/// Forward Euler for u_t + A u = v / rho, u(0) = g, with A the flux-form
/// second-order operator. Snapshots are kept every `every` steps (and at T).
inline TimeSeries solve_pde_time(const PdeCoeffs& c, const GridField& g, double T, double dt, std::size_t every = 1) {
  c.validate();
  c.rho.check_same_shape(g, "solve_pde_time");
  if (!(c.gamma_h > 0.0)) throw InvalidArgument("solve_pde_time: gamma_h must be positive");
  if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidArgument("solve_pde_time: need dt > 0 and T >= 0");
  if (every == 0) throw InvalidArgument("solve_pde_time: snapshot stride must be positive");
  const double bound = stable_time_step(c);
  if (dt > bound * (1.0 + 1e-12)) {
    throw ConfigError("solve_pde_time: dt = " + std::to_string(dt) + " exceeds the explicit stability bound " +
                      std::to_string(bound));
  }
  const auto steps = static_cast<std::size_t>(std::llround(std::ceil(T / dt - 1e-9)));
  TimeSeries ts;
  GridField u = g;
  ts.times.push_back(0.0);
  ts.snapshots.push_back(u);
  std::vector<double> src(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) src[j] = c.v[j] / c.rho[j];
  double t = 0.0;
  for (std::size_t m = 1; m <= steps; ++m) {
    const double step = std::min(dt, T - t);
    const GridField Au = continuum_operator_2nd(c, u);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] += step * (src[j] - Au[j]);
    t = m == steps ? T : t + step;
    if (m % every == 0 || m == steps) {
      ts.times.push_back(t);
      ts.snapshots.push_back(u);
    }
  }
  return ts;
}

struct CharacteristicState {
  double s = 0.0;
  Vec x;
  double z = 0.0;
  Vec p;
};

namespace detail {

/// Right sides of the characteristic system at one point:
/// b, grad(div b + 2 grad log rho . b), and Db.
struct CharFields {
  int dim = 0;
  std::function<void(CSpan, Vec&, Vec&, Vec&)> eval;
};

inline CharFields analytic_char_fields(const ScalarField& rho, const VectorField& b) {
  CharFields cf;
  cf.dim = b.dim();
  cf.eval = [rho, b](CSpan x, Vec& bx, Vec& gq, Vec& jac) {
    const auto d = static_cast<std::size_t>(b.dim());
    bx = b(x);
    jac = b.jacobian(x);
    gq = b.grad_div(x);
    if (b.is_zero()) return;
    const double r = rho(x);
    const Vec gr = rho.gradient(x);
    const Vec hr = rho.hessian(x);
    Vec gl(d);
    for (std::size_t i = 0; i < d; ++i) gl[i] = gr[i] / r;
    // grad(grad log rho . b) = (Hess log rho) b + Db^T grad log rho.
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double hl = hr[i * d + k] / r - gl[i] * gl[k];
        acc += hl * bx[k] + jac[k * d + i] * gl[k];
      }
      gq[i] += 2.0 * acc;
    }
  };
  return cf;
}

/// Centered-difference version built from the grid coefficients.
inline CharFields grid_char_fields(const PdeCoeffs& c) {
  const int d = c.dim();
  const auto du = static_cast<std::size_t>(d);
  const std::size_t M = c.rho.size();
  const double N = static_cast<double>(c.resolution());
  auto diff = [&](const GridField& f, int a) {
    GridField out(d, c.resolution());
    for (std::size_t j = 0; j < M; ++j) out[j] = 0.5 * N * (f[c.rho.neighbor(j, a, +1)] - f[c.rho.neighbor(j, a, -1)]);
    return out;
  };
  GridField logrho(d, c.resolution());
  for (std::size_t j = 0; j < M; ++j) logrho[j] = std::log(c.rho[j]);
  std::vector<GridField> jac;  // [i*d + k] = d b_i / d x_k
  for (std::size_t i = 0; i < du; ++i)
    for (int k = 0; k < d; ++k) jac.push_back(diff(c.b[i], k));
  GridField q(d, c.resolution());
  for (int a = 0; a < d; ++a) {
    const GridField gl = diff(logrho, a);
    const auto au = static_cast<std::size_t>(a);
    for (std::size_t j = 0; j < M; ++j) q[j] += jac[au * du + au][j] + 2.0 * gl[j] * c.b[au][j];
  }
  std::vector<GridField> gq;
  for (int a = 0; a < d; ++a) gq.push_back(diff(q, a));
  CharFields cf;
  cf.dim = d;
  cf.eval = [b = c.b, jac = std::move(jac), gq = std::move(gq), du](CSpan x, Vec& bx, Vec& g, Vec& J) {
    bx.resize(du);
    g.resize(du);
    J.resize(du * du);
    for (std::size_t i = 0; i < du; ++i) {
      bx[i] = b[i].interpolate(x);
      g[i] = gq[i].interpolate(x);
    }
    for (std::size_t e = 0; e < du * du; ++e) J[e] = jac[e].interpolate(x);
  };
  return cf;
}

}  // namespace detail

/// Classical RK4 for
///   x' = b(x),  z' = b(x).p,  p' = z grad(div b + 2 grad log rho . b)(x) + Db(x) p,
/// with positions wrapped to the torus. Uses analytic derivatives when the
/// coefficients carry analytic fields, centered grid differences otherwise.
inline std::vector<CharacteristicState> integrate_characteristics(const PdeCoeffs& c, CSpan x0, double z0, CSpan p0,
                                                                  double T, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_characteristics: dt must be positive");
  if (!(T >= 0.0)) throw InvalidArgument("integrate_characteristics: T must be nonnegative");
  const auto d = static_cast<std::size_t>(c.dim());
  if (x0.size() != d || p0.size() != d) throw InvalidArgument("integrate_characteristics: dimension mismatch");
  const detail::CharFields cf = (c.rho_field && c.b_field) ? detail::analytic_char_fields(*c.rho_field, *c.b_field)
                                                           : detail::grid_char_fields(c);
  // State layout: x (d), z (1), p (d).
  const std::size_t S = 2 * d + 1;
  auto rhs = [&](const Vec& y, Vec& out) {
    Vec bx, gq, J;
    cf.eval(CSpan(y.data(), d), bx, gq, J);
    const double z = y[d];
    double bp = 0.0;
    for (std::size_t i = 0; i < d; ++i) bp += bx[i] * y[d + 1 + i];
    for (std::size_t i = 0; i < d; ++i) out[i] = bx[i];
    out[d] = bp;
    for (std::size_t i = 0; i < d; ++i) {
      double acc = z * gq[i];
      for (std::size_t k = 0; k < d; ++k) acc += J[i * d + k] * y[d + 1 + k];
      out[d + 1 + i] = acc;
    }
  };

  Vec y(S);
  for (std::size_t i = 0; i < d; ++i) y[i] = wrap_coord(x0[i]);
  y[d] = z0;
  for (std::size_t i = 0; i < d; ++i) y[d + 1 + i] = p0[i];
  std::vector<CharacteristicState> traj;
  auto record = [&](double s) {
    traj.push_back(CharacteristicState{s, Vec(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d)), y[d],
                                       Vec(y.begin() + static_cast<std::ptrdiff_t>(d + 1), y.end())});
  };
  record(0.0);
  const auto steps = static_cast<std::size_t>(std::llround(std::ceil(T / dt - 1e-9)));
  Vec k1(S), k2(S), k3(S), k4(S), tmp(S);
  double s = 0.0;
  for (std::size_t m = 1; m <= steps; ++m) {
    const double step = std::min(dt, T - s);
    rhs(y, k1);
    for (std::size_t i = 0; i < S; ++i) tmp[i] = y[i] + 0.5 * step * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < S; ++i) tmp[i] = y[i] + 0.5 * step * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < S; ++i) tmp[i] = y[i] + step * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < S; ++i) y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (std::size_t i = 0; i < d; ++i) y[i] = wrap_coord(y[i]);
    s = m == steps ? T : s + step;
    record(s);
  }
  return traj;
}

}  // namespace cpr
