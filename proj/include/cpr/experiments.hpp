#pragma once

// Pointwise consistency, convergence against the explicit torus solution,
// the evolution comparison, and the alpha sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpr/continuum.hpp"
#include "cpr/error.hpp"
#include "cpr/fields.hpp"
#include "cpr/geometry.hpp"
#include "cpr/graph.hpp"
#include "cpr/kernel.hpp"
#include "cpr/pagerank.hpp"
#include "cpr/random.hpp"

namespace cpr {

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  /// RMS residual of the fit in log space.
  double residual = 0.0;
};

/// Least squares of log y = log a + p log x.
inline PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit_power_law: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("fit_power_law: need at least two points");
  const auto m = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InvalidArgument("fit_power_law: data must be positive");
    sx += std::log(xs[i]);
    sy += std::log(ys[i]);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(ys[i]) - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_power_law: abscissae must not all coincide");
  PowerLawFit f;
  f.exponent = sxy / sxx;
  const double intercept = my - f.exponent * mx;
  f.prefactor = std::exp(intercept);
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = std::log(ys[i]) - (intercept + f.exponent * std::log(xs[i]));
    ss += r * r;
  }
  f.residual = std::sqrt(ss / m);
  return f;
}

/// Ordinary least-squares slope of ys against xs.
inline double fit_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw InvalidArgument("fit_slope: need two or more paired values");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_slope: abscissae must not all coincide");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Consistency

struct ConsistencyStats {
  std::string function;
  double mean_abs = 0.0;
  double max_abs = 0.0;
  /// Discrepancy against the second-order right side divided by (eps + h^2).
  double mean_normalized = 0.0;
  double max_normalized = 0.0;
  /// Discrepancy against the first-order right side (advection only), divided by eps.
  /// NaN when eps = 0.
  double mean_abs_first = 0.0;
  double mean_normalized_first = 0.0;
};

namespace detail {

/// rho^-2 div(rho^2 b phi) and rho^-2 div(rho^2 grad phi) at x.
inline std::pair<double, double> continuum_terms(const ScalarField& rho, const VectorField& b, const ScalarField& phi,
                                                 CSpan x) {
  const auto d = static_cast<std::size_t>(phi.dim());
  const double r = rho(x);
  const Vec gr = rho.gradient(x);
  const double f = phi(x);
  const Vec gf = phi.gradient(x);
  const double lap = phi.laplacian(x);
  double adv = 0.0;
  if (!b.is_zero()) {
    const Vec bx = b(x);
    adv = f * b.divergence(x);
    for (std::size_t i = 0; i < d; ++i) adv += bx[i] * gf[i] + 2.0 * f * bx[i] * gr[i] / r;
  }
  double dif = lap;
  for (std::size_t i = 0; i < d; ++i) dif += 2.0 * gr[i] * gf[i] / r;
  return {adv, dif};
}

}  // namespace detail

/// Compares (d_x / (rho(x) n h^d)) L phi(x) at every node with
///   -eps rho^-2 div(rho^2 b phi) + (1/2) sigma h^2 rho^-2 div(rho^2 grad phi)
/// and with its first-order part.
inline std::vector<ConsistencyStats> consistency_check(const DirectedGraph& g, const ScalarField& rho,
                                                       const DriftSpec& drift, double sigma,
                                                       std::span<const ScalarField> phis) {
  if (!drift.identity_matrix()) {
    throw UnsupportedConfiguration("consistency_check: the continuum operator is implemented for B = I only");
  }
  const PointCloud* pts = g.points();
  if (pts == nullptr || g.params().kind != GraphKind::rdgg) {
    throw InvalidArgument("consistency_check: needs a geometric graph with stored points");
  }
  const double h = g.params().h;
  const double eps = g.params().eps;
  const std::size_t n = g.size();
  const double scale = g.normalization();
  std::vector<ConsistencyStats> out;
  for (const auto& phi : phis) {
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = phi((*pts)[i]);
    const auto Lphi = apply_L(g, vals);
    ConsistencyStats st;
    st.function = phi.name();
    double sum = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const CSpan x = (*pts)[i];
      const double lhs = g.degrees()[i] / (rho(x) * scale) * Lphi[i];
      const auto [adv, dif] = detail::continuum_terms(rho, drift.b(), phi, x);
      const double first = -eps * adv;
      const double second = first + 0.5 * sigma * h * h * dif;
      const double e = std::abs(lhs - second);
      sum += e;
      st.max_abs = std::max(st.max_abs, e);
      sum1 += std::abs(lhs - first);
    }
    st.mean_abs = sum / static_cast<double>(n);
    st.mean_normalized = st.mean_abs / (eps + h * h);
    st.max_normalized = st.max_abs / (eps + h * h);
    st.mean_abs_first = sum1 / static_cast<double>(n);
    st.mean_normalized_first = eps > 0.0 ? st.mean_abs_first / eps : std::numeric_limits<double>::quiet_NaN();
    out.push_back(std::move(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence against the explicit torus solution

enum class HRule { log_sqrt, cube_root, quarter_root };

inline std::string to_string(HRule r) {
  switch (r) {
    case HRule::log_sqrt: return "log-sqrt";
    case HRule::cube_root: return "cube-root";
    case HRule::quarter_root: return "quarter-root";
  }
  return "?";
}

inline HRule parse_h_rule(const std::string& s) {
  if (s == "log-sqrt") return HRule::log_sqrt;
  if (s == "cube-root") return HRule::cube_root;
  if (s == "quarter-root") return HRule::quarter_root;
  throw InvalidArgument("unknown h rule '" + s + "' (expected log-sqrt, cube-root or quarter-root)");
}

/// h(n): log(n) n^-1/2, 2 n^-1/3, or n^-1/4.
inline double h_of(HRule r, std::size_t n) {
  const auto x = static_cast<double>(n);
  switch (r) {
    case HRule::log_sqrt: return std::log(x) / std::sqrt(x);
    case HRule::cube_root: return 2.0 * std::cbrt(1.0 / x);
    case HRule::quarter_root: return std::pow(x, -0.25);
  }
  return 0.0;
}

/// The constant C in alpha = C h^2 used with each rule.
inline double default_alpha_constant(HRule r) {
  switch (r) {
    case HRule::log_sqrt: return 30.0;
    case HRule::cube_root: return 20.0;
    case HRule::quarter_root: return 10.0;
  }
  return 0.0;
}

struct ScheduleEntry {
  std::size_t n = 0;
  HRule rule = HRule::cube_root;
  double C = 20.0;
  /// Overrides alpha = C h^2 when set.
  std::optional<double> alpha;
};

struct ConvergenceRow {
  std::size_t n = 0;
  HRule rule = HRule::cube_root;
  double h = 0.0;
  double alpha = 0.0;
  double eps = 0.0;
  std::size_t trials = 0;
  double mean_linf_error = 0.0;
  std::vector<double> trial_errors;
  /// Mean over trials of the 99th percentile of |u(x) - u(y)| / (|x - y| + h) over sampled edges.
  double lipschitz_ratio_stat = 0.0;
  /// Largest max|u| over trials and the stability bound 2 max|v|.
  double max_abs_u = 0.0;
  double stability_bound = 0.0;
  bool stable = true;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  /// Log-log slope of mean error against h, one entry per rule with at least two distinct h.
  std::vector<std::pair<HRule, PowerLawFit>> slopes;
  std::uint64_t seed = 0;

  std::optional<PowerLawFit> slope_for(HRule r) const {
    for (const auto& [rule, fit] : slopes)
      if (rule == r) return fit;
    return std::nullopt;
  }
};

/// u(x) = 2 - (cos 2 pi x1 + cos 2 pi x2).
inline double explicit_solution(CSpan x) {
  constexpr double tau = 2.0 * std::numbers::pi;
  return 2.0 - (std::cos(tau * x[0]) + std::cos(tau * x[1]));
}

/// v(x) = 2 - (1 + gh pi^2 / 2)(cos 2 pi x1 + cos 2 pi x2).
inline double explicit_teleport(CSpan x, double gamma_h) {
  constexpr double tau = 2.0 * std::numbers::pi;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return 2.0 - (1.0 + 0.5 * gamma_h * pi2) * (std::cos(tau * x[0]) + std::cos(tau * x[1]));
}

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  const std::size_t idx = std::min(k, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

/// 99th percentile of |u(x) - u(y)| / (|x - y| + h) over up to `samples` edges
/// drawn uniformly with replacement (all edges when there are fewer).
inline double lipschitz_statistic(const DirectedGraph& g, std::span<const double> u, double h, std::size_t samples,
                                  Rng& rng) {
  const PointCloud& pts = *g.points();
  std::vector<double> ratios;
  auto push = [&](std::size_t x, std::size_t y) {
    const Vec disp = torus_displacement(pts[x], pts[y]);
    double norm = 0.0;
    for (double c : disp) norm += c * c;
    ratios.push_back(std::abs(u[x] - u[y]) / (std::sqrt(norm) + h));
  };
  const std::size_t m = g.edge_count();
  if (m <= samples) {
    for (std::size_t x = 0; x < g.size(); ++x)
      for (auto y : g.out_targets(x)) push(x, y);
  } else {
    std::vector<std::size_t> row_end(g.size());
    std::size_t acc = 0;
    for (std::size_t x = 0; x < g.size(); ++x) {
      acc += g.out_targets(x).size();
      row_end[x] = acc;
    }
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t e = rng.below(m);
      const auto x = static_cast<std::size_t>(std::upper_bound(row_end.begin(), row_end.end(), e) - row_end.begin());
      const std::size_t start = row_end[x] - g.out_targets(x).size();
      push(x, g.out_targets(x)[e - start]);
    }
  }
  return percentile(std::move(ratios), 0.99);
}

}  // namespace detail

struct ConvergenceOptions {
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  std::size_t lipschitz_samples = 20000;
};

/// For each schedule entry and trial: sample n uniform points on T^2, build the
/// indicator-kernel graph with b = 0, solve PageRank with the explicit teleport
/// values, and record the L-infinity error against the explicit solution.
/// Trial t uses the sub-stream t of the master seed for every row.
inline ConvergenceReport convergence_study(std::span<const ScheduleEntry> schedule, ConvergenceOptions opt = {}) {
  if (schedule.empty()) throw InvalidArgument("convergence_study: empty schedule");
  if (opt.trials == 0) throw InvalidArgument("convergence_study: trials must be at least 1");
  constexpr int d = 2;
  const KernelSpec kernel = KernelSpec::indicator(d);
  const DriftSpec drift = DriftSpec::none(d);
  ConvergenceReport rep;
  rep.seed = opt.seed;
  for (std::size_t ri = 0; ri < schedule.size(); ++ri) {
    const ScheduleEntry& e = schedule[ri];
    ConvergenceRow row;
    row.n = e.n;
    row.rule = e.rule;
    row.h = h_of(e.rule, e.n);
    row.alpha = e.alpha ? *e.alpha : e.C * row.h * row.h;
    row.trials = opt.trials;
    const std::string where = "convergence_study row " + std::to_string(ri) + " (n=" + std::to_string(e.n) +
                              ", rule=" + to_string(e.rule) + ")";
    if (!(row.alpha > 0.0 && row.alpha <= 1.0)) {
      throw InvalidArgument(where + ": alpha = " + std::to_string(row.alpha) + " outside (0, 1]");
    }
    const double gamma_h = (1.0 - row.alpha) * row.h * row.h / row.alpha;
    double lip_sum = 0.0;
    for (std::size_t t = 0; t < opt.trials; ++t) {
      const std::uint64_t trial_seed = derive_seed(opt.seed, t);
      try {
        const PointCloud pts = sample_uniform(d, e.n, trial_seed);
        const DirectedGraph g = build_rdgg(pts, kernel, drift, row.h, 0.0, trial_seed);
        PageRankConfig cfg{row.alpha, std::vector<double>(e.n)};
        cfg.signed_teleport = true;
        double vmax = 0.0;
        for (std::size_t i = 0; i < e.n; ++i) {
          cfg.v[i] = explicit_teleport(pts[i], gamma_h);
          vmax = std::max(vmax, std::abs(cfg.v[i]));
        }
        const RankResult res = solve_pagerank(g, cfg);
        double err = 0.0, umax = 0.0;
        for (std::size_t i = 0; i < e.n; ++i) {
          err = std::max(err, std::abs(res.u[i] - explicit_solution(pts[i])));
          umax = std::max(umax, std::abs(res.u[i]));
        }
        row.trial_errors.push_back(err);
        row.max_abs_u = std::max(row.max_abs_u, umax);
        row.stability_bound = std::max(row.stability_bound, 2.0 * vmax);
        if (umax > 2.0 * vmax) row.stable = false;
        Rng rng(trial_seed, 0x11b5u);
        lip_sum += detail::lipschitz_statistic(g, res.u, row.h, opt.lipschitz_samples, rng);
      } catch (const NonConvergence& ex) {
        throw NonConvergence(where + ", trial " + std::to_string(t) + ": " + ex.what(), ex.residual());
      } catch (const ConfigError& ex) {
        throw ConfigError(where + ", trial " + std::to_string(t) + ": " + ex.what());
      } catch (const DegenerateGraphError& ex) {
        throw DegenerateGraphError(where + ", trial " + std::to_string(t) + ": " + ex.what());
      }
    }
    row.mean_linf_error =
        std::accumulate(row.trial_errors.begin(), row.trial_errors.end(), 0.0) / static_cast<double>(opt.trials);
    row.lipschitz_ratio_stat = lip_sum / static_cast<double>(opt.trials);
    rep.rows.push_back(std::move(row));
  }
  for (HRule rule : {HRule::log_sqrt, HRule::cube_root, HRule::quarter_root}) {
    std::vector<double> hs, errs;
    for (const auto& r : rep.rows) {
      if (r.rule != rule || r.alpha >= 1.0) continue;
      hs.push_back(r.h);
      errs.push_back(r.mean_linf_error);
    }
    if (hs.size() < 2) continue;
    if (std::all_of(hs.begin(), hs.end(), [&](double x) { return x == hs.front(); })) continue;
    if (std::any_of(errs.begin(), errs.end(), [](double x) { return !(x > 0.0); })) continue;
    rep.slopes.emplace_back(rule, fit_power_law(hs, errs));
  }
  return rep;
}

/// The schedule used for the paper's convergence figure.
inline std::vector<ScheduleEntry> preset_paper_fig1() {
  std::vector<ScheduleEntry> s;
  for (HRule r : {HRule::log_sqrt, HRule::cube_root, HRule::quarter_root})
    for (std::size_t n : {10000u, 20000u, 40000u, 80000u}) s.push_back({n, r, default_alpha_constant(r), {}});
  return s;
}

/// Desk-scale schedule: h = 2 n^-1/3, alpha = 20 h^2, n in {2500, 10000, 40000}.
inline std::vector<ScheduleEntry> preset_desk() {
  std::vector<ScheduleEntry> s;
  for (std::size_t n : {2500u, 10000u, 40000u}) s.push_back({n, HRule::cube_root, 20.0, {}});
  return s;
}

// ---------------------------------------------------------------------------
// Evolution comparison

struct EvolutionRow {
  std::size_t k = 0;
  double time = 0.0;
  double error = 0.0;
};

struct EvolutionReport {
  std::vector<EvolutionRow> rows;
  double dt = 0.0;
  std::size_t substeps = 0;
  /// Fitted exponent p of error ~ (alpha k)^p over k >= 1 (NaN if not fittable).
  double growth_exponent = std::numeric_limits<double>::quiet_NaN();
  /// OLS slope of error against alpha k, times the time span, over the mean error.
  double relative_trend = 0.0;
};

/// Runs the random-surfer evolution on `g` and the continuum evolution on the
/// grid of `coeffs` from the same initial function, and records
/// max over sample points of |u_n(x, k) - u(x, alpha k)| for k = 0..K. The grid
/// step is alpha / m with m the smallest integer giving a step no larger than
/// dt_grid and the stability bound.
inline EvolutionReport evolution_study(const DirectedGraph& g, const PageRankConfig& cfg, const PdeCoeffs& coeffs,
                                       const ScalarField& initial, std::size_t K, double dt_grid) {
  const PointCloud* pts = g.points();
  if (pts == nullptr) throw InvalidArgument("evolution_study: graph has no stored points");
  if (pts->dim() != coeffs.dim()) throw InvalidArgument("evolution_study: dimension mismatch");
  if (!(dt_grid > 0.0)) throw InvalidArgument("evolution_study: dt_grid must be positive");
  const double alpha = cfg.alpha;
  const double bound = stable_time_step(coeffs);
  const double target = std::min(dt_grid, bound);
  const auto m = static_cast<std::size_t>(std::ceil(alpha / target - 1e-12));
  EvolutionReport rep;
  rep.substeps = std::max<std::size_t>(m, 1);
  rep.dt = alpha / static_cast<double>(rep.substeps);

  const std::size_t n = g.size();
  std::vector<double> g0(n);
  for (std::size_t i = 0; i < n; ++i) g0[i] = initial((*pts)[i]);
  const GridField grid0 = GridField::sample(initial, coeffs.resolution());

  // Grid evolution, advanced one surfer step (m substeps) at a time.
  GridField u = grid0;
  std::vector<double> src(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) src[j] = coeffs.v[j] / coeffs.rho[j];
  auto advance = [&]() {
    for (std::size_t s = 0; s < rep.substeps; ++s) {
      const GridField Au = continuum_operator_2nd(coeffs, u);
      for (std::size_t j = 0; j < u.size(); ++j) u[j] += rep.dt * (src[j] - Au[j]);
    }
  };

  evolve_surfer(g, cfg, g0, K, [&](std::size_t k, std::span<const double> un) {
    if (k > 0) advance();
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(un[i] - u.interpolate((*pts)[i])));
    rep.rows.push_back({k, alpha * static_cast<double>(k), err});
  });

  std::vector<double> ts, es, ts1, es1;
  for (const auto& r : rep.rows) {
    ts.push_back(r.time);
    es.push_back(r.error);
    if (r.k >= 1 && r.error > 0.0) {
      ts1.push_back(r.time);
      es1.push_back(r.error);
    }
  }
  if (ts.size() >= 2) {
    const double mean = std::accumulate(es.begin(), es.end(), 0.0) / static_cast<double>(es.size());
    const double slope = fit_slope(ts, es);
    rep.relative_trend = mean > 0.0 ? slope * (ts.back() - ts.front()) / mean : 0.0;
  }
  if (ts1.size() >= 2) rep.growth_exponent = fit_power_law(ts1, es1).exponent;
  return rep;
}

// ---------------------------------------------------------------------------
// Alpha sweep

struct AlphaSweepRow {
  double alpha = 0.0;
  double linf_distance = 0.0;
  std::size_t iterations = 0;
};

struct AlphaSweepReport {
  std::vector<AlphaSweepRow> rows;
  /// p in distance ~ alpha^-p, with the fitted prefactor and log residual.
  double p = 0.0;
  PowerLawFit fit;
};

/// For each alpha, ||r / sum r - v / sum v||_inf with r the PageRank vector for v.
inline AlphaSweepReport alpha_sweep(const DirectedGraph& g, std::span<const double> alphas, std::span<const double> v) {
  if (alphas.empty()) throw InvalidArgument("alpha_sweep: no alpha values");
  if (v.size() != g.size()) throw InvalidArgument("alpha_sweep: teleport vector length mismatch");
  const double vs = std::accumulate(v.begin(), v.end(), 0.0);
  AlphaSweepReport rep;
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw InvalidArgument("alpha_sweep: alpha values must lie in (0, 1)");
    PageRankConfig cfg{a, std::vector<double>(v.begin(), v.end())};
    const RankResult res = solve_pagerank(g, cfg);
    const double rs = std::accumulate(res.r.begin(), res.r.end(), 0.0);
    double dist = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dist = std::max(dist, std::abs(res.r[i] / rs - v[i] / vs));
    rep.rows.push_back({a, dist, res.iterations});
  }
  if (rep.rows.size() >= 2) {
    std::vector<double> xs, ys;
    for (const auto& r : rep.rows) {
      xs.push_back(r.alpha);
      ys.push_back(r.linf_distance);
    }
    rep.fit = fit_power_law(xs, ys);
    rep.p = -rep.fit.exponent;
  }
  return rep;
}

/// count values spaced geometrically in [lo, hi].
inline std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi >= lo) || count == 0) throw InvalidArgument("geometric_grid: need 0 < lo <= hi and count >= 1");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = lo * std::pow(hi / lo, t);
  }
  return out;
}

}  // namespace cpr
