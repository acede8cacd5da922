#pragma once

// The PageRank operator L u(x) = (1/d(x)) sum_y w(y,x) u(y) - u(x), the
// stationary PageRank solver, localized PageRank, and the random-surfer
// evolution in normalized form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/graph.hpp"

namespace cpr {

struct PageRankConfig {
  double alpha = 0.15;
  /// Teleportation values, one per node (need not sum to 1).
  std::vector<double> v;
  /// l1 stopping tolerance on successive iterates; 0 selects 1e-12 * sum|v|.
  double tol = 0.0;
  /// Iteration cap; 0 selects ceil(log(tol / sum|v|) / log(1 - alpha)) + 64.
  std::size_t max_iter = 0;
  /// Accept teleport values of either sign. The iteration is linear in v, and the
  /// explicit-solution experiments use a v that changes sign.
  bool signed_teleport = false;

  static PageRankConfig uniform(std::size_t n, double alpha) {
    return PageRankConfig{alpha, std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }

  double teleport_mass() const { return std::accumulate(v.begin(), v.end(), 0.0); }

  double teleport_l1() const {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }

  double resolved_tol() const { return tol > 0.0 ? tol : 1e-12 * teleport_l1(); }

  std::size_t resolved_max_iter() const {
    if (max_iter > 0) return max_iter;
    if (alpha >= 1.0) return 64;
    const double steps = std::log(resolved_tol() / teleport_l1()) / std::log1p(-alpha);
    return static_cast<std::size_t>(std::ceil(std::max(steps, 0.0))) + 64;
  }

  void validate(std::size_t n) const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw InvalidArgument("PageRankConfig: alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
    if (v.size() != n) {
      throw InvalidArgument("PageRankConfig: teleport vector has " + std::to_string(v.size()) + " entries for " +
                            std::to_string(n) + " nodes");
    }
    bool positive = false;
    for (double x : v) {
      if (!std::isfinite(x)) throw InvalidArgument("PageRankConfig: teleport values must be finite");
      if (!signed_teleport && x < 0.0) throw InvalidArgument("PageRankConfig: teleport values must be >= 0");
      if (signed_teleport ? x != 0.0 : x > 0.0) positive = true;
    }
    if (!positive) {
      throw InvalidArgument(signed_teleport ? "PageRankConfig: teleport vector is identically zero"
                                            : "PageRankConfig: teleport vector needs a positive entry");
    }
    if (tol < 0.0) throw InvalidArgument("PageRankConfig: tol must be positive");
  }
};

struct RankResult {
  std::vector<double> r;
  /// u = normalization * r / d.
  std::vector<double> u;
  std::size_t iterations = 0;
  /// l1 residual of r - (1-alpha) P r - alpha v at the returned iterate.
  double residual = 0.0;
  /// l1 change between successive iterates, one entry per iteration.
  std::vector<double> change_history;
};

inline std::vector<double> normalized_rank(const DirectedGraph& g, std::span<const double> r) {
  std::vector<double> u(r.size());
  const auto& d = g.degrees();
  const double s = g.normalization();
  for (std::size_t i = 0; i < r.size(); ++i) u[i] = s * r[i] / d[i];
  return u;
}

/// L u(x) = (1/d(x)) sum_y w(y, x) u(y) - u(x).
inline std::vector<double> apply_L(const DirectedGraph& g, std::span<const double> u) {
  if (u.size() != g.size()) throw InvalidArgument("apply_L: length mismatch");
  const std::size_t n = g.size();
  std::vector<double> out(n);
  const auto& d = g.degrees();
#pragma omp parallel for schedule(static)
  for (std::int64_t xi = 0; xi < static_cast<std::int64_t>(n); ++xi) {
    const auto x = static_cast<std::size_t>(xi);
    const auto src = g.in_sources(x);
    const auto w = g.in_weights(x);
    double s = 0.0;
    for (std::size_t e = 0; e < src.size(); ++e) s += w[e] * u[src[e]];
    out[x] = s / d[x] - u[x];
  }
  return out;
}

namespace detail {

/// out(x) = base(x) + c * sum_y w(y,x) q(y).
inline void gather(const DirectedGraph& g, std::span<const double> q, double c, std::span<const double> base,
                   std::span<double> out) {
  const std::size_t n = g.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t xi = 0; xi < static_cast<std::int64_t>(n); ++xi) {
    const auto x = static_cast<std::size_t>(xi);
    const auto src = g.in_sources(x);
    const auto w = g.in_weights(x);
    double s = 0.0;
    for (std::size_t e = 0; e < src.size(); ++e) s += w[e] * q[src[e]];
    out[x] = base[x] + c * s;
  }
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

}  // namespace detail

/// Stationary PageRank by power iteration
///   r <- alpha v + (1 - alpha) sum_y w(y, x) r(y) / d(y),  r0 = v,
/// until the l1 change falls below tol.
inline RankResult solve_pagerank(const DirectedGraph& g, const PageRankConfig& cfg) {
  const std::size_t n = g.size();
  cfg.validate(n);
  const double alpha = cfg.alpha;
  const double tol = cfg.resolved_tol();
  const std::size_t max_iter = cfg.resolved_max_iter();
  const auto& d = g.degrees();

  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = alpha * cfg.v[i];
  std::vector<double> r(cfg.v);
  std::vector<double> next(n);
  std::vector<double> q(n);
  RankResult res;
  double change = 0.0;
  for (std::size_t it = 1;; ++it) {
    for (std::size_t i = 0; i < n; ++i) q[i] = r[i] / d[i];
    detail::gather(g, q, 1.0 - alpha, base, next);
    change = detail::l1_distance(next, r);
    r.swap(next);
    res.change_history.push_back(change);
    res.iterations = it;
    if (change < tol) break;
    if (it >= max_iter) {
      throw NonConvergence("solve_pagerank: no convergence after " + std::to_string(max_iter) + " iterations", change);
    }
  }

  // Residual of the linear system at the returned iterate.
  for (std::size_t i = 0; i < n; ++i) q[i] = r[i] / d[i];
  detail::gather(g, q, 1.0 - alpha, base, next);
  res.residual = detail::l1_distance(next, r);
  if (!(res.residual <= 10.0 * tol)) {
    throw NonConvergence("solve_pagerank: linear-system residual above 10*tol", res.residual);
  }
  res.u = normalized_rank(g, r);
  res.r = std::move(r);
  return res;
}

/// PageRank with teleportation uniform on `seeds` (mass 1).
inline RankResult localized_pagerank(const DirectedGraph& g, double alpha, std::span<const std::size_t> seeds,
                                     double tol = 0.0) {
  if (seeds.empty()) throw InvalidArgument("localized_pagerank: empty seed set");
  std::vector<char> mark(g.size(), 0);
  for (auto s : seeds) {
    if (s >= g.size()) throw InvalidArgument("localized_pagerank: seed index out of range");
    mark[s] = 1;
  }
  const auto count = static_cast<double>(std::count(mark.begin(), mark.end(), 1));
  PageRankConfig cfg{alpha, std::vector<double>(g.size(), 0.0), tol};
  for (std::size_t i = 0; i < g.size(); ++i)
    if (mark[i]) cfg.v[i] = 1.0 / count;
  return solve_pagerank(g, cfg);
}

/// Random-surfer evolution in normalized form,
///   u(k+1) = (1 - alpha)(u(k) + L u(k)) + alpha * scale * v / d,   u(0) = g,
/// calling `observe(k, u_k)` for k = 0..K.
template <class Observer>
void evolve_surfer(const DirectedGraph& g, const PageRankConfig& cfg, std::span<const double> initial, std::size_t K,
                   Observer&& observe) {
  const std::size_t n = g.size();
  cfg.validate(n);
  if (initial.size() != n) throw InvalidArgument("evolve_surfer: initial vector length mismatch");
  const double alpha = cfg.alpha;
  const auto& d = g.degrees();
  const double scale = g.normalization();
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = alpha * scale * cfg.v[i] / d[i];
  std::vector<double> u(initial.begin(), initial.end());
  std::vector<double> next(n);
  const std::vector<double> zeros(n, 0.0);
  observe(std::size_t{0}, std::span<const double>(u));
  for (std::size_t k = 1; k <= K; ++k) {
    // u + L u = (1/d(x)) sum_y w(y,x) u(y); the 1/d(x) is folded into the gather below.
    detail::gather(g, u, 1.0, zeros, next);
    for (std::size_t i = 0; i < n; ++i) next[i] = (1.0 - alpha) * next[i] / d[i] + base[i];
    u.swap(next);
    observe(k, std::span<const double>(u));
  }
}

inline std::vector<std::vector<double>> evolve_surfer(const DirectedGraph& g, const PageRankConfig& cfg,
                                                      std::span<const double> initial, std::size_t K) {
  std::vector<std::vector<double>> out;
  out.reserve(K + 1);
  evolve_surfer(g, cfg, initial, K,
                [&](std::size_t, std::span<const double> u) { out.emplace_back(u.begin(), u.end()); });
  return out;
}

}  // namespace cpr
