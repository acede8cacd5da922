#include <gtest/gtest.h>

#include <cmath>

#include "cpr/geometry.hpp"
#include "cpr/graph.hpp"
#include "cpr/pagerank.hpp"
#include "cpr/random.hpp"

using namespace cpr;

namespace {

DirectedGraph two_node() { return DirectedGraph::from_edges(2, {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}}); }

DirectedGraph random_rdgg(std::size_t n, double h, double eps, std::uint64_t seed) {
  const auto pts = sample_uniform(2, n, seed);
  return build_rdgg(pts, KernelSpec::indicator(2), DriftSpec(VectorField::rotational()), h, eps, seed);
}

// Dense Gaussian elimination with partial pivoting on (I - (1-a) P^T) r = a v.
std::vector<double> dense_pagerank(const DirectedGraph& g, double alpha, const std::vector<double>& v) {
  const std::size_t n = g.size();
  std::vector<std::vector<double>> A(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    A[x][x] = 1.0;
    A[x][n] = alpha * v[x];
  }
  for (std::size_t y = 0; y < n; ++y) {
    const auto t = g.out_targets(y);
    const auto w = g.out_weights(y);
    for (std::size_t e = 0; e < t.size(); ++e) A[t[e]][y] -= (1.0 - alpha) * w[e] / g.degrees()[y];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[p][c])) p = r;
    std::swap(A[c], A[p]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= n; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> r(n);
  for (std::size_t x = 0; x < n; ++x) r[x] = A[x][n] / A[x][x];
  return r;
}

}  // namespace

TEST(ApplyL, TwoNodeHandValues) {
  const std::vector<double> u{0.0, 1.0};
  const auto Lu = apply_L(two_node(), u);
  EXPECT_DOUBLE_EQ(Lu[0], 0.5);
  EXPECT_DOUBLE_EQ(Lu[1], -0.5);
}

TEST(ApplyL, AnnihilatesConstantsOnSymmetricGraphs) {
  const auto pts = sample_uniform(2, 2000, 3);
  const auto g = build_rdgg(pts, KernelSpec::bump(2), DriftSpec::none(2), 0.06, 0.0);
  const auto Lu = apply_L(g, std::vector<double>(g.size(), 3.7));
  for (double x : Lu) EXPECT_NEAR(x, 0.0, 1e-13);
}

TEST(ApplyL, Monotone) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_rdgg(150, 0.15, rng.uniform(0.0, 0.05), 1000 + t);
    const std::size_t n = g.size();
    std::vector<double> u(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = rng.uniform(-1, 1);
      w[i] = u[i] + rng.uniform(0, 1);
    }
    const std::size_t x0 = rng.below(n);
    w[x0] = u[x0];
    EXPECT_LE(apply_L(g, u)[x0], apply_L(g, w)[x0] + 1e-15);
  }
}

TEST(SolvePagerank, AlphaOneReturnsTeleport) {
  const auto g = random_rdgg(400, 0.1, 0.02, 5);
  Rng rng(5);
  PageRankConfig cfg{1.0, std::vector<double>(g.size())};
  for (double& x : cfg.v) x = rng.uniform();
  const auto res = solve_pagerank(g, cfg);
  EXPECT_EQ(res.iterations, 1u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(res.r[i], cfg.v[i]);
    EXPECT_NEAR(res.u[i], 400 * 0.01 / g.degrees()[i] * cfg.v[i], 1e-14 * res.u[i]);
  }
}

TEST(SolvePagerank, TwoNodeMatchesDirectSolve) {
  PageRankConfig cfg{0.5, {1.0, 0.0}};
  const auto res = solve_pagerank(two_node(), cfg);
  // (I - 0.5 P^T) r = 0.5 v with P^T = [[.5, .5], [.5, .5]], by Cramer's rule
  const double a11 = 0.75, a12 = -0.25, a21 = -0.25, a22 = 0.75, b1 = 0.5, b2 = 0.0;
  const double det = a11 * a22 - a12 * a21;
  EXPECT_NEAR(res.r[0], (b1 * a22 - a12 * b2) / det, 1e-12);
  EXPECT_NEAR(res.r[1], (a11 * b2 - a21 * b1) / det, 1e-12);
}

TEST(SolvePagerank, MatchesDenseSolveOnDirectedGraph) {
  const auto g = random_rdgg(300, 0.12, 0.04, 9);
  Rng rng(9);
  PageRankConfig cfg{0.2, std::vector<double>(g.size())};
  for (double& x : cfg.v) x = rng.uniform();
  const auto res = solve_pagerank(g, cfg);
  const auto oracle = dense_pagerank(g, 0.2, cfg.v);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(res.r[i], oracle[i], 1e-10);
}

TEST(SolvePagerank, ConservesMassAndIsPositive) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = random_rdgg(1000, 0.08, 0.01, s);
    const auto cfg = PageRankConfig::uniform(g.size(), 0.1);
    const auto res = solve_pagerank(g, cfg);
    double sr = 0.0, su = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_GT(res.r[i], 0.0);
      sr += res.r[i];
      su += g.degrees()[i] / g.normalization() * res.u[i];
    }
    EXPECT_NEAR(sr, 1.0, 1e-10);
    EXPECT_NEAR(su, 1.0, 1e-10);
    EXPECT_LE(res.residual, 10.0 * cfg.resolved_tol());
  }
}

TEST(SolvePagerank, RejectsBadConfigs) {
  const auto g = two_node();
  EXPECT_THROW(solve_pagerank(g, {0.0, {1.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(solve_pagerank(g, {1.2, {1.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(solve_pagerank(g, {0.5, {1.0}}), InvalidArgument);
  EXPECT_THROW(solve_pagerank(g, {0.5, {-1.0, 2.0}}), InvalidArgument);
  EXPECT_THROW(solve_pagerank(g, {0.5, {0.0, 0.0}}), InvalidArgument);
  PageRankConfig signed_cfg{0.5, {-1.0, 2.0}};
  signed_cfg.signed_teleport = true;
  const auto res = solve_pagerank(g, signed_cfg);
  EXPECT_NEAR(res.r[0] + res.r[1], 1.0, 1e-12);
}

TEST(SolvePagerank, ReportsNonConvergence) {
  const auto g = random_rdgg(300, 0.1, 0.0, 2);
  PageRankConfig cfg = PageRankConfig::uniform(g.size(), 0.01);
  cfg.v[0] += 1.0;
  cfg.max_iter = 3;
  try {
    solve_pagerank(g, cfg);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(LocalizedPagerank, AllSeedsEqualsUniform) {
  const auto g = random_rdgg(500, 0.1, 0.02, 4);
  std::vector<std::size_t> seeds(g.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  const auto a = localized_pagerank(g, 0.15, seeds);
  const auto b = solve_pagerank(g, PageRankConfig::uniform(g.size(), 0.15));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(a.r[i], b.r[i], 1e-15);
}

TEST(LocalizedPagerank, AlphaOneIsIndicator) {
  const auto g = random_rdgg(50, 0.2, 0.0, 4);
  const std::size_t seed[] = {3};
  const auto res = localized_pagerank(g, 1.0, seed);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(res.r[i], i == 3 ? 1.0 : 0.0);
  EXPECT_THROW(localized_pagerank(g, 0.5, std::span<const std::size_t>{}), InvalidArgument);
  const std::size_t bad[] = {50};
  EXPECT_THROW(localized_pagerank(g, 0.5, bad), InvalidArgument);
}

TEST(LocalizedPagerank, SeparatedClusters) {
  // two 20-node rings with strong internal edges and one weak bridge each way
  std::vector<Edge> edges;
  for (std::uint32_t c = 0; c < 2; ++c)
    for (std::uint32_t i = 0; i < 20; ++i)
      for (std::uint32_t j = 1; j <= 3; ++j) {
        edges.push_back({20 * c + i, 20 * c + (i + j) % 20, 1.0});
        edges.push_back({20 * c + (i + j) % 20, 20 * c + i, 1.0});
      }
  edges.push_back({0, 20, 0.05});
  edges.push_back({25, 5, 0.05});
  const auto g = DirectedGraph::from_edges(40, edges);
  std::vector<std::size_t> A(20);
  for (std::size_t i = 0; i < 20; ++i) A[i] = i;
  const auto res = localized_pagerank(g, 0.1, A);
  std::vector<double> v(40, 0.0);
  for (auto i : A) v[i] = 1.0 / 20;
  const auto oracle = dense_pagerank(g, 0.1, v);
  double minA = 1.0, maxB = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_NEAR(res.r[i], oracle[i], 1e-12);
    if (i < 20) minA = std::min(minA, oracle[i]);
    else maxB = std::max(maxB, oracle[i]);
  }
  EXPECT_GT(minA, maxB);
}

TEST(EvolveSurfer, StationaryStartStaysPut) {
  const auto g = random_rdgg(800, 0.1, 0.03, 6);
  const auto cfg = PageRankConfig::uniform(g.size(), 0.2);
  const auto u_star = solve_pagerank(g, cfg).u;
  const auto seq = evolve_surfer(g, cfg, u_star, 30);
  ASSERT_EQ(seq.size(), 31u);
  for (const auto& u : seq)
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], u_star[i], 1e-10);
}

TEST(EvolveSurfer, ProbabilityMassIsPreserved) {
  const auto g = random_rdgg(600, 0.1, 0.03, 7);
  const auto cfg = PageRankConfig::uniform(g.size(), 0.3);
  Rng rng(7);
  std::vector<double> r0(g.size());
  double s = 0.0;
  for (double& x : r0) s += (x = rng.uniform());
  std::vector<double> u0(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) u0[i] = g.normalization() * r0[i] / s / g.degrees()[i];
  evolve_surfer(g, cfg, u0, 25, [&](std::size_t, std::span<const double> u) {
    double mass = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) mass += u[i] * g.degrees()[i] / g.normalization();
    EXPECT_NEAR(mass, 1.0, 1e-12);
  });
}

TEST(EvolveSurfer, ContractsAtRateOneMinusAlpha) {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    // the sup-norm contraction needs in-weights summing to the degree, i.e. symmetric weights
    const auto g = random_rdgg(200, 0.15, 0.0, 300 + t);
    const double alpha = rng.uniform(0.05, 0.5);
    const auto cfg = PageRankConfig::uniform(g.size(), alpha);
    const auto u_star = solve_pagerank(g, cfg).u;
    std::vector<double> g0(g.size());
    for (double& x : g0) x = rng.uniform(0, 3);
    const std::size_t K = 15;
    const auto seq = evolve_surfer(g, cfg, g0, K);
    double e0 = 0.0, eK = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      e0 = std::max(e0, std::abs(g0[i] - u_star[i]));
      eK = std::max(eK, std::abs(seq[K][i] - u_star[i]));
    }
    EXPECT_LE(eK, e0 * std::pow(1.0 - alpha, K) * (1.0 + 1e-6));
  }
}

TEST(EvolveSurfer, L1ContractionOnDirectedGraphs) {
  const auto g = random_rdgg(200, 0.15, 0.05, 44);
  const double alpha = 0.25;
  const auto cfg = PageRankConfig::uniform(g.size(), alpha);
  const auto r_star = solve_pagerank(g, cfg).r;
  std::vector<double> u0(g.size(), 1.0);
  const auto seq = evolve_surfer(g, cfg, u0, 10);
  auto l1 = [&](const std::vector<double>& u) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] * g.degrees()[i] / g.normalization() - r_star[i]);
    return s;
  };
  EXPECT_LE(l1(seq[10]), l1(seq[0]) * std::pow(1.0 - alpha, 10) * (1.0 + 1e-9));
}
