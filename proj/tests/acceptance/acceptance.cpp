// Acceptance checks. One PASS/FAIL line per criterion.
//
//   cpr_acceptance [--only 1,5,...] [--mnist-images FILE] [--mnist-n N] [--report FILE]
//
// Exit status is nonzero when a criterion fails, except for criteria listed in
// kKnownFailures, which are still reported as FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cpr/continuum.hpp"
#include "cpr/depth.hpp"
#include "cpr/experiments.hpp"
#include "cpr/geometry.hpp"
#include "cpr/graph.hpp"
#include "cpr/io.hpp"
#include "cpr/pagerank.hpp"
#include "cpr/random.hpp"

using namespace cpr;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double tau = 2.0 * std::numbers::pi;

// Criteria that do not hold at the pinned configurations; see README.md.
const std::set<int> kKnownFailures = {7, 10, 11};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::set<int> only;
  std::string mnist_images;
  std::size_t mnist_n = 10000;
  std::string report;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... T>
std::string cat(const T&... parts) {
  std::ostringstream os;
  os.precision(4);
  (os << ... << parts);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScalarField field(int dim, std::string name, std::function<double(CSpan)> f) {
  return ScalarField(dim, std::move(name), std::move(f));
}

// 1 + a cos(2 pi x1) cos(2 pi x2) + b sin(2 pi x2), a + b < 0.6.
ScalarField random_density(Rng& rng) {
  const double a = rng.uniform(0.0, 0.4), b = rng.uniform(0.0, 0.2);
  return field(2, "rho", [a, b](CSpan x) { return 1.0 + a * std::cos(tau * x[0]) * std::cos(tau * x[1]) + b * std::sin(tau * x[1]); });
}

VectorField random_drift(Rng& rng) {
  return VectorField::trig({TrigPolynomial::constant(2, rng.uniform(-1, 1)) +
                                TrigPolynomial::mode(2, 1, 1, rng.uniform(-1, 1), rng.uniform(-1, 1)),
                            TrigPolynomial::constant(2, rng.uniform(-1, 1)) +
                                TrigPolynomial::mode(2, 0, 1, rng.uniform(-1, 1), rng.uniform(-1, 1))},
                           "random");
}

// ---------------------------------------------------------------------------

Outcome c1_convergence() {
  const auto sched = preset_desk();
  const auto rep = convergence_study(sched, {10, 1, 20000});
  const auto slope = rep.slope_for(HRule::cube_root);
  if (!slope) return {false, "no slope fitted"};
  std::string errs;
  for (const auto& r : rep.rows) errs += cat(" n=", r.n, ":", r.mean_linf_error);
  return {slope->exponent >= 0.7 && slope->exponent <= 1.3, cat("slope=", slope->exponent, " (need [0.7, 1.3]);", errs)};
}

Outcome c2_pde_accuracy() {
  const double gh = 0.05;
  const auto u = field(2, "u", [](CSpan x) { return 2.0 - (std::cos(tau * x[0]) + std::cos(tau * x[1])); });
  const auto v = field(2, "v", [gh](CSpan x) {
    return 2.0 - (1.0 + 0.5 * gh * pi * pi) * (std::cos(tau * x[0]) + std::cos(tau * x[1]));
  });
  std::vector<double> err;
  for (std::size_t N : {64u, 128u, 256u}) {
    const auto c = PdeCoeffs::from_fields(N, ScalarField::constant(2, 1.0), VectorField::zero(2), v, 0.0, gh, 0.25);
    const auto sol = solve_pde_2nd(c, {1e-10});
    err.push_back(max_abs_difference(sol.u, GridField::sample(u, N)));
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  const bool ok = r1 >= 3.0 && r1 <= 5.0 && r2 >= 3.0 && r2 <= 5.0 && err[2] < 1e-3;
  return {ok, cat("errors ", err[0], ", ", err[1], ", ", err[2], "; ratios ", r1, ", ", r2)};
}

Outcome c3_alpha_one() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3);
  std::vector<DirectedGraph> graphs;
  graphs.push_back(build_rdgg(sample_uniform(2, 1500, 1), KernelSpec::indicator(2),
                              DriftSpec(VectorField::rotational()), 0.06, 0.01, 1));
  graphs.push_back(build_rdgg(sample_uniform(3, 800, 2), KernelSpec::bump(3), DriftSpec::none(3), 0.15, 0.0, 2));
  VectorSet vs{4, std::vector<double>(4 * 600)};
  for (double& x : vs.data) x = rng.normal();
  graphs.push_back(build_knn_graph(vs, 7));
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < 50; ++i) {
    edges.push_back({i, i, 0.3});
    edges.push_back({i, (i * 7 + 3) % 50, rng.uniform(0.1, 2.0)});
  }
  graphs.push_back(DirectedGraph::from_edges(50, edges));
  double worst = 0.0;
  bool exact_r = true;
  for (const auto& g : graphs) {
    PageRankConfig cfg{1.0, std::vector<double>(g.size())};
    for (double& x : cfg.v) x = rng.uniform(0.01, 1.0);
    const auto res = solve_pagerank(g, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) {
      exact_r = exact_r && res.r[i] == cfg.v[i];
      const double want = g.normalization() * cfg.v[i] / g.degrees()[i];
      worst = std::max(worst, std::abs(res.u[i] - want) / std::abs(want));
    }
  }
  const double secs = seconds_since(t0);
  return {exact_r && worst <= 1e-14 && secs < 1.0,
          cat("r == v: ", exact_r ? "yes" : "no", "; max relative u error ", worst, "; ", secs, " s")};
}

Outcome c4_conservation() {
  Rng rng(4);
  double worst_graph = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + static_cast<int>(rng.below(3));
    const std::size_t n = 200 + rng.below(600);
    const double h = d == 1 ? 0.02 : (d == 2 ? 0.1 : 0.2);
    const DriftSpec drift = d == 2 ? DriftSpec(VectorField::rotational()) : DriftSpec::none(d);
    const auto g = build_rdgg(sample_uniform(d, n, 400 + t), KernelSpec::indicator(d), drift, h,
                              rng.uniform(0.0, 0.05), 400 + t);
    PageRankConfig cfg{rng.uniform(0.02, 0.9), std::vector<double>(n)};
    for (double& x : cfg.v) x = rng.uniform(0.0, 3.0);
    const auto res = solve_pagerank(g, cfg);
    const double sr = std::accumulate(res.r.begin(), res.r.end(), 0.0);
    const double sv = std::accumulate(cfg.v.begin(), cfg.v.end(), 0.0);
    worst_graph = std::max(worst_graph, std::abs(sr - sv) / sv);
  }
  double worst_pde = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto rho = random_density(rng);
    const auto b = random_drift(rng);
    const double c1 = rng.uniform(-1, 1);
    const auto v = field(2, "v", [c1](CSpan x) { return 1.5 + c1 * std::sin(tau * (x[0] + 2.0 * x[1])); });
    auto c = PdeCoeffs::from_fields(32, rho, b, v, 0.0, rng.uniform(0.01, 0.3), 0.25);
    // keep eta * gamma_eps < 1 and the centered stencil diagonally dominant
    double bmax = 0.0;
    for (const auto& comp : c.b)
      for (double x : comp.values()) bmax = std::max(bmax, std::abs(x));
    c.gamma_eps = rng.uniform(0.0, 1.0) * std::min({0.8 / std::max(c.eta, 1e-12), 1.0,
                                                    c.sigma_phi * c.gamma_h * 32.0 / std::max(bmax, 1e-12)});
    const auto sol = solve_pde_2nd(c, {1e-12});
    double lhs = 0.0, rhs = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < sol.u.size(); ++j) {
      lhs += c.rho[j] * c.rho[j] * sol.u[j];
      rhs += c.rho[j] * c.v[j];
      scale += std::abs(c.rho[j] * c.v[j]);
    }
    worst_pde = std::max(worst_pde, std::abs(lhs - rhs) / scale);
  }
  return {worst_graph <= 1e-10 && worst_pde <= 1e-8,
          cat("graphs: max relative |sum r - sum v| ", worst_graph, "; grid: max relative gap ", worst_pde)};
}

Outcome c5_stability() {
  Rng rng(5);
  int violations = 0;
  double worst = 0.0;
  const std::vector<DensitySpec> densities{DensitySpec::uniform(2), DensitySpec::cosine_bump(2, 0.3),
                                           DensitySpec::cosine_bump(2, 0.5, 1)};
  for (int t = 0; t < 50; ++t) {
    const auto& dens = densities[rng.below(densities.size())];
    const std::size_t n = 3000 + rng.below(2000);
    const double h = rng.uniform(0.06, 0.1);
    const double alpha = rng.uniform(0.05, 0.6);
    VectorField b = VectorField::zero(2);
    switch (rng.below(4)) {
      case 0: break;
      case 1: b = VectorField::constant({rng.uniform(-1, 1), rng.uniform(-1, 1)}); break;
      case 2: b = VectorField::rotational(); break;
      default: b = VectorField::gradient_of(TrigPolynomial::mode(2, 0, 1, rng.uniform(0.05, 0.15))); break;
    }
    const double c1 = rng.uniform(-0.8, 0.8);
    const auto v = field(2, "v", [c1](CSpan x) { return 1.0 + c1 * std::cos(tau * x[1]); });
    const double eta = PdeCoeffs::from_fields(64, dens.rho(), b, v, 0.0, 0.0, 0.0).eta;
    // stay inside the lemma's regime: eps small, gamma_eps <= 1 and eta * gamma_eps <= 1/2
    double eps = rng.uniform(0.0, 0.03);
    double ge = (1.0 - alpha) * eps / alpha;
    const double cap = std::min(1.0, 0.5 / std::max(eta, 1e-12));
    if (ge > cap) {
      eps *= cap / ge;
      ge = cap;
    }
    const auto pts = sample_density(dens, n, 500 + t);
    const auto g = build_rdgg(pts, KernelSpec::indicator(2), DriftSpec(b), h, eps, 500 + t);
    PageRankConfig cfg{alpha, std::vector<double>(n)};
    double vr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cfg.v[i] = v(pts[i]);
      vr = std::max(vr, std::abs(cfg.v[i] / dens(pts[i])));
    }
    const auto res = solve_pagerank(g, cfg);
    double umax = 0.0;
    for (double x : res.u) umax = std::max(umax, std::abs(x));
    const double bound = 2.0 / (1.0 - eta * ge) * vr;
    worst = std::max(worst, umax / bound);
    if (umax > bound) ++violations;
  }
  return {violations == 0, cat(violations, " violations in 50 trials; largest max|u| / bound ", worst)};
}

Outcome c6_monotonicity() {
  Rng rng(6);
  std::size_t violations = 0, triples = 0;
  for (int gi = 0; gi < 100; ++gi) {
    const int d = 1 + static_cast<int>(rng.below(2));
    const std::size_t n = 100 + rng.below(200);
    const DriftSpec drift = d == 2 ? DriftSpec(VectorField::rotational()) : DriftSpec(VectorField::constant({0.7}));
    const auto g = build_rdgg(sample_uniform(d, n, 600 + gi), KernelSpec::bump(d), drift, d == 1 ? 0.05 : 0.15,
                              rng.uniform(0.0, 0.05), 600 + gi);
    for (int t = 0; t < 10; ++t, ++triples) {
      std::vector<double> u(n), w(n);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = rng.uniform(-2, 2);
        w[i] = u[i] + (rng.below(3) == 0 ? 0.0 : rng.uniform(0, 1));
      }
      const std::size_t x0 = rng.below(n);
      w[x0] = u[x0];
      if (apply_L(g, u)[x0] > apply_L(g, w)[x0]) ++violations;
    }
  }
  return {violations == 0 && triples == 1000, cat(violations, " violations in ", triples, " triples")};
}

Outcome c7_consistency() {
  const auto phi = ScalarField::trig(TrigPolynomial::mode(2, 0, 1, 1.0), "cos1");
  const auto one = ScalarField::constant(2, 1.0);
  const DriftSpec drift(VectorField::constant({1.0, 0.0}));
  auto run = [&](std::size_t n, double h, std::uint64_t seed) {
    const auto pts = sample_uniform(2, n, seed);
    const auto g = build_rdgg(pts, KernelSpec::indicator(2), drift, h, h * h, seed);
    return consistency_check(g, one, drift, 0.25, std::span(&phi, 1))[0].mean_normalized;
  };
  int better = 0;
  std::string detail;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const std::uint64_t seed = derive_seed(77, rep);
    const double coarse = run(10000, 0.08, seed);
    const double fine = run(100000, 0.05, seed);
    if (fine < coarse) ++better;
    detail += cat(" ", coarse, "->", fine);
  }
  return {better == 5, cat(better, "/5 repetitions improve; mean normalized discrepancy", detail)};
}

Outcome c8_evolution() {
  const std::size_t n = 20000;
  const double h = 0.06, alpha = 0.1;
  const auto pts = sample_uniform(2, n, 8);
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), DriftSpec::none(2), h, 0.0, 8);
  const double gh = PdeCoeffs::gammas(alpha, 0.0, h).second;
  PageRankConfig cfg{alpha, std::vector<double>(n)};
  cfg.signed_teleport = true;
  for (std::size_t i = 0; i < n; ++i) cfg.v[i] = explicit_teleport(pts[i], gh);
  const auto v = field(2, "v", [gh](CSpan x) { return explicit_teleport(x, gh); });
  const auto coeffs = PdeCoeffs::from_fields(32, ScalarField::constant(2, 1.0), VectorField::zero(2), v, 0.0, gh, 0.25);
  const auto u_star = field(2, "u", [](CSpan x) { return explicit_solution(x); });
  const auto stat = evolution_study(g, cfg, coeffs, u_star, 1000, 0.01);
  const auto generic = field(2, "g", [](CSpan x) { return 1.0 + std::sin(tau * x[0]) * std::cos(tau * x[1]); });
  const auto gen = evolution_study(g, cfg, coeffs, generic, 100, 0.01);
  const bool ok = std::abs(stat.relative_trend) <= 0.1 && gen.growth_exponent < 1.2;
  return {ok, cat("stationary start: relative trend ", stat.relative_trend, " over alpha k = ", alpha * 1000,
                  "; generic start: growth exponent ", gen.growth_exponent)};
}

Outcome c9_contraction() {
  Rng rng(9);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2000 + rng.below(2000);
    const auto pts = sample_uniform(1, n, 900 + t);
    const auto g = build_rdgg(pts, KernelSpec::indicator(1), DriftSpec::none(1), 0.02, 0.0, 900 + t);
    // larger alpha converges before the slowest mode dominates the change
    const double alpha = rng.uniform(0.05, 0.3);
    PageRankConfig cfg{alpha, std::vector<double>(n)};
    const double phase = rng.uniform(0, 1);
    for (std::size_t i = 0; i < n; ++i) cfg.v[i] = 1.0 + 0.8 * std::cos(tau * (pts[i][0] + phase));
    cfg.tol = 1e-14;
    cfg.max_iter = 100000;
    const auto res = solve_pagerank(g, cfg);
    const auto& ch = res.change_history;
    // geometric mean of the last ten ratios above the round-off floor
    std::size_t last = 0;
    while (last + 1 < ch.size() && ch[last + 1] > 1e-11 * ch[0]) ++last;
    if (last < 10) return {false, cat("instance ", t, ": only ", last, " usable iterations")};
    const double factor = std::pow(ch[last] / ch[last - 10], 0.1);
    worst = std::max(worst, std::abs(factor / (1.0 - alpha) - 1.0));
  }
  return {worst <= 0.01, cat("largest relative deviation from 1 - alpha: ", worst)};
}

Outcome c10_alpha_sweep(const Options& opt) {
  Rng rng(10);
  const std::size_t n = 5000;
  VectorSet vs{2, std::vector<double>(2 * n)};
  for (double& x : vs.data) x = rng.normal();
  const auto alphas = geometric_grid(0.01, 0.5, 12);
  const auto rep = alpha_sweep(build_knn_graph(vs, 10), alphas, std::vector<double>(n, 1.0 / n));
  bool ok = rep.p >= 0.8 && rep.p <= 1.4;
  std::string detail = cat("synthetic p=", rep.p, " (need [0.8, 1.4])");
  if (!opt.mnist_images.empty()) {
    const auto t = read_idx(opt.mnist_images);
    auto img = t.as_vectors();
    const std::size_t m = std::min(opt.mnist_n, img.size());
    img.data.resize(m * img.dim);
    const auto mr = alpha_sweep(build_knn_graph(img, 10), alphas, std::vector<double>(m, 1.0 / m));
    ok = ok && mr.p >= 1.0 && mr.p <= 1.45;
    detail += cat("; MNIST (", m, " images) p=", mr.p, " (need [1.0, 1.45])");
  } else {
    detail += "; MNIST not supplied";
  }
  return {ok, detail};
}

Outcome c11_depth() {
  const auto t0 = std::chrono::steady_clock::now();
  int passes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1100 + seed);
    const std::size_t n = 2000;
    VectorSet vs{2, {}};
    std::vector<long> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const long lab = static_cast<long>(i % 2);
      vs.data.push_back(rng.normal() + 5.0 * lab);
      vs.data.push_back(rng.normal());
      labels.push_back(lab);
    }
    const auto res = depth_ranking(vs, labels, 10, 0.05, 10);
    bool ok = res.classes.size() == 2;
    for (const auto& cd : res.classes) {
      double cx = 0.0, cy = 0.0;
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == cd.label) {
          members.push_back(i);
          cx += vs[i][0];
          cy += vs[i][1];
        }
      cx /= static_cast<double>(members.size());
      cy /= static_cast<double>(members.size());
      auto dist = [&](std::size_t i) { return std::hypot(vs[i][0] - cx, vs[i][1] - cy); };
      double top = 0.0, sample = 0.0;
      for (auto i : cd.top) top += dist(i) / static_cast<double>(cd.top.size());
      for (int k = 0; k < 10; ++k) sample += dist(members[rng.below(members.size())]) / 10.0;
      ok = ok && cd.top.size() == 10 && top < sample;
    }
    passes += ok;
  }
  const double secs = seconds_since(t0);
  return {passes >= 18 && secs <= 60.0, cat(passes, "/20 seeds; ", secs, " s")};
}

Outcome c12_oracles() {
  // cell list against all pairs
  bool graphs_ok = true;
  std::size_t checked = 0;
  struct Case {
    int dim;
    std::size_t n;
    double h, eps;
    bool drift;
  };
  for (const Case cs : {Case{1, 500, 0.03, 0.01, true}, Case{2, 500, 0.1, 0.02, true}, Case{2, 400, 0.2, 0.0, false},
                        Case{3, 300, 0.15, 0.03, true}}) {
    const auto pts = sample_uniform(cs.dim, cs.n, 1200 + cs.n);
    Vec c(static_cast<std::size_t>(cs.dim), 0.0);
    c[0] = 0.6;
    const DriftSpec drift = !cs.drift ? DriftSpec::none(cs.dim)
                            : cs.dim == 2 ? DriftSpec(VectorField::rotational())
                                          : DriftSpec(VectorField::constant(c));
    const auto k = KernelSpec::bump(cs.dim);
    const auto g = build_rdgg(pts, k, drift, cs.h, cs.eps, 12);
    std::size_t edges = 0;
    for (std::size_t i = 0; i < cs.n; ++i)
      for (std::size_t j = 0; j < cs.n; ++j) {
        const double w = directed_weight(k, drift, pts[i], pts[j], cs.h, cs.eps);
        if (w > 0.0) ++edges;
        graphs_ok = graphs_ok && g.weight(i, j) == w;
        ++checked;
      }
    graphs_ok = graphs_ok && g.edge_count() == edges;
  }
  // first-order solver against the Fourier closed form of u + ge beta u' = cos(2 pi x)
  const double beta = 0.7, ge = 0.2;
  const auto v = field(1, "v", [](CSpan x) { return std::cos(tau * x[0]); });
  const auto sol = solve_pde_1st(
      PdeCoeffs::from_fields(512, ScalarField::constant(1, 1.0), VectorField::constant({beta}), v, ge, 0.0, 0.0), 1e-4,
      {1e-12});
  const double kk = tau * ge * beta;
  double fourier = 0.0;
  for (std::size_t j = 0; j < sol.u.size(); ++j) {
    const double x = sol.u.node(j)[0];
    fourier = std::max(fourier, std::abs(sol.u[j] - (std::cos(tau * x) + kk * std::sin(tau * x)) / (1.0 + kk * kk)));
  }
  // characteristics: circular orbits of the rotational field, straight lines for a constant one
  const auto rot = PdeCoeffs::from_fields(16, ScalarField::constant(2, 1.0), VectorField::rotational(),
                                          ScalarField::constant(2, 1.0), 0.1, 0.1, 0.25);
  double orbit = 0.0;
  for (double r0 : {0.1, 0.2}) {
    const double x0[] = {0.5 + r0, 0.5}, p0[] = {0.0, 0.0};
    const auto traj = integrate_characteristics(rot, x0, 1.0, p0, tau, 1e-3);
    for (const auto& s : traj) orbit = std::max(orbit, std::abs(std::hypot(s.x[0] - 0.5, s.x[1] - 0.5) - r0));
    orbit = std::max(orbit, std::hypot(traj.back().x[0] - x0[0], traj.back().x[1] - x0[1]));
  }
  const auto lin = PdeCoeffs::from_fields(16, ScalarField::constant(2, 1.0), VectorField::constant({0.3, -0.8}),
                                          ScalarField::constant(2, 1.0), 0.1, 0.1, 0.25);
  const double x0[] = {0.9, 0.1}, p0[] = {0.5, 2.0};
  for (const auto& s : integrate_characteristics(lin, x0, 1.0, p0, 2.0, 0.05)) {
    auto circ = [](double a) { return std::min(a, 1.0 - a); };
    orbit = std::max(orbit, circ(std::abs(s.x[0] - wrap_coord(0.9 + 0.3 * s.s))));
    orbit = std::max(orbit, circ(std::abs(s.x[1] - wrap_coord(0.1 - 0.8 * s.s))));
    orbit = std::max(orbit, std::abs(s.z - (1.0 + s.s * (0.3 * 0.5 - 0.8 * 2.0))));
  }
  const bool ok = graphs_ok && fourier <= 1e-2 && orbit <= 1e-6;
  return {ok, cat("graphs ", graphs_ok ? "identical" : "DIFFER", " (", checked, " pairs); Fourier error ", fourier,
                  "; orbit error ", orbit)};
}

Options parse(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "missing value for %s\n", a.c_str());
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--only") {
      std::stringstream ss(next());
      std::string cell;
      while (std::getline(ss, cell, ',')) o.only.insert(std::stoi(cell));
    } else if (a == "--mnist-images") {
      o.mnist_images = next();
    } else if (a == "--report") {
      o.report = next();
    } else if (a == "--mnist-n") {
      o.mnist_n = std::stoul(next());
    } else {
      std::fprintf(stderr, "unknown argument %s\n", a.c_str());
      std::exit(2);
    }
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const Options opt = parse(argc, argv);
  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Item> items{
      {1, "explicit-solution convergence", c1_convergence},
      {2, "PDE solver accuracy", c2_pde_accuracy},
      {3, "alpha = 1 exactness", c3_alpha_one},
      {4, "conservation", c4_conservation},
      {5, "stability bound", c5_stability},
      {6, "monotonicity", c6_monotonicity},
      {7, "consistency self-check", c7_consistency},
      {8, "evolution comparison", c8_evolution},
      {9, "power-iteration contraction", c9_contraction},
      {10, "alpha-sweep power law", [&] { return c10_alpha_sweep(opt); }},
      {11, "depth sanity", c11_depth},
      {12, "oracle equivalence", c12_oracles},
  };
  std::FILE* report = opt.report.empty() ? nullptr : std::fopen(opt.report.c_str(), "w");
  if (!opt.report.empty() && report == nullptr) {
    std::fprintf(stderr, "cannot write %s\n", opt.report.c_str());
    return 2;
  }
  auto emit = [&](const std::string& line) {
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    if (report) {
      std::fputs(line.c_str(), report);
      std::fflush(report);
    }
  };
  int unexpected = 0, passed = 0, ran = 0;
  for (const auto& it : items) {
    if (!opt.only.empty() && !opt.only.count(it.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool known = !o.pass && kKnownFailures.count(it.id);
    emit(cat(o.pass ? "PASS " : "FAIL ", it.id < 10 ? " " : "", it.id, " ", it.name, ": ", o.detail, " [",
             fmt("%.1f", secs), " s]", known ? " (known failure)" : "", "\n"));
    if (o.pass) ++passed;
    else if (!known) ++unexpected;
  }
  emit(cat(passed, "/", ran, " criteria passed\n"));
  if (report) std::fclose(report);
  return unexpected == 0 ? 0 : 1;
}
