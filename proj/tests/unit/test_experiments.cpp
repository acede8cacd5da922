#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cpr/experiments.hpp"
#include "cpr/random.hpp"

using namespace cpr;

namespace {

constexpr double tau = 2.0 * std::numbers::pi;

VectorSet gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  VectorSet vs{2, std::vector<double>(2 * n)};
  for (double& x : vs.data) x = rng.normal();
  return vs;
}

}  // namespace

TEST(FitPowerLaw, ExactData) {
  std::vector<double> xs, ys;
  for (double x : {0.5, 1.0, 2.0, 3.0, 7.0}) {
    xs.push_back(x);
    ys.push_back(3.0 * x * x);
  }
  const auto f = fit_power_law(xs, ys);
  EXPECT_NEAR(f.exponent, 2.0, 1e-12);
  EXPECT_NEAR(f.prefactor, 3.0, 1e-12);
  EXPECT_NEAR(f.residual, 0.0, 1e-12);
  const double x2[] = {1.0, 2.0}, y2[] = {1.0, 4.0};
  EXPECT_NEAR(fit_power_law(x2, y2).exponent, 2.0, 1e-14);
}

TEST(FitPowerLaw, NoisyData) {
  Rng rng(99);
  std::vector<double> xs, ys;
  for (int i = 0; i < 20; ++i) {
    const double x = 0.1 * std::pow(1.3, i);
    xs.push_back(x);
    ys.push_back(std::pow(x, 1.5) * (1.0 + rng.uniform(-0.01, 0.01)));
  }
  EXPECT_NEAR(fit_power_law(xs, ys).exponent, 1.5, 0.05);
}

TEST(FitPowerLaw, RejectsBadInput) {
  const double x[] = {1.0, 1.0}, y[] = {1.0, 2.0}, neg[] = {-1.0, 2.0};
  EXPECT_THROW(fit_power_law(x, y), InvalidArgument);
  EXPECT_THROW(fit_power_law(neg, y), InvalidArgument);
  EXPECT_THROW(fit_power_law(std::span<const double>(x, 1), std::span<const double>(y, 1)), InvalidArgument);
}

TEST(HRules, Values) {
  EXPECT_NEAR(h_of(HRule::log_sqrt, 10000), std::log(10000.0) / 100.0, 1e-15);
  EXPECT_NEAR(h_of(HRule::cube_root, 8000), 0.1, 1e-15);
  EXPECT_NEAR(h_of(HRule::quarter_root, 10000), 0.1, 1e-15);
  EXPECT_EQ(default_alpha_constant(HRule::log_sqrt), 30.0);
  EXPECT_EQ(default_alpha_constant(HRule::cube_root), 20.0);
  EXPECT_EQ(default_alpha_constant(HRule::quarter_root), 10.0);
  EXPECT_EQ(parse_h_rule("quarter-root"), HRule::quarter_root);
  EXPECT_THROW(parse_h_rule("sqrt"), InvalidArgument);
  EXPECT_EQ(preset_paper_fig1().size(), 12u);
  EXPECT_EQ(preset_desk().size(), 3u);
}

TEST(ExplicitPair, SatisfiesTheEquation) {
  // u - (gh / 8) Laplacian u = v for sigma = 1/4, rho = 1, b = 0
  const double gh = 0.07;
  for (double x : {0.0, 0.13, 0.5, 0.77}) {
    for (double y : {0.0, 0.31, 0.9}) {
      const double p[] = {x, y};
      const double lap = tau * tau * (std::cos(tau * x) + std::cos(tau * y));
      EXPECT_NEAR(explicit_solution(p) - gh / 8.0 * lap, explicit_teleport(p, gh), 1e-13);
    }
  }
}

TEST(Consistency, ConstantsWithoutDrift) {
  const auto pts = sample_uniform(2, 3000, 5);
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), DriftSpec::none(2), 0.08, 0.0);
  const ScalarField one = ScalarField::constant(2, 1.0);
  const auto st = consistency_check(g, ScalarField::constant(2, 1.0), DriftSpec::none(2), 0.25, std::span(&one, 1));
  ASSERT_EQ(st.size(), 1u);
  EXPECT_LT(st[0].max_abs, 1e-13);
  EXPECT_TRUE(std::isnan(st[0].mean_normalized_first));
}

TEST(Consistency, ConstantsWithDriftSeeOnlyTheDivergenceTerm) {
  // rho = 1 + 0.5 cos(2 pi x1), b = (1, 0): right side -eps * 2 rho_x / rho
  const std::size_t n = 40000;
  const double h = 0.06, eps = 0.02;
  const auto density = DensitySpec::cosine_bump(2, 0.5);
  const auto drift = DriftSpec(VectorField::constant({1.0, 0.0}));
  const auto pts = sample_density(density, n, 8);
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), drift, h, eps);
  const ScalarField one = ScalarField::constant(2, 1.0);
  const auto st = consistency_check(g, density.rho(), drift, 0.25, std::span(&one, 1));
  const auto L1 = apply_L(g, std::vector<double>(n, 1.0));
  double signal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pts[i][0];
    const double rho = 1.0 + 0.5 * std::cos(tau * x);
    signal += std::abs(g.degrees()[i] / (rho * n * h * h) * L1[i]);
  }
  signal /= n;
  EXPECT_NEAR(st[0].mean_abs, st[0].mean_abs_first, 1e-15);
  EXPECT_LT(st[0].mean_abs, 0.5 * signal);
}

TEST(Consistency, Preconditions) {
  const auto pts = sample_uniform(2, 200, 1);
  const auto aniso = DriftSpec::with_constant_matrix(VectorField::zero(2), {2.0, 0.0, 0.0, 1.0});
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), aniso, 0.1, 0.0);
  const ScalarField one = ScalarField::constant(2, 1.0);
  EXPECT_THROW(consistency_check(g, one, aniso, 0.25, std::span(&one, 1)), UnsupportedConfiguration);
  const auto knn = build_knn_graph(gaussian(50, 1), 3);
  EXPECT_THROW(consistency_check(knn, one, DriftSpec::none(2), 0.25, std::span(&one, 1)), InvalidArgument);
}

TEST(ConvergenceStudy, SmallScheduleBehaves) {
  std::vector<ScheduleEntry> sched{{1000, HRule::cube_root, 20.0, {}},
                                   {16000, HRule::cube_root, 20.0, {}},
                                   {16000, HRule::cube_root, 20.0, 1.0}};
  const auto rep = convergence_study(sched, {2, 7, 2000});
  ASSERT_EQ(rep.rows.size(), 3u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.trial_errors.size(), 2u);
    EXPECT_TRUE(r.stable);
    EXPECT_LE(r.max_abs_u, r.stability_bound);
    EXPECT_GT(r.lipschitz_ratio_stat, 0.0);
  }
  EXPECT_LT(rep.rows[1].mean_linf_error, rep.rows[0].mean_linf_error);
  // alpha = 1 leaves only the degree fluctuation max |u (n h^2 / d - 1)|, degrees counted by brute force
  {
    const std::size_t n = 16000;
    const double h = 2.0 * std::cbrt(1.0 / n);
    double mean = 0.0;
    for (std::size_t t = 0; t < 2; ++t) {
      const auto pts = sample_uniform(2, n, derive_seed(7, t));
      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
          double r2 = 0.0;
          for (int a = 0; a < 2; ++a) {
            double z = std::abs(pts[i][a] - pts[j][a]);
            z = std::min(z, 1.0 - z);
            r2 += z * z;
          }
          if (r2 <= h * h) ++count;
        }
        const double u = 2.0 - std::cos(tau * pts[i][0]) - std::cos(tau * pts[i][1]);
        err = std::max(err, std::abs(u * (n * h * h * std::numbers::pi / count - 1.0)));
      }
      mean += err / 2.0;
    }
    EXPECT_NEAR(rep.rows[2].mean_linf_error, mean, 1e-9 * mean);
  }
  ASSERT_TRUE(rep.slope_for(HRule::cube_root).has_value());
  EXPECT_FALSE(rep.slope_for(HRule::log_sqrt).has_value());
  // reproducible row for row
  const auto again = convergence_study(sched, {2, 7, 2000});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(again.rows[i].trial_errors, rep.rows[i].trial_errors);
}

TEST(ConvergenceStudy, RejectsBadRows) {
  const std::vector<ScheduleEntry> big_alpha{{100, HRule::quarter_root, 50.0, {}}};
  EXPECT_THROW(convergence_study(big_alpha), InvalidArgument);
  EXPECT_THROW(convergence_study({}), InvalidArgument);
  const std::vector<ScheduleEntry> ok{{100, HRule::quarter_root, 10.0, {}}};
  EXPECT_THROW(convergence_study(ok, {0}), InvalidArgument);
}

TEST(EvolutionStudy, ScalarRelaxationAndSharedStart) {
  const std::size_t n = 20000;
  const double h = 0.06, alpha = 0.1;
  const auto pts = sample_uniform(2, n, 12);
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), DriftSpec::none(2), h, 0.0);
  PageRankConfig cfg{alpha, std::vector<double>(n, 1.0)};
  const auto one = ScalarField::constant(2, 1.0);
  const auto [ge, gh] = PdeCoeffs::gammas(alpha, 0.0, h);
  const auto coeffs = PdeCoeffs::from_fields(16, one, VectorField::zero(2), one, ge, gh, 0.25);
  const auto two = ScalarField::constant(2, 2.0);
  const auto rep = evolution_study(g, cfg, coeffs, two, 20, 0.01);
  ASSERT_EQ(rep.rows.size(), 21u);
  EXPECT_NEAR(rep.rows[0].error, 0.0, 1e-14);
  EXPECT_NEAR(rep.dt * rep.substeps, alpha, 1e-15);
  // spatial mean of u_n tracks 1 + exp(-alpha k)
  const auto seq = evolve_surfer(g, cfg, std::vector<double>(n, 2.0), 20);
  for (std::size_t k = 0; k <= 20; ++k) {
    double mean = 0.0;
    for (double x : seq[k]) mean += x / n;
    EXPECT_NEAR(mean, 1.0 + std::exp(-alpha * k), alpha + 1.0 / std::sqrt(n * h * h)) << k;
  }
}

TEST(EvolutionStudy, InitialErrorIsInterpolationError) {
  const std::size_t n = 3000;
  const auto pts = sample_uniform(2, n, 2);
  const auto g = build_rdgg(pts, KernelSpec::indicator(2), DriftSpec::none(2), 0.1, 0.0);
  const auto one = ScalarField::constant(2, 1.0);
  const auto coeffs = PdeCoeffs::from_fields(8, one, VectorField::zero(2), one, 0.0, 0.1, 0.25);
  const auto init = ScalarField::trig(TrigPolynomial::mode(2, 0, 1, 1.0), "cos1");
  const auto rep = evolution_study(g, PageRankConfig::uniform(n, 0.2), coeffs, init, 0, 0.01);
  const GridField grid = GridField::sample(init, 8);
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(init(pts[i]) - grid.interpolate(pts[i])));
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.rows[0].error, e);
  EXPECT_GT(e, 0.0);
}

TEST(AlphaSweep, LimitsAndNeighborCount) {
  const auto vs = gaussian(2000, 3);
  const std::vector<double> v(2000, 1.0 / 2000);
  const double alphas[] = {0.05, 0.2, 0.999};
  const auto g10 = build_knn_graph(vs, 10);
  const auto k10 = alpha_sweep(g10, alphas, v);
  EXPECT_LT(k10.rows[2].linf_distance, 1e-3 * k10.rows[0].linf_distance);
  // larger k reaches further: the mean neighbor distance grows
  auto mean_radius = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      std::vector<double> dist;
      for (std::size_t j = 0; j < vs.size(); ++j)
        if (j != i) dist.push_back(std::hypot(vs[i][0] - vs[j][0], vs[i][1] - vs[j][1]));
      std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
      s += dist[k - 1] / vs.size();
    }
    return s;
  };
  EXPECT_GT(mean_radius(30), 1.5 * mean_radius(10));
  EXPECT_GT(k10.p, 0.0);
  const double bad[] = {1.0};
  EXPECT_THROW(alpha_sweep(build_knn_graph(vs, 10), bad, v), InvalidArgument);
}

TEST(GeometricGrid, Endpoints) {
  const auto g = geometric_grid(0.01, 0.5, 8);
  EXPECT_DOUBLE_EQ(g.front(), 0.01);
  EXPECT_NEAR(g.back(), 0.5, 1e-15);
  EXPECT_NEAR(g[1] / g[0], g[7] / g[6], 1e-12);
  EXPECT_THROW(geometric_grid(0.0, 1.0, 3), InvalidArgument);
}
