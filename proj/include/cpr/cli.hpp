#pragma once

// Command-line front end. Each subcommand validates its parameters, runs one
// pipeline, and writes CSV output plus a key=value sidecar (<out>.meta).
//
// Precedence: flags > --config file > presets. Exit status: 0 on success,
// 2 on usage errors, 1 when a computation precondition fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpr/continuum.hpp"
#include "cpr/depth.hpp"
#include "cpr/error.hpp"
#include "cpr/experiments.hpp"
#include "cpr/geometry.hpp"
#include "cpr/graph.hpp"
#include "cpr/io.hpp"
#include "cpr/kernel.hpp"
#include "cpr/pagerank.hpp"
#include "cpr/parallel.hpp"
#include "cpr/random.hpp"

namespace cpr {

inline constexpr const char* kToolVersion = "1.0.0";

namespace cli {

/// Usage problems detected after parsing (bad names, missing inputs).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline DensitySpec make_density(const std::string& name, int dim, double amplitude) {
  if (name == "uniform") return DensitySpec::uniform(dim);
  if (name == "cosine-bump") return DensitySpec::cosine_bump(dim, amplitude);
  throw UsageError("unknown density '" + name + "' (expected uniform or cosine-bump)");
}

/// zero, constant (direction from `vec`, default e1), rotational (d = 2), or
/// gradient: b = grad(cos(2 pi x1) / (2 pi)) scaled by |vec| when given.
inline VectorField make_drift(const std::string& name, int dim, const std::vector<double>& vec) {
  if (name == "zero") return VectorField::zero(dim);
  if (name == "constant") {
    Vec c(static_cast<std::size_t>(dim), 0.0);
    if (vec.empty()) {
      c[0] = 1.0;
    } else if (vec.size() == c.size()) {
      c = vec;
    } else {
      throw UsageError("--drift-vec needs " + std::to_string(dim) + " components");
    }
    return VectorField::constant(c);
  }
  if (name == "rotational") {
    if (dim != 2) throw UsageError("rotational drift needs --dim 2");
    return VectorField::rotational();
  }
  if (name == "gradient") {
    const double s = vec.empty() ? 1.0 : vec[0];
    return VectorField::gradient_of(TrigPolynomial::mode(dim, 0, 1, s / (2.0 * std::numbers::pi)));
  }
  throw UsageError("unknown drift '" + name + "' (expected zero, constant, rotational or gradient)");
}

/// Built-in test functions: one, cos1, cos2, sin1cos2, explicit.
inline ScalarField make_test_function(const std::string& name, int dim) {
  if (name == "one") return ScalarField::trig(TrigPolynomial::constant(dim, 1.0), "one");
  if (name == "cos1") return ScalarField::trig(TrigPolynomial::mode(dim, 0, 1, 1.0), "cos1");
  if (name == "cos2") {
    if (dim < 2) throw UsageError("test function cos2 needs --dim >= 2");
    return ScalarField::trig(TrigPolynomial::mode(dim, 1, 1, 1.0), "cos2");
  }
  if (name == "sin1cos2") {
    if (dim < 2) throw UsageError("test function sin1cos2 needs --dim >= 2");
    // sin(a) cos(b) = (sin(a + b) + sin(a - b)) / 2.
    std::vector<int> k1(static_cast<std::size_t>(dim), 0), k2(static_cast<std::size_t>(dim), 0);
    k1[0] = 1;
    k1[1] = 1;
    k2[0] = 1;
    k2[1] = -1;
    return ScalarField::trig(TrigPolynomial(dim, {TrigTerm{k1, 0.0, 0.5}, TrigTerm{k2, 0.0, 0.5}}), "sin1cos2");
  }
  if (name == "explicit") {
    if (dim != 2) throw UsageError("test function explicit needs --dim 2");
    auto p = TrigPolynomial::constant(2, 2.0) + TrigPolynomial::mode(2, 0, 1, -1.0) + TrigPolynomial::mode(2, 1, 1, -1.0);
    return ScalarField::trig(p, "explicit");
  }
  throw UsageError("unknown test function '" + name + "' (expected one, cos1, cos2, sin1cos2 or explicit)");
}

/// Reads key=value lines and applies them to options not given on the command
/// line. Keys containing '.' (sidecar metadata) are ignored, so a sidecar can be
/// fed back as a config file.
inline std::set<std::string> apply_config_file(CLI::App* app, const std::string& path, std::ostream& err) {
  std::set<std::string> applied;
  if (path.empty()) return applied;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#' || body.front() == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key(detail::trim(body.substr(0, eq)));
    std::string value(detail::trim(body.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.find('.') != std::string::npos || key == "config" || value.empty()) continue;
    CLI::Option* opt = nullptr;
    try {
      opt = app->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      err << "warning: ignoring unknown config key '" << key << "'\n";
      continue;
    }
    if (opt->count() > 0) continue;  // flag given on the command line
    opt->clear();
    if (opt->get_expected_max() > 1) {
      std::string cell;
      std::istringstream ss(value);
      while (std::getline(ss, cell, ',')) {
        const auto c = detail::trim(cell);
        if (!c.empty()) opt->add_result(std::string(c));
      }
    } else {
      opt->add_result(value);
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "': " + e.what());
    }
    applied.insert(key);
  }
  return applied;
}

inline bool was_set(CLI::App* app, const std::string& name) { return app->get_option("--" + name)->count() > 0; }

/// Echo of every option of `app` (given value or default) plus run metadata.
inline Sidecar make_sidecar(CLI::App* app, const std::string& subcommand) {
  Sidecar s;
  s.set("meta.tool", "cpr");
  s.set("meta.version", kToolVersion);
  s.set("meta.subcommand", subcommand);
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    }
    s.set(name, value);
  }
  return s;
}

inline void finish_sidecar(Sidecar& s, const std::string& out_path,
                           std::chrono::steady_clock::time_point start) {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  s.set("meta.wall_clock_seconds", secs);
  s.set("meta.finished_unix_time", static_cast<long long>(std::time(nullptr)));
  s.write(Sidecar::path_for(out_path));
}

/// Options shared by every subcommand that builds a graph.
struct GraphOptions {
  int dim = 2;
  std::size_t n = 2000;
  double h = 0.1;
  double eps = 0.0;
  std::string kernel = "indicator";
  std::string drift = "zero";
  std::vector<double> drift_vec;
  std::string density = "uniform";
  double amplitude = 0.5;
  std::uint64_t seed = 1;
  std::string graph_csv;
  std::string data_csv;
  std::size_t k = 10;

  void add(CLI::App* app) {
    app->add_option("--dim", dim, "Torus dimension")->capture_default_str()->check(CLI::Range(1, 16));
    app->add_option("--n", n, "Number of sample points")->capture_default_str();
    app->add_option("--h", h, "Kernel bandwidth")->capture_default_str();
    app->add_option("--eps", eps, "Drift strength")->capture_default_str();
    app->add_option("--kernel", kernel, "indicator or bump")->capture_default_str();
    app->add_option("--drift", drift, "zero, constant, rotational or gradient")->capture_default_str();
    app->add_option("--drift-vec", drift_vec, "Drift vector (constant) or scale (gradient)")->delimiter(',');
    app->add_option("--density", density, "uniform or cosine-bump")->capture_default_str();
    app->add_option("--amplitude", amplitude, "Cosine-bump amplitude")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--graph", graph_csv, "Read the graph from an edge-list CSV instead of sampling");
    app->add_option("--data", data_csv, "Build a k-NN graph from a vector CSV instead of sampling");
    app->add_option("--k", k, "Neighbors for --data")->capture_default_str();
  }

  KernelSpec kernel_spec() const {
    try {
      return KernelSpec::by_name(kernel, dim);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }

  DriftSpec drift_spec() const { return DriftSpec(make_drift(drift, dim, drift_vec)); }

  /// Checks the geometric-graph preconditions before anything is allocated.
  void validate_geometric() const {
    if (n == 0) throw InvalidArgument("--n must be at least 1");
    if (!(h > 0.0)) throw InvalidArgument("--h must be positive");
    if (!(eps >= 0.0)) throw InvalidArgument("--eps must be nonnegative");
    const DriftSpec ds = drift_spec();
    detail::check_radius(ds, h, eps);
  }

  struct Built {
    DirectedGraph graph;
    std::optional<PointCloud> points;
  };

  Built build() const {
    if (!graph_csv.empty()) return {read_edges_csv(graph_csv), std::nullopt};
    if (!data_csv.empty()) {
      const auto data = read_vectors_csv(data_csv, false);
      return {build_knn_graph(data.vectors, k), std::nullopt};
    }
    validate_geometric();
    const KernelSpec ks = kernel_spec();
    const DriftSpec ds = drift_spec();
    PointCloud pts = sample_density(make_density(density, dim, amplitude), n, seed);
    DirectedGraph g = build_rdgg(pts, ks, ds, h, eps, seed);
    return {std::move(g), std::move(pts)};
  }
};

struct Runner {
  CLI::App* app = nullptr;
  std::string name;
  std::function<void()> run;
};

inline std::vector<double> parse_teleport(const std::string& kind, const DirectedGraph& g, const PointCloud* pts,
                                          double alpha, double h, const std::vector<std::size_t>& seeds) {
  const std::size_t n = g.size();
  if (kind == "uniform") return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (kind == "ones") return std::vector<double>(n, 1.0);
  if (kind == "explicit") {
    if (pts == nullptr || pts->dim() != 2) throw UsageError("--teleport explicit needs a sampled 2-d point cloud");
    const double gh = (1.0 - alpha) * h * h / alpha;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = explicit_teleport((*pts)[i], gh);
    return v;
  }
  if (kind == "seeds") {
    if (seeds.empty()) throw UsageError("--teleport seeds needs --seeds");
    std::vector<double> v(n, 0.0);
    for (auto s : seeds) {
      if (s >= n) throw InvalidArgument("seed node " + std::to_string(s) + " out of range");
      v[s] = 1.0;
    }
    double c = 0.0;
    for (double x : v) c += x;
    for (double& x : v) x /= c;
    return v;
  }
  throw UsageError("unknown teleport '" + kind + "' (expected uniform, ones, explicit or seeds)");
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1], got " + std::to_string(alpha));
}

// ---------------------------------------------------------------------------

inline Runner add_generate(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("generate", "Sample points and build a directed geometric (or k-NN) graph");
  auto g = std::make_shared<GraphOptions>();
  auto path = std::make_shared<std::string>();
  auto points_out = std::make_shared<std::string>();
  g->add(app);
  app->add_option("--out", *path, "Edge-list CSV (src,dst,weight)")->required();
  app->add_option("--points-out", *points_out, "Optional CSV of sample coordinates");
  return {app, "generate", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            auto built = g->build();
            write_edges_csv(built.graph, *path);
            if (!points_out->empty() && built.points) write_points_csv(*built.points, *points_out);
            Sidecar s = make_sidecar(app, "generate");
            s.set("nodes", built.graph.size());
            s.set("edges", built.graph.edge_count());
            s.set("graph_kind", to_string(built.graph.params().kind));
            finish_sidecar(s, *path, start);
            out << "wrote " << built.graph.size() << " nodes, " << built.graph.edge_count() << " edges to " << *path
                << '\n';
          }};
}

inline Runner add_pagerank(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("pagerank", "Solve PageRank on a graph");
  auto g = std::make_shared<GraphOptions>();
  g->add(app);
  struct Opts {
    double alpha = 0.15;
    std::string teleport = "uniform";
    std::vector<std::size_t> seeds;
    double tol = 0.0;
    std::size_t max_iter = 0;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--alpha", o->alpha, "Teleportation probability in (0, 1]")->capture_default_str();
  app->add_option("--teleport", o->teleport, "uniform, ones, explicit or seeds")->capture_default_str();
  app->add_option("--seeds", o->seeds, "Seed nodes for --teleport seeds")->delimiter(',');
  app->add_option("--tol", o->tol, "l1 tolerance (0: 1e-12 sum|v|)")->capture_default_str();
  app->add_option("--max-iter", o->max_iter, "Iteration cap (0: automatic)")->capture_default_str();
  app->add_option("--out", o->out, "Rank CSV (node,r,u)")->required();
  return {app, "pagerank", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            check_alpha(o->alpha);
            auto built = g->build();
            PageRankConfig cfg{o->alpha,
                               parse_teleport(o->teleport, built.graph, built.points ? &*built.points : nullptr,
                                              o->alpha, g->h, o->seeds),
                               o->tol, o->max_iter};
            cfg.signed_teleport = o->teleport == "explicit";
            const RankResult res = solve_pagerank(built.graph, cfg);
            write_rank_csv(res, o->out);
            Sidecar s = make_sidecar(app, "pagerank");
            s.set("resolved_tol", cfg.resolved_tol());
            s.set("iterations", res.iterations);
            s.set("residual", res.residual);
            s.set("normalization", built.graph.normalization());
            finish_sidecar(s, o->out, start);
            out << "pagerank: " << res.iterations << " iterations, residual " << res.residual << '\n';
          }};
}

inline Runner add_evolve(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("evolve", "Random-surfer evolution in normalized form");
  auto g = std::make_shared<GraphOptions>();
  g->add(app);
  struct Opts {
    double alpha = 0.15;
    std::string teleport = "uniform";
    std::vector<std::size_t> seeds;
    std::size_t steps = 10;
    std::size_t every = 1;
    std::string initial = "constant";
    double g0 = 2.0;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--alpha", o->alpha, "Teleportation probability in (0, 1]")->capture_default_str();
  app->add_option("--teleport", o->teleport, "uniform, ones, explicit or seeds")->capture_default_str();
  app->add_option("--seeds", o->seeds, "Seed nodes for --teleport seeds")->delimiter(',');
  app->add_option("--steps", o->steps, "Number of steps K")->capture_default_str();
  app->add_option("--every", o->every, "Write every m-th step")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--initial", o->initial, "constant, cos1 or stationary")->capture_default_str();
  app->add_option("--g0", o->g0, "Value for --initial constant")->capture_default_str();
  app->add_option("--out", o->out, "CSV k,node,u")->required();
  return {app, "evolve", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            check_alpha(o->alpha);
            auto built = g->build();
            const PointCloud* pts = built.points ? &*built.points : nullptr;
            PageRankConfig cfg{o->alpha, parse_teleport(o->teleport, built.graph, pts, o->alpha, g->h, o->seeds)};
            cfg.signed_teleport = o->teleport == "explicit";
            const std::size_t n = built.graph.size();
            std::vector<double> init(n, o->g0);
            if (o->initial == "cos1") {
              if (pts == nullptr) throw UsageError("--initial cos1 needs sampled points");
              for (std::size_t i = 0; i < n; ++i) init[i] = 2.0 - std::cos(2.0 * std::numbers::pi * (*pts)[i][0]);
            } else if (o->initial == "stationary") {
              init = solve_pagerank(built.graph, cfg).u;
            } else if (o->initial != "constant") {
              throw UsageError("unknown --initial '" + o->initial + "' (expected constant, cos1 or stationary)");
            }
            auto file = detail::open_out(o->out);
            file << "k,node,u\n";
            evolve_surfer(built.graph, cfg, init, o->steps, [&](std::size_t k, std::span<const double> u) {
              if (k % o->every != 0 && k != o->steps) return;
              for (std::size_t i = 0; i < u.size(); ++i) file << k << ',' << i << ',' << u[i] << '\n';
            });
            file.close();
            Sidecar s = make_sidecar(app, "evolve");
            s.set("normalization", built.graph.normalization());
            finish_sidecar(s, o->out, start);
            out << "evolve: " << o->steps << " steps on " << n << " nodes\n";
          }};
}

struct PdeOptions {
  int dim = 2;
  std::size_t N = 64;
  double alpha = 0.1;
  double eps = 0.0;
  double h = 0.05;
  std::optional<double> gamma_eps;
  std::optional<double> gamma_h;
  std::optional<double> sigma;
  std::string kernel = "indicator";
  std::string density = "uniform";
  double amplitude = 0.5;
  std::string drift = "zero";
  std::vector<double> drift_vec;
  std::string v = "explicit";

  void add(CLI::App* app) {
    app->add_option("--dim", dim, "Grid dimension (1-3)")->capture_default_str()->check(CLI::Range(1, 3));
    app->add_option("--N", N, "Grid points per axis")->capture_default_str();
    app->add_option("--alpha", alpha, "Teleportation probability, for the gammas")->capture_default_str();
    app->add_option("--eps", eps, "Drift strength, for gamma_eps")->capture_default_str();
    app->add_option("--h", h, "Bandwidth, for gamma_h")->capture_default_str();
    app->add_option("--gamma-eps", gamma_eps, "Override gamma_eps");
    app->add_option("--gamma-h", gamma_h, "Override gamma_h");
    app->add_option("--sigma", sigma, "Override sigma_Phi (default from --kernel)");
    app->add_option("--kernel", kernel, "indicator or bump (sets sigma_Phi)")->capture_default_str();
    app->add_option("--density", density, "uniform or cosine-bump")->capture_default_str();
    app->add_option("--amplitude", amplitude, "Cosine-bump amplitude")->capture_default_str();
    app->add_option("--drift", drift, "zero, constant, rotational or gradient")->capture_default_str();
    app->add_option("--drift-vec", drift_vec, "Drift vector (constant) or scale (gradient)")->delimiter(',');
    app->add_option("--v", v, "explicit, rho, cos1 or ones")->capture_default_str();
  }

  ScalarField teleport_field(const ScalarField& rho, double gh) const {
    if (v == "rho") return rho;
    if (v == "ones") return ScalarField::constant(dim, 1.0);
    if (v == "cos1") {
      return ScalarField::trig(TrigPolynomial::constant(dim, 1.0) + TrigPolynomial::mode(dim, 0, 1, 0.5), "cos1");
    }
    if (v == "explicit") {
      if (dim != 2) throw UsageError("--v explicit needs --dim 2");
      return ScalarField(2, "explicit", [gh](CSpan x) { return explicit_teleport(x, gh); });
    }
    throw UsageError("unknown --v '" + v + "' (expected explicit, rho, cos1 or ones)");
  }

  PdeCoeffs coeffs() const {
    if (N < 4) throw InvalidArgument("--N must be at least 4");
    check_alpha(alpha);
    auto [ge, gh] = PdeCoeffs::gammas(alpha, eps, h);
    if (gamma_eps) ge = *gamma_eps;
    if (gamma_h) gh = *gamma_h;
    double s = 0.0;
    if (sigma) {
      s = *sigma;
    } else {
      try {
        s = KernelSpec::by_name(kernel, dim).sigma_phi();
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
    }
    const DensitySpec rho = make_density(density, dim, amplitude);
    const VectorField b = make_drift(drift, dim, drift_vec);
    return PdeCoeffs::from_fields(N, rho.rho(), b, teleport_field(rho.rho(), gh), ge, gh, s);
  }
};

inline Runner add_solve_pde(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("solve-pde", "Solve the continuum equation on a periodic grid");
  auto p = std::make_shared<PdeOptions>();
  p->add(app);
  struct Opts {
    int order = 2;
    bool time = false;
    double T = 1.0;
    double dt = 0.0;
    std::size_t every = 0;
    double delta = 0.0;
    double tol = 1e-10;
    std::string initial = "constant";
    double g0 = 2.0;
    std::string out;
    std::string snapshots_out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--order", o->order, "2 (second order) or 1 (vanishing viscosity)")->capture_default_str();
  app->add_flag("--time", o->time, "Time-dependent problem by forward Euler");
  app->add_option("--T", o->T, "Final time for --time")->capture_default_str();
  app->add_option("--dt", o->dt, "Time step for --time (0: stability bound)")->capture_default_str();
  app->add_option("--every", o->every, "Snapshot stride for --snapshots-out (0: final only)")->capture_default_str();
  app->add_option("--delta", o->delta, "Viscosity for --order 1 (0: 1/N)")->capture_default_str();
  app->add_option("--tol", o->tol, "Infinity-norm residual tolerance")->capture_default_str();
  app->add_option("--initial", o->initial, "constant or stationary, for --time")->capture_default_str();
  app->add_option("--g0", o->g0, "Value for --initial constant")->capture_default_str();
  app->add_option("--out", o->out, "Grid CSV (i1,...,id,value)")->required();
  app->add_option("--snapshots-out", o->snapshots_out, "CSV t,i1,...,id,value of time snapshots");
  return {app, "solve-pde", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            if (o->order != 1 && o->order != 2) throw UsageError("--order must be 1 or 2");
            const PdeCoeffs c = p->coeffs();
            c.require_regime("solve-pde");
            Sidecar s = make_sidecar(app, "solve-pde");
            s.set("gamma_eps_used", c.gamma_eps);
            s.set("gamma_h_used", c.gamma_h);
            s.set("sigma_phi_used", c.sigma_phi);
            s.set("eta", c.eta);
            if (o->time) {
              const double dt = o->dt > 0.0 ? o->dt : stable_time_step(c);
              GridField g0(c.dim(), c.resolution(), o->g0);
              if (o->initial == "stationary") {
                g0 = solve_pde_2nd(c, {o->tol}).u;
              } else if (o->initial != "constant") {
                throw UsageError("unknown --initial '" + o->initial + "' (expected constant or stationary)");
              }
              const std::size_t every =
                  o->every > 0 ? o->every : std::numeric_limits<std::size_t>::max();
              const TimeSeries ts = solve_pde_time(c, g0, o->T, dt, every);
              write_grid_csv(ts.snapshots.back(), o->out);
              if (!o->snapshots_out.empty()) {
                auto f = detail::open_out(o->snapshots_out);
                f << 't';
                for (int a = 0; a < c.dim(); ++a) f << ",i" << (a + 1);
                f << ",value\n";
                for (std::size_t m = 0; m < ts.snapshots.size(); ++m) {
                  const GridField& u = ts.snapshots[m];
                  for (std::size_t j = 0; j < u.size(); ++j) {
                    f << ts.times[m];
                    for (int a = 0; a < u.dim(); ++a) f << ',' << u.index_along(j, a);
                    f << ',' << u[j] << '\n';
                  }
                }
              }
              s.set("dt_used", dt);
              s.set("stability_bound", stable_time_step(c));
              s.set("snapshots", ts.snapshots.size());
              out << "solve-pde: " << ts.snapshots.size() << " snapshots to T=" << o->T << '\n';
            } else {
              const PdeSolution sol =
                  o->order == 2 ? solve_pde_2nd(c, {o->tol}) : solve_pde_1st(c, o->delta, {o->tol});
              write_grid_csv(sol.u, o->out);
              s.set("delta_used", sol.delta);
              s.set("residual", sol.residual);
              s.set("sweeps", sol.sweeps);
              out << "solve-pde: residual " << sol.residual << " after " << sol.sweeps << " sweeps\n";
            }
            finish_sidecar(s, o->out, start);
          }};
}

inline Runner add_converge(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("converge", "Convergence study against the explicit torus solution");
  struct Opts {
    std::string preset = "desk";
    std::size_t trials = 10;
    std::uint64_t seed = 1;
    std::vector<std::size_t> n;
    std::vector<std::string> rule;
    double C = 0.0;
    double alpha = 0.0;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--preset", o->preset, "paper-fig1 or desk")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper-fig1", "desk"}));
  app->add_option("--trials", o->trials, "Trials per row")->capture_default_str();
  app->add_option("--seed", o->seed, "Master seed")->capture_default_str();
  app->add_option("--n", o->n, "Sample sizes (overrides the preset)")->delimiter(',');
  app->add_option("--rule", o->rule, "h rules: log-sqrt, cube-root, quarter-root")->delimiter(',');
  app->add_option("--C", o->C, "alpha = C h^2 (0: per-rule default 30, 20, 10)")->capture_default_str();
  app->add_option("--alpha", o->alpha, "Fixed alpha for every row (0: use C h^2)")->capture_default_str();
  app->add_option("--out", o->out, "Report CSV")->required();
  return {app, "converge", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            const bool paper = o->preset == "paper-fig1";
            std::vector<std::size_t> ns = o->n;
            std::vector<HRule> rules;
            for (const auto& r : o->rule) {
              try {
                rules.push_back(parse_h_rule(r));
              } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
              }
            }
            if (ns.empty()) ns = paper ? std::vector<std::size_t>{10000, 20000, 40000, 80000}
                                       : std::vector<std::size_t>{2500, 10000, 40000};
            if (rules.empty()) {
              rules = paper ? std::vector<HRule>{HRule::log_sqrt, HRule::cube_root, HRule::quarter_root}
                            : std::vector<HRule>{HRule::cube_root};
            }
            const std::size_t trials = was_set(app, "trials") ? o->trials : (paper ? 100 : 10);
            if (trials == 0) throw InvalidArgument("--trials must be at least 1");
            std::vector<ScheduleEntry> sched;
            for (HRule r : rules) {
              for (std::size_t n : ns) {
                ScheduleEntry e{n, r, o->C > 0.0 ? o->C : default_alpha_constant(r), {}};
                if (o->alpha > 0.0) e.alpha = o->alpha;
                const double h = h_of(r, n);
                const double a = e.alpha ? *e.alpha : e.C * h * h;
                if (!(a > 0.0 && a <= 1.0)) {
                  throw InvalidArgument("row n=" + std::to_string(n) + ", rule " + to_string(r) + ": alpha = " +
                                        std::to_string(a) + " outside (0, 1]");
                }
                detail::check_radius(DriftSpec::none(2), h, 0.0);
                sched.push_back(e);
              }
            }
            const ConvergenceReport rep = convergence_study(sched, {trials, o->seed});
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : rep.rows) {
              rows.push_back({std::to_string(r.n), to_string(r.rule), format_real(r.h), format_real(r.alpha),
                              format_real(r.eps), std::to_string(r.trials), format_real(r.mean_linf_error),
                              format_real(r.lipschitz_ratio_stat), format_real(r.max_abs_u),
                              format_real(r.stability_bound), r.stable ? "1" : "0"});
            }
            write_table_csv({"n", "h_rule", "h", "alpha", "eps", "trials", "mean_Linf_error", "lipschitz_ratio_stat",
                             "max_abs_u", "stability_bound", "stable"},
                            rows, o->out);
            Sidecar s = make_sidecar(app, "converge");
            s.set("trials_used", trials);
            for (const auto& [rule, fit] : rep.slopes) {
              s.set("slope." + to_string(rule), fit.exponent);
              out << "converge: slope(" << to_string(rule) << ") = " << fit.exponent << '\n';
            }
            finish_sidecar(s, o->out, start);
          }};
}

inline Runner add_consistency(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("consistency", "Pointwise consistency of the graph operator");
  auto g = std::make_shared<GraphOptions>();
  g->add(app);
  auto phis = std::make_shared<std::vector<std::string>>(std::vector<std::string>{"cos1"});
  auto path = std::make_shared<std::string>();
  app->add_option("--phi", *phis, "Test functions: one, cos1, cos2, sin1cos2, explicit")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--out", *path, "Statistics CSV")->required();
  return {app, "consistency", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            if (!g->graph_csv.empty() || !g->data_csv.empty()) {
              throw UsageError("consistency needs a sampled geometric graph (no --graph or --data)");
            }
            std::vector<ScalarField> fs;
            for (const auto& name : *phis) fs.push_back(make_test_function(name, g->dim));
            const DensitySpec rho = make_density(g->density, g->dim, g->amplitude);
            const KernelSpec ks = g->kernel_spec();
            auto built = g->build();
            const auto stats = consistency_check(built.graph, rho.rho(), g->drift_spec(), ks.sigma_phi(), fs);
            std::vector<std::vector<std::string>> rows;
            for (const auto& st : stats) {
              rows.push_back({st.function, format_real(st.mean_abs), format_real(st.max_abs),
                              format_real(st.mean_normalized), format_real(st.max_normalized),
                              format_real(st.mean_abs_first), format_real(st.mean_normalized_first)});
              out << "consistency(" << st.function << "): mean " << st.mean_abs << ", normalized "
                  << st.mean_normalized << '\n';
            }
            write_table_csv({"function", "mean_abs", "max_abs", "mean_normalized", "max_normalized", "mean_abs_first",
                             "mean_normalized_first"},
                            rows, *path);
            Sidecar s = make_sidecar(app, "consistency");
            s.set("sigma_phi", ks.sigma_phi());
            finish_sidecar(s, *path, start);
          }};
}

/// Two-dimensional standard Gaussian cloud.
inline VectorSet gaussian_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  VectorSet vs{dim, std::vector<double>(n * dim)};
  Rng rng(seed);
  for (double& x : vs.data) x = rng.normal();
  return vs;
}

inline Runner add_alpha_sweep(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("alpha-sweep", "Distance between PageRank and teleportation versus alpha");
  struct Opts {
    std::string data;
    std::string idx;
    std::size_t n = 5000;
    std::size_t dim = 2;
    std::uint64_t seed = 1;
    std::vector<std::size_t> k{10};
    std::vector<double> alphas;
    double alpha_min = 0.01;
    double alpha_max = 0.5;
    std::size_t count = 8;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--data", o->data, "Vector CSV (default: synthetic Gaussian cloud)");
  app->add_option("--idx", o->idx, "IDX image file (e.g. MNIST), rows flattened");
  app->add_option("--n", o->n, "Synthetic cloud size")->capture_default_str();
  app->add_option("--dim", o->dim, "Synthetic cloud dimension")->capture_default_str();
  app->add_option("--seed", o->seed, "Synthetic cloud seed")->capture_default_str();
  app->add_option("--k", o->k, "Neighbor counts")->delimiter(',')->capture_default_str();
  app->add_option("--alphas", o->alphas, "Explicit alpha values")->delimiter(',');
  app->add_option("--alpha-min", o->alpha_min, "Smallest alpha of the geometric grid")->capture_default_str();
  app->add_option("--alpha-max", o->alpha_max, "Largest alpha of the geometric grid")->capture_default_str();
  app->add_option("--count", o->count, "Grid size")->capture_default_str();
  app->add_option("--out", o->out, "CSV k,alpha,linf_distance,iterations")->required();
  return {app, "alpha-sweep", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            const std::vector<double> alphas =
                o->alphas.empty() ? geometric_grid(o->alpha_min, o->alpha_max, o->count) : o->alphas;
            for (double a : alphas)
              if (!(a > 0.0 && a < 1.0)) throw InvalidArgument("alpha values must lie in (0, 1)");
            VectorSet vs;
            if (!o->idx.empty()) {
              vs = read_idx(o->idx).as_vectors();
            } else if (!o->data.empty()) {
              vs = read_vectors_csv(o->data, false).vectors;
            } else {
              vs = gaussian_cloud(o->n, o->dim, o->seed);
            }
            Sidecar s = make_sidecar(app, "alpha-sweep");
            std::vector<std::vector<std::string>> rows;
            for (std::size_t k : o->k) {
              const DirectedGraph g = build_knn_graph(vs, k);
              const std::vector<double> v(g.size(), 1.0 / static_cast<double>(g.size()));
              const AlphaSweepReport rep = alpha_sweep(g, alphas, v);
              for (const auto& r : rep.rows) {
                rows.push_back({std::to_string(k), format_real(r.alpha), format_real(r.linf_distance),
                                std::to_string(r.iterations)});
              }
              s.set("p.k" + std::to_string(k), rep.p);
              out << "alpha-sweep: k=" << k << " p=" << rep.p << '\n';
            }
            write_table_csv({"k", "alpha", "linf_distance", "iterations"}, rows, o->out);
            finish_sidecar(s, o->out, start);
          }};
}

inline Runner add_depth(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("depth", "Localized-PageRank data depth per class");
  struct Opts {
    std::string data;
    bool labels = false;
    std::string idx_images;
    std::string idx_labels;
    std::size_t k = 10;
    double alpha = 0.05;
    std::size_t top = 11;
    std::string out;
    std::string echo_out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--data", o->data, "Vector CSV");
  app->add_flag("--labels", o->labels, "Last CSV column is an integer class label");
  app->add_option("--idx-images", o->idx_images, "IDX image file");
  app->add_option("--idx-labels", o->idx_labels, "IDX label file");
  app->add_option("--k", o->k, "Nearest neighbors")->capture_default_str();
  app->add_option("--alpha", o->alpha, "Teleportation probability")->capture_default_str();
  app->add_option("--top", o->top, "Rows per class in the output")->capture_default_str();
  app->add_option("--out", o->out, "CSV class,rank,node_index,score")->required();
  app->add_option("--echo-out", o->echo_out, "CSV of the raw vectors of the top rows");
  return {app, "depth", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            check_alpha(o->alpha);
            VectorSet vs;
            std::vector<long> labels;
            if (!o->idx_images.empty()) {
              if (o->idx_labels.empty()) throw UsageError("--idx-images needs --idx-labels");
              vs = read_idx(o->idx_images).as_vectors();
              labels = read_idx(o->idx_labels).as_labels();
            } else if (!o->data.empty()) {
              if (!o->labels) throw UsageError("depth needs labels: pass --labels with --data");
              auto lv = read_vectors_csv(o->data, true);
              vs = std::move(lv.vectors);
              labels = std::move(*lv.labels);
            } else {
              throw UsageError("depth needs --data or --idx-images");
            }
            const DepthResult res = depth_ranking(vs, labels, o->k, o->alpha, o->top);
            write_depth_csv(res, o->out);
            if (!o->echo_out.empty()) {
              auto f = detail::open_out(o->echo_out);
              f << "class,rank,node_index";
              for (std::size_t a = 0; a < vs.dim; ++a) f << ",x" << (a + 1);
              f << '\n';
              for (const auto& c : res.classes) {
                for (std::size_t i = 0; i < c.top.size(); ++i) {
                  f << c.label << ',' << (i + 1) << ',' << c.top[i];
                  for (double x : vs[c.top[i]]) f << ',' << x;
                  f << '\n';
                }
              }
            }
            Sidecar s = make_sidecar(app, "depth");
            s.set("classes", res.classes.size());
            for (std::size_t i = 0; i < res.warnings.size(); ++i) s.set("warning." + std::to_string(i), res.warnings[i]);
            finish_sidecar(s, o->out, start);
            for (const auto& w : res.warnings) out << "warning: " << w << '\n';
            out << "depth: ranked " << res.classes.size() << " classes\n";
          }};
}

inline Runner add_characteristics(CLI::App& root, std::ostream& out) {
  auto* app = root.add_subcommand("characteristics", "Integrate the characteristic ODEs");
  auto p = std::make_shared<PdeOptions>();
  p->drift = "rotational";
  p->v = "ones";
  p->N = 32;
  p->add(app);
  struct Opts {
    std::vector<double> x0;
    double z0 = 1.0;
    std::vector<double> p0;
    double T = 1.0;
    double dt = 1e-3;
    bool grid = false;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--x0", o->x0, "Start point")->delimiter(',');
  app->add_option("--z0", o->z0, "Initial z")->capture_default_str();
  app->add_option("--p0", o->p0, "Initial p")->delimiter(',');
  app->add_option("--T", o->T, "Final parameter value")->capture_default_str();
  app->add_option("--dt", o->dt, "RK4 step")->capture_default_str();
  app->add_flag("--grid-derivatives", o->grid, "Use centered grid differences instead of analytic derivatives");
  app->add_option("--out", o->out, "CSV s,x1..,z,p1..")->required();
  return {app, "characteristics", [=, &out]() {
            const auto start = std::chrono::steady_clock::now();
            const auto d = static_cast<std::size_t>(p->dim);
            std::vector<double> x0 = o->x0.empty() ? std::vector<double>(d, 0.5) : o->x0;
            std::vector<double> p0 = o->p0.empty() ? std::vector<double>(d, 0.0) : o->p0;
            if (p->dim == 2 && o->x0.empty()) x0 = {0.6, 0.5};
            if (x0.size() != d || p0.size() != d) throw UsageError("--x0 and --p0 need --dim components");
            PdeCoeffs c = p->coeffs();
            if (o->grid) {
              c.rho_field.reset();
              c.b_field.reset();
            }
            const auto traj = integrate_characteristics(c, x0, o->z0, p0, o->T, o->dt);
            auto f = detail::open_out(o->out);
            f << 's';
            for (std::size_t a = 0; a < d; ++a) f << ",x" << (a + 1);
            f << ",z";
            for (std::size_t a = 0; a < d; ++a) f << ",p" << (a + 1);
            f << '\n';
            for (const auto& st : traj) {
              f << st.s;
              for (double x : st.x) f << ',' << x;
              f << ',' << st.z;
              for (double x : st.p) f << ',' << x;
              f << '\n';
            }
            f.close();
            Sidecar s = make_sidecar(app, "characteristics");
            s.set("steps", traj.size() - 1);
            finish_sidecar(s, o->out, start);
            out << "characteristics: " << traj.size() - 1 << " steps\n";
          }};
}

}  // namespace cli

/// Parses argv, runs one subcommand, and returns the exit status.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Continuum PageRank on random directed geometric graphs", "cpr"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  int threads = 0;
  std::string config;
  app.add_option("--threads", threads, "Cap on worker threads (default: CPR_THREADS or all cores)");

  std::vector<cli::Runner> runners;
  runners.push_back(cli::add_generate(app, out));
  runners.push_back(cli::add_pagerank(app, out));
  runners.push_back(cli::add_evolve(app, out));
  runners.push_back(cli::add_solve_pde(app, out));
  runners.push_back(cli::add_converge(app, out));
  runners.push_back(cli::add_consistency(app, out));
  runners.push_back(cli::add_alpha_sweep(app, out));
  runners.push_back(cli::add_depth(app, out));
  runners.push_back(cli::add_characteristics(app, out));
  for (auto& r : runners) {
    r.app->add_option("--config", config, "key=value file; command-line flags take precedence");
    r.app->add_option("--threads", threads, "Cap on worker threads");
  }

  auto usage_error = [&](const std::string& msg) {
    err << "error: " << msg << "\n";
    err << "usage: cpr [--threads N] {generate|pagerank|evolve|solve-pde|converge|consistency|alpha-sweep|depth|"
           "characteristics} [options]; see cpr <subcommand> --help\n";
    return 2;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface here as well.
    if (e.get_exit_code() == 0) {
      for (auto& r : runners)
        if (r.app->parsed()) {
          out << r.app->help();
          return 0;
        }
      out << app.help();
      return 0;
    }
    return usage_error(e.what());
  }

  apply_thread_env();
  if (threads > 0) set_thread_cap(threads);

  for (auto& r : runners) {
    if (!r.app->parsed()) continue;
    try {
      cli::apply_config_file(r.app, config, err);
      r.run();
      return 0;
    } catch (const cli::UsageError& e) {
      return usage_error(e.what());
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (char& c : msg)
        if (c == '\n') c = ' ';
      err << "error: " << msg << '\n';
      return 1;
    }
  }
  return usage_error("no subcommand given");
}

}  // namespace cpr
