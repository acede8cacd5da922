#pragma once

// Torus arithmetic and i.i.d. sampling of point clouds on T^d = R^d / Z^d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/fields.hpp"
#include "cpr/random.hpp"

namespace cpr {

/// Reduces a finite real modulo 1 into [0, 1).
inline double wrap_coord(double c) {
  double r = c - std::floor(c);
  // c slightly below an integer can round up to exactly 1.
  if (r >= 1.0) r = 0.0;
  return r;
}

/// A point of the fundamental domain [0,1)^d.
class TorusPoint {
 public:
  TorusPoint() = default;
  explicit TorusPoint(std::vector<double> coords) : coords_(std::move(coords)) {
    for (double c : coords_) {
      if (!(c >= 0.0 && c < 1.0)) throw InvalidArgument("TorusPoint: coordinate outside [0,1)");
    }
  }

  int dim() const noexcept { return static_cast<int>(coords_.size()); }
  double operator[](std::size_t i) const { return coords_[i]; }
  CSpan coords() const noexcept { return coords_; }
  operator CSpan() const noexcept { return coords_; }  // NOLINT(google-explicit-constructor)

  friend bool operator==(const TorusPoint&, const TorusPoint&) = default;

 private:
  std::vector<double> coords_;
};

inline TorusPoint wrap(CSpan v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw InvalidArgument("wrap: non-finite component");
    out[i] = wrap_coord(v[i]);
  }
  return TorusPoint(std::move(out));
}

inline TorusPoint wrap(std::initializer_list<double> v) { return wrap(CSpan(v.begin(), v.size())); }

/// Minimal-image representative of y - x, each component in [-1/2, 1/2).
inline Vec torus_displacement(CSpan x, CSpan y) {
  if (x.size() != y.size()) throw InvalidArgument("torus_displacement: dimension mismatch");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = min_image(y[i] - x[i]);
  return out;
}

/// Flat row-major storage of n points in [0,1)^d.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(int dim) : dim_(dim) {
    if (dim < 1) throw InvalidArgument("PointCloud: dimension must be positive");
  }
  PointCloud(int dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    if (dim < 1) throw InvalidArgument("PointCloud: dimension must be positive");
    if (coords_.size() % static_cast<std::size_t>(dim) != 0) {
      throw InvalidArgument("PointCloud: coordinate count not a multiple of dimension");
    }
    for (double& c : coords_) {
      if (!std::isfinite(c)) throw InvalidArgument("PointCloud: non-finite coordinate");
      c = wrap_coord(c);
    }
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(dim_); }
  bool empty() const noexcept { return coords_.empty(); }

  CSpan operator[](std::size_t i) const {
    const auto d = static_cast<std::size_t>(dim_);
    return CSpan(coords_.data() + i * d, d);
  }

  void push_back(const TorusPoint& p) {
    if (p.dim() != dim_) throw InvalidArgument("PointCloud: dimension mismatch");
    coords_.insert(coords_.end(), p.coords().begin(), p.coords().end());
  }

  const std::vector<double>& raw() const noexcept { return coords_; }

 private:
  int dim_ = 0;
  std::vector<double> coords_;
};

/// Sampling density on T^d with known bounds.
class DensitySpec {
 public:
  DensitySpec() = default;
  DensitySpec(ScalarField rho, double rho_min, double rho_max, std::string name = {})
      : rho_(std::move(rho)), rho_min_(rho_min), rho_max_(rho_max), name_(std::move(name)) {
    if (name_.empty()) name_ = rho_.name();
    if (!(rho_min_ > 0.0)) throw InvalidArgument("DensitySpec: rho_min must be positive");
    if (!(rho_max_ >= rho_min_) || !std::isfinite(rho_max_)) {
      throw InvalidArgument("DensitySpec: rho_max must be finite and >= rho_min");
    }
    spot_check();
  }

  static DensitySpec uniform(int dim) { return DensitySpec(ScalarField::constant(dim, 1.0), 1.0, 1.0, "uniform"); }

  /// rho(x) = 1 + amplitude * cos(2 pi x_axis), |amplitude| < 1. Has unit mass.
  static DensitySpec cosine_bump(int dim, double amplitude, int axis = 0) {
    if (!(std::abs(amplitude) < 1.0)) throw InvalidArgument("cosine_bump: |amplitude| must be < 1");
    auto p = TrigPolynomial::constant(dim, 1.0) + TrigPolynomial::mode(dim, axis, 1, amplitude);
    const double a = std::abs(amplitude);
    return DensitySpec(ScalarField::trig(p, "cosine-bump"), 1.0 - a, 1.0 + a, "cosine-bump");
  }

  int dim() const noexcept { return rho_.dim(); }
  const ScalarField& rho() const noexcept { return rho_; }
  double rho_min() const noexcept { return rho_min_; }
  double rho_max() const noexcept { return rho_max_; }
  const std::string& name() const noexcept { return name_; }
  double operator()(CSpan x) const { return rho_(x); }

 private:
  // Bounds are checked on a regular grid of at most 4096 nodes.
  void spot_check() const {
    const int d = rho_.dim();
    const int per_axis = std::max(2, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / d))));
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(per_axis);
    Vec x(static_cast<std::size_t>(d));
    constexpr double slack = 1e-12;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rem = idx;
      for (int i = 0; i < d; ++i) {
        x[static_cast<std::size_t>(i)] = static_cast<double>(rem % per_axis) / per_axis;
        rem /= static_cast<std::size_t>(per_axis);
      }
      const double r = rho_(x);
      if (!(r >= rho_min_ - slack && r <= rho_max_ + slack)) {
        throw InvalidArgument("DensitySpec: rho outside [rho_min, rho_max] at a grid node (value " +
                              std::to_string(r) + ")");
      }
    }
  }

  ScalarField rho_;
  double rho_min_ = 1.0;
  double rho_max_ = 1.0;
  std::string name_;
};

namespace detail {
inline constexpr std::size_t kSampleBlock = 4096;
}

/// n i.i.d. points from `spec` by rejection against rho_max. Points are produced
/// in blocks of 4096, each block drawing from its own sub-stream of `seed`, so
/// the output depends only on (spec, n, seed).
inline PointCloud sample_density(const DensitySpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_density: n must be at least 1");
  const int d = spec.dim();
  const auto du = static_cast<std::size_t>(d);
  std::vector<double> coords(n * du);
  const std::size_t blocks = (n + detail::kSampleBlock - 1) / detail::kSampleBlock;
  const double rho_max = spec.rho_max();
  bool violated = false;
  double bad_value = 0.0;

#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(blocks); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    Rng rng(seed, b);
    Vec x(du);
    const std::size_t begin = b * detail::kSampleBlock;
    const std::size_t end = std::min(n, begin + detail::kSampleBlock);
    for (std::size_t i = begin; i < end;) {
      for (auto& c : x) c = rng.uniform();
      const double r = spec(x);
      if (r > rho_max) {
#pragma omp critical
        {
          violated = true;
          bad_value = r;
        }
        break;
      }
      if (rng.uniform() * rho_max < r) {
        std::copy(x.begin(), x.end(), coords.begin() + static_cast<std::ptrdiff_t>(i * du));
        ++i;
      }
    }
  }
  if (violated) {
    throw ContractViolation("sample_density: rho(x) = " + std::to_string(bad_value) + " exceeds rho_max = " +
                            std::to_string(rho_max));
  }
  return PointCloud(d, std::move(coords));
}

inline PointCloud sample_uniform(int dim, std::size_t n, std::uint64_t seed) {
  return sample_density(DensitySpec::uniform(dim), n, seed);
}

}  // namespace cpr
