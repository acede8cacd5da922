#pragma once

// Radial kernel profiles, their moments, and the directed edge weight
//   w(x, y) = Phi(|B(x) (y - x - eps b(x))| / h)
// on the torus.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "cpr/error.hpp"
#include "cpr/fields.hpp"
#include "cpr/geometry.hpp"

namespace cpr {

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double unit_sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

enum class ProfileKind { indicator, bump, custom };

/// Normalized radial kernel Phi with int_{B(0,2)} Phi(|z|) dz = 1.
class KernelSpec {
 public:
  using Profile = std::function<double(double)>;

  /// Phi = const on [0, 1], zero beyond.
  static KernelSpec indicator(int dim) { return KernelSpec(ProfileKind::indicator, dim, {}, 1.0, "indicator"); }

  /// Phi proportional to exp(-1 / (1 - (t/2)^2)) on [0, 2).
  static KernelSpec bump(int dim) { return KernelSpec(ProfileKind::bump, dim, {}, 2.0, "bump"); }

  /// Arbitrary nonnegative nonincreasing profile supported in [0, support_radius],
  /// support_radius <= 2. Rescaled to unit mass.
  static KernelSpec custom(int dim, Profile raw, double support_radius, std::string name = "custom") {
    return KernelSpec(ProfileKind::custom, dim, std::move(raw), support_radius, std::move(name));
  }

  static KernelSpec by_name(const std::string& name, int dim) {
    if (name == "indicator") return indicator(dim);
    if (name == "bump") return bump(dim);
    throw InvalidArgument("unknown kernel profile '" + name + "' (expected indicator or bump)");
  }

  int dim() const noexcept { return dim_; }
  ProfileKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  double support_radius() const noexcept { return support_; }
  double sigma_phi() const noexcept { return sigma_phi_; }
  double mass() const noexcept { return mass_; }
  /// Factor applied to the raw profile.
  double scale() const noexcept { return scale_; }

  /// Normalized Phi(t) for t >= 0 (no argument check; see kernel_eval).
  double operator()(double t) const {
    switch (kind_) {
      case ProfileKind::indicator:
        return t <= 1.0 ? scale_ : 0.0;
      case ProfileKind::bump:
        return t < 2.0 ? scale_ * std::exp(-1.0 / (1.0 - 0.25 * t * t)) : 0.0;
      case ProfileKind::custom:
        return t <= support_ ? scale_ * raw_(t) : 0.0;
    }
    return 0.0;
  }

  double raw(double t) const {
    switch (kind_) {
      case ProfileKind::indicator:
        return t <= 1.0 ? 1.0 : 0.0;
      case ProfileKind::bump:
        return t < 2.0 ? std::exp(-1.0 / (1.0 - 0.25 * t * t)) : 0.0;
      case ProfileKind::custom:
        return t <= support_ ? raw_(t) : 0.0;
    }
    return 0.0;
  }

 private:
  KernelSpec(ProfileKind kind, int dim, Profile raw, double support, std::string name)
      : kind_(kind), dim_(dim), raw_(std::move(raw)), support_(support), name_(std::move(name)) {
    if (dim_ < 1) throw InvalidArgument("KernelSpec: dimension must be positive");
    if (!(support_ > 0.0 && support_ <= 2.0)) throw InvalidArgument("KernelSpec: support radius must lie in (0, 2]");
    if (kind_ == ProfileKind::custom) validate_profile();
    const double area = unit_sphere_area(dim_);
    if (kind_ == ProfileKind::indicator) {
      // volume of the unit ball
      scale_ = 1.0 / (area / dim_);
    } else {
      scale_ = 1.0 / (area * radial_moment(dim_ - 1));
    }
    mass_ = area * scale_ * radial_moment(dim_ - 1);
    sigma_phi_ = area * scale_ * radial_moment(dim_ + 1) / dim_;
  }

  // int_0^R raw(r) r^p dr, adaptive Gauss-Kronrod, absolute tolerance 1e-8 or better.
  double radial_moment(int p) const {
    auto f = [this, p](double r) { return raw(r) * std::pow(r, p); };
    if (kind_ == ProfileKind::indicator) {
      return 1.0 / (p + 1);
    }
    double err = 0.0;
    const double val =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, support_, 20, 1e-13, &err);
    if (!(err <= 1e-8)) throw ConfigError("KernelSpec: radial quadrature did not reach tolerance");
    return val;
  }

  void validate_profile() const {
    if (!raw_) throw InvalidArgument("KernelSpec: empty profile");
    if (!(raw_(0.0) > 0.0)) throw InvalidArgument("KernelSpec: profile must satisfy Phi(0) > 0");
    double prev = raw_(0.0);
    constexpr int samples = 2000;
    for (int i = 1; i <= samples; ++i) {
      const double t = support_ * i / samples;
      const double val = raw_(t);
      if (val < 0.0) throw InvalidArgument("KernelSpec: profile must be nonnegative");
      if (val > prev * (1.0 + 1e-12) + 1e-300) throw InvalidArgument("KernelSpec: profile must be nonincreasing");
      prev = val;
    }
  }

  ProfileKind kind_;
  int dim_;
  Profile raw_;
  double support_;
  std::string name_;
  double scale_ = 1.0;
  double mass_ = 1.0;
  double sigma_phi_ = 0.0;
};

inline double kernel_eval(const KernelSpec& spec, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("kernel_eval: argument must be nonnegative");
  return spec(t);
}

/// sigma_Phi = int Phi(|z|) z_1^2 dz.
inline double sigma_phi(const KernelSpec& spec) { return spec.sigma_phi(); }

/// Drift b and anisotropy B of a directed geometric graph.
class DriftSpec {
 public:
  /// Row-major d x d matrix at x.
  using MatrixField = std::function<void(CSpan, std::span<double>)>;

  DriftSpec() = default;
  explicit DriftSpec(VectorField b) : b_(std::move(b)), b_sup_(b_.sup_bound()) {}
  DriftSpec(VectorField b, MatrixField B, double binv_sup)
      : b_(std::move(b)), B_(std::move(B)), b_sup_(b_.sup_bound()), binv_sup_(binv_sup) {
    if (!(binv_sup_ > 0.0)) throw InvalidArgument("DriftSpec: Binv_sup must be positive");
  }

  static DriftSpec none(int dim) { return DriftSpec(VectorField::zero(dim)); }

  /// Constant anisotropy matrix; Binv_sup is computed from the matrix.
  static DriftSpec with_constant_matrix(VectorField b, std::vector<double> matrix) {
    const int d = b.dim();
    if (matrix.size() != static_cast<std::size_t>(d * d)) throw InvalidArgument("DriftSpec: matrix size mismatch");
    const double binv = inverse_norm_bound(matrix, d);
    auto fn = [matrix](CSpan, std::span<double> out) { std::copy(matrix.begin(), matrix.end(), out.begin()); };
    return DriftSpec(std::move(b), fn, binv);
  }

  int dim() const noexcept { return b_.dim(); }
  const VectorField& b() const noexcept { return b_; }
  bool identity_matrix() const noexcept { return !B_; }
  double b_sup() const noexcept { return b_sup_; }
  double binv_sup() const noexcept { return binv_sup_; }

  /// B(x) into `out`; throws ConfigError if B(x) is (numerically) singular.
  void matrix(CSpan x, std::span<double> out) const {
    const int d = dim();
    if (!B_) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = i == j ? 1.0 : 0.0;
      return;
    }
    B_(x, out);
    if (std::abs(determinant(std::vector<double>(out.begin(), out.end()), d)) <= 1e-12) {
      throw ConfigError("DriftSpec: B(x) is singular at an evaluated point");
    }
  }

  /// Interaction radius for a kernel supported in [0, support]: the largest
  /// minimal-image displacement that can carry positive weight.
  double interaction_radius(double support, double h, double eps) const {
    return support * h * binv_sup_ + eps * b_sup_;
  }

  static double determinant(std::vector<double> m, int d) {
    double det = 1.0;
    for (int c = 0; c < d; ++c) {
      int piv = c;
      for (int r = c + 1; r < d; ++r)
        if (std::abs(m[static_cast<std::size_t>(r * d + c)]) > std::abs(m[static_cast<std::size_t>(piv * d + c)]))
          piv = r;
      const double p = m[static_cast<std::size_t>(piv * d + c)];
      if (p == 0.0) return 0.0;
      if (piv != c) {
        for (int k = 0; k < d; ++k)
          std::swap(m[static_cast<std::size_t>(piv * d + k)], m[static_cast<std::size_t>(c * d + k)]);
        det = -det;
      }
      det *= p;
      for (int r = c + 1; r < d; ++r) {
        const double f = m[static_cast<std::size_t>(r * d + c)] / p;
        for (int k = c; k < d; ++k) m[static_cast<std::size_t>(r * d + k)] -= f * m[static_cast<std::size_t>(c * d + k)];
      }
    }
    return det;
  }

 private:
  // Frobenius norm of the inverse, an upper bound on its operator norm.
  static double inverse_norm_bound(const std::vector<double>& m, int d) {
    const double det = determinant(m, d);
    if (std::abs(det) <= 1e-12) throw ConfigError("DriftSpec: B is singular");
    double fro2 = 0.0;
    for (int col = 0; col < d; ++col) {
      std::vector<double> a = m;
      std::vector<double> rhs(static_cast<std::size_t>(d), 0.0);
      rhs[static_cast<std::size_t>(col)] = 1.0;
      // Gauss-Jordan on a copy; d is tiny.
      for (int c = 0; c < d; ++c) {
        int piv = c;
        for (int r = c + 1; r < d; ++r)
          if (std::abs(a[static_cast<std::size_t>(r * d + c)]) > std::abs(a[static_cast<std::size_t>(piv * d + c)]))
            piv = r;
        for (int k = 0; k < d; ++k)
          std::swap(a[static_cast<std::size_t>(piv * d + k)], a[static_cast<std::size_t>(c * d + k)]);
        std::swap(rhs[static_cast<std::size_t>(piv)], rhs[static_cast<std::size_t>(c)]);
        const double p = a[static_cast<std::size_t>(c * d + c)];
        for (int k = 0; k < d; ++k) a[static_cast<std::size_t>(c * d + k)] /= p;
        rhs[static_cast<std::size_t>(c)] /= p;
        for (int r = 0; r < d; ++r) {
          if (r == c) continue;
          const double f = a[static_cast<std::size_t>(r * d + c)];
          for (int k = 0; k < d; ++k) a[static_cast<std::size_t>(r * d + k)] -= f * a[static_cast<std::size_t>(c * d + k)];
          rhs[static_cast<std::size_t>(r)] -= f * rhs[static_cast<std::size_t>(c)];
        }
      }
      for (double v : rhs) fro2 += v * v;
    }
    return std::sqrt(fro2);
  }

  VectorField b_;
  MatrixField B_;
  double b_sup_ = 0.0;
  double binv_sup_ = 1.0;
};

namespace detail {

/// Phi(|B (disp - shift)| / h). `matrix` is empty for B = I.
inline double weight_from_displacement(const KernelSpec& kernel, CSpan disp, CSpan shift, CSpan matrix, double h) {
  const std::size_t d = disp.size();
  double norm2 = 0.0;
  if (matrix.empty()) {
    for (std::size_t i = 0; i < d; ++i) {
      const double z = disp[i] - shift[i];
      norm2 += z * z;
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += matrix[i * d + j] * (disp[j] - shift[j]);
      norm2 += z * z;
    }
  }
  return kernel(std::sqrt(norm2) / h);
}

/// Checks the minimal-image precondition 2 h Binv_sup + eps b_sup < 1/2.
inline void check_radius(const DriftSpec& drift, double h, double eps) {
  if (!(h > 0.0)) throw ConfigError("bandwidth h must be positive");
  if (!(eps >= 0.0)) throw ConfigError("directionality eps must be nonnegative");
  const double bound = 2.0 * h * drift.binv_sup() + eps * drift.b_sup();
  if (!(bound < 0.5)) {
    throw ConfigError("interaction radius 2*h*Binv_sup + eps*b_sup = " + std::to_string(bound) +
                      " must be < 1/2 (h=" + std::to_string(h) + ", eps=" + std::to_string(eps) +
                      ", b_sup=" + std::to_string(drift.b_sup()) + ", Binv_sup=" + std::to_string(drift.binv_sup()) +
                      ")");
  }
}

}  // namespace detail

/// Weight of the directed edge x -> y.
inline double directed_weight(const KernelSpec& kernel, const DriftSpec& drift, CSpan x, CSpan y, double h,
                              double eps) {
  detail::check_radius(drift, h, eps);
  const Vec disp = torus_displacement(x, y);
  const auto d = disp.size();
  Vec shift(d, 0.0);
  if (eps != 0.0) {
    drift.b().eval(x, shift);
    for (auto& s : shift) s *= eps;
  }
  if (drift.identity_matrix()) return detail::weight_from_displacement(kernel, disp, shift, {}, h);
  Vec m(d * d);
  drift.matrix(x, m);
  return detail::weight_from_displacement(kernel, disp, shift, m, h);
}

}  // namespace cpr
