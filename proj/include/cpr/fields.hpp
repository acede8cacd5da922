#pragma once

// Scalar and vector fields on the torus T^d with derivative access.
//
// Built-in fields are trigonometric polynomials (exact derivatives of every
// order) or the rotational drift with a smooth radial cutoff. Callback fields
// without analytic derivatives fall back to centered differences.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/error.hpp"

namespace cpr {

using Vec = std::vector<double>;
using CSpan = std::span<const double>;

/// Minimal-image representative of a coordinate difference, in [-1/2, 1/2).
inline double min_image(double delta) noexcept { return delta - std::floor(delta + 0.5); }

/// One term a*cos(2 pi k.x) + b*sin(2 pi k.x).
struct TrigTerm {
  std::vector<int> wave;
  double cos_coef = 0.0;
  double sin_coef = 0.0;
};

class TrigPolynomial {
 public:
  TrigPolynomial() = default;
  TrigPolynomial(int dim, std::vector<TrigTerm> terms) : dim_(dim), terms_(std::move(terms)) {
    for (const auto& t : terms_) {
      if (static_cast<int>(t.wave.size()) != dim_) {
        throw InvalidArgument("TrigPolynomial: wave vector length does not match dimension");
      }
    }
  }

  static TrigPolynomial constant(int dim, double c) {
    return TrigPolynomial(dim, {TrigTerm{std::vector<int>(static_cast<std::size_t>(dim), 0), c, 0.0}});
  }

  /// a*cos(2 pi m x_axis) + b*sin(2 pi m x_axis).
  static TrigPolynomial mode(int dim, int axis, int m, double a, double b = 0.0) {
    std::vector<int> k(static_cast<std::size_t>(dim), 0);
    k[static_cast<std::size_t>(axis)] = m;
    return TrigPolynomial(dim, {TrigTerm{std::move(k), a, b}});
  }

  int dim() const noexcept { return dim_; }
  const std::vector<TrigTerm>& terms() const noexcept { return terms_; }

  double operator()(CSpan x) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      double phase = 0.0;
      for (int i = 0; i < dim_; ++i) phase += t.wave[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      phase *= 2.0 * std::numbers::pi;
      if (t.cos_coef != 0.0) s += t.cos_coef * std::cos(phase);
      if (t.sin_coef != 0.0) s += t.sin_coef * std::sin(phase);
    }
    return s;
  }

  TrigPolynomial derivative(int axis) const {
    std::vector<TrigTerm> out;
    for (const auto& t : terms_) {
      const double f = 2.0 * std::numbers::pi * t.wave[static_cast<std::size_t>(axis)];
      if (f == 0.0) continue;
      out.push_back(TrigTerm{t.wave, f * t.sin_coef, -f * t.cos_coef});
    }
    if (out.empty()) return constant(dim_, 0.0);
    return TrigPolynomial(dim_, std::move(out));
  }

  TrigPolynomial operator+(const TrigPolynomial& o) const {
    auto terms = terms_;
    terms.insert(terms.end(), o.terms_.begin(), o.terms_.end());
    return TrigPolynomial(dim_, std::move(terms));
  }

  TrigPolynomial operator*(double c) const {
    auto terms = terms_;
    for (auto& t : terms) {
      t.cos_coef *= c;
      t.sin_coef *= c;
    }
    return TrigPolynomial(dim_, std::move(terms));
  }

  /// Upper bound on sup |p|.
  double abs_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::hypot(t.cos_coef, t.sin_coef);
    return s;
  }

 private:
  int dim_ = 0;
  std::vector<TrigTerm> terms_;
};

/// Real-valued field on T^d.
class ScalarField {
 public:
  using ValueFn = std::function<double(CSpan)>;
  /// Writes d (gradient) or d*d row-major (hessian) values into the output span.
  using DerivFn = std::function<void(CSpan, std::span<double>)>;

  ScalarField() = default;
  ScalarField(int dim, std::string name, ValueFn value, DerivFn gradient = {}, DerivFn hessian = {})
      : dim_(dim),
        name_(std::move(name)),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        hessian_(std::move(hessian)) {
    if (!value_) throw InvalidArgument("ScalarField: empty value callback");
  }

  static ScalarField trig(const TrigPolynomial& p, std::string name) {
    const int d = p.dim();
    std::vector<TrigPolynomial> grad;
    std::vector<TrigPolynomial> hess;
    for (int i = 0; i < d; ++i) grad.push_back(p.derivative(i));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) hess.push_back(grad[static_cast<std::size_t>(i)].derivative(j));
    ScalarField f(
        d, std::move(name), [p](CSpan x) { return p(x); },
        [grad](CSpan x, std::span<double> out) {
          for (std::size_t i = 0; i < grad.size(); ++i) out[i] = grad[i](x);
        },
        [hess](CSpan x, std::span<double> out) {
          for (std::size_t i = 0; i < hess.size(); ++i) out[i] = hess[i](x);
        });
    f.bound_ = p.abs_bound();
    return f;
  }

  static ScalarField constant(int dim, double c) {
    auto f = trig(TrigPolynomial::constant(dim, c), "const(" + std::to_string(c) + ")");
    return f;
  }

  int dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }
  bool has_analytic_derivatives() const noexcept { return gradient_ && hessian_; }
  /// Upper bound on sup |f| when known (trigonometric fields), otherwise NaN.
  double abs_bound() const noexcept { return bound_; }

  double operator()(CSpan x) const { return value_(x); }

  Vec gradient(CSpan x) const {
    Vec g(static_cast<std::size_t>(dim_));
    if (gradient_) {
      gradient_(x, g);
      return g;
    }
    constexpr double step = 1e-5;
    Vec p(x.begin(), x.end());
    for (int i = 0; i < dim_; ++i) {
      const auto k = static_cast<std::size_t>(i);
      p[k] = x[k] + step;
      const double up = value_(p);
      p[k] = x[k] - step;
      const double dn = value_(p);
      p[k] = x[k];
      g[k] = (up - dn) / (2.0 * step);
    }
    return g;
  }

  Vec hessian(CSpan x) const {
    const auto d = static_cast<std::size_t>(dim_);
    Vec hs(d * d);
    if (hessian_) {
      hessian_(x, hs);
      return hs;
    }
    constexpr double step = 1e-4;
    Vec p(x.begin(), x.end());
    for (std::size_t j = 0; j < d; ++j) {
      p[j] = x[j] + step;
      const Vec up = gradient(p);
      p[j] = x[j] - step;
      const Vec dn = gradient(p);
      p[j] = x[j];
      for (std::size_t i = 0; i < d; ++i) hs[i * d + j] = (up[i] - dn[i]) / (2.0 * step);
    }
    return hs;
  }

  double laplacian(CSpan x) const {
    const Vec hs = hessian(x);
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += hs[static_cast<std::size_t>(i * dim_ + i)];
    return s;
  }

 private:
  int dim_ = 0;
  std::string name_;
  ValueFn value_;
  DerivFn gradient_;
  DerivFn hessian_;
  double bound_ = std::numeric_limits<double>::quiet_NaN();
};

/// Vector field b: T^d -> R^d with Jacobian (row-major, J[i*d+j] = d b_i / d x_j)
/// and gradient of the divergence.
class VectorField {
 public:
  using ValueFn = std::function<void(CSpan, std::span<double>)>;

  VectorField() = default;
  VectorField(int dim, std::string name, double sup_bound, ValueFn value, ValueFn jacobian, ValueFn grad_div)
      : dim_(dim),
        name_(std::move(name)),
        sup_bound_(sup_bound),
        value_(std::move(value)),
        jacobian_(std::move(jacobian)),
        grad_div_(std::move(grad_div)) {}

  /// Componentwise trigonometric field; all derivatives exact.
  static VectorField trig(std::vector<TrigPolynomial> comps, std::string name) {
    const auto d = comps.size();
    if (d == 0) throw InvalidArgument("VectorField: no components");
    std::vector<TrigPolynomial> jac;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) jac.push_back(comps[i].derivative(static_cast<int>(j)));
    // d/dx_j div b = sum_i d^2 b_i / dx_j dx_i
    std::vector<TrigPolynomial> gdiv;
    for (std::size_t j = 0; j < d; ++j) {
      TrigPolynomial acc = TrigPolynomial::constant(static_cast<int>(d), 0.0);
      for (std::size_t i = 0; i < d; ++i) acc = acc + jac[i * d + i].derivative(static_cast<int>(j));
      gdiv.push_back(acc);
    }
    double bound2 = 0.0;
    bool zero = true;
    for (const auto& c : comps) {
      bound2 += c.abs_bound() * c.abs_bound();
      if (c.abs_bound() != 0.0) zero = false;
    }
    VectorField f(
        static_cast<int>(d), std::move(name), std::sqrt(bound2),
        [comps](CSpan x, std::span<double> out) {
          for (std::size_t i = 0; i < comps.size(); ++i) out[i] = comps[i](x);
        },
        [jac](CSpan x, std::span<double> out) {
          for (std::size_t i = 0; i < jac.size(); ++i) out[i] = jac[i](x);
        },
        [gdiv](CSpan x, std::span<double> out) {
          for (std::size_t i = 0; i < gdiv.size(); ++i) out[i] = gdiv[i](x);
        });
    f.zero_ = zero;
    return f;
  }

  static VectorField zero(int dim) {
    std::vector<TrigPolynomial> comps(static_cast<std::size_t>(dim), TrigPolynomial::constant(dim, 0.0));
    return trig(std::move(comps), "zero");
  }

  static VectorField constant(const Vec& c) {
    const int d = static_cast<int>(c.size());
    std::vector<TrigPolynomial> comps;
    for (double ci : c) comps.push_back(TrigPolynomial::constant(d, ci));
    return trig(std::move(comps), "constant");
  }

  /// b = grad s.
  static VectorField gradient_of(const TrigPolynomial& s) {
    std::vector<TrigPolynomial> comps;
    for (int i = 0; i < s.dim(); ++i) comps.push_back(s.derivative(i));
    return trig(std::move(comps), "gradient");
  }

  /// Rigid rotation about `center` with unit angular speed, b = chi(r) (-(x2-c2), x1-c1),
  /// where chi is a C-infinity cutoff equal to 1 for r <= r_inner and 0 for r >= r_outer.
  /// Two dimensions only; r_outer < 1/2 keeps the field smooth across the torus seam.
  static VectorField rotational(Vec center = {0.5, 0.5}, double r_inner = 0.3, double r_outer = 0.45) {
    if (center.size() != 2) throw InvalidArgument("rotational drift is two-dimensional");
    if (!(0.0 < r_inner && r_inner < r_outer && r_outer < 0.5)) {
      throw InvalidArgument("rotational drift needs 0 < r_inner < r_outer < 1/2");
    }
    struct Cutoff {
      double r0, r1;
      static double f(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
      static double df(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }
      std::pair<double, double> operator()(double r) const {
        if (r <= r0) return {1.0, 0.0};
        if (r >= r1) return {0.0, 0.0};
        const double a = f(r1 - r);
        const double b = f(r - r0);
        const double da = -df(r1 - r);
        const double db = df(r - r0);
        return {a / (a + b), (da * b - a * db) / ((a + b) * (a + b))};
      }
    };
    const Cutoff chi{r_inner, r_outer};
    auto rel = [center](CSpan x) {
      return std::pair<double, double>{min_image(x[0] - center[0]), min_image(x[1] - center[1])};
    };
    VectorField f(
        2, "rotational", r_outer,
        [chi, rel](CSpan x, std::span<double> out) {
          const auto [z1, z2] = rel(x);
          const double c = chi(std::hypot(z1, z2)).first;
          out[0] = -c * z2;
          out[1] = c * z1;
        },
        [chi, rel](CSpan x, std::span<double> out) {
          const auto [z1, z2] = rel(x);
          const double r = std::hypot(z1, z2);
          const auto [c, dc] = chi(r);
          const double g1 = r > 0.0 ? dc * z1 / r : 0.0;
          const double g2 = r > 0.0 ? dc * z2 / r : 0.0;
          out[0] = -g1 * z2;
          out[1] = -g2 * z2 - c;
          out[2] = g1 * z1 + c;
          out[3] = g2 * z1;
        },
        // div b vanishes identically: grad chi is radial and (-z2, z1) is tangential.
        [](CSpan, std::span<double> out) { out[0] = out[1] = 0.0; });
    return f;
  }

  int dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }
  double sup_bound() const noexcept { return sup_bound_; }
  bool is_zero() const noexcept { return zero_; }

  Vec operator()(CSpan x) const {
    Vec out(static_cast<std::size_t>(dim_));
    value_(x, out);
    return out;
  }
  void eval(CSpan x, std::span<double> out) const { value_(x, out); }

  Vec jacobian(CSpan x) const {
    Vec out(static_cast<std::size_t>(dim_ * dim_));
    jacobian_(x, out);
    return out;
  }

  double divergence(CSpan x) const {
    const Vec j = jacobian(x);
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += j[static_cast<std::size_t>(i * dim_ + i)];
    return s;
  }

  Vec grad_div(CSpan x) const {
    Vec out(static_cast<std::size_t>(dim_));
    grad_div_(x, out);
    return out;
  }

 private:
  int dim_ = 0;
  std::string name_;
  double sup_bound_ = 0.0;
  bool zero_ = false;
  ValueFn value_;
  ValueFn jacobian_;
  ValueFn grad_div_;
};

}  // namespace cpr
