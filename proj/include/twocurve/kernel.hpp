#pragma once

// Between-group covariance Sigma and within-group triangular (Markov) kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "twocurve/basis.hpp"
#include "twocurve/error.hpp"
#include "twocurve/linalg.hpp"
#include "twocurve/model.hpp"

namespace twocurve {

/// Sigma = [[s1^2, s1 s2 rho], [s1 s2 rho, s2^2]] with cached root and inverses.
class GroupCovariance {
 public:
  GroupCovariance(double sigma1, double sigma2, double rho)
      : sigma1_(sigma1), sigma2_(sigma2), rho_(rho) {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !std::isfinite(sigma1) || !std::isfinite(sigma2))
      throw config_error("group standard deviations must be positive and finite");
    if (!(std::abs(rho) < 1.0)) throw config_error("correlation rho must lie in (-1, 1)");
    const double c = sigma1 * sigma2 * rho;
    sigma_ << sigma1 * sigma1, c, c, sigma2 * sigma2;
    inverse_ = sigma_.inverse();
    sqrt_ = symmetric_sqrt(sigma_);
    inv_sqrt_ = symmetric_sqrt(inverse_);
  }

  static GroupCovariance identity() { return {1.0, 1.0, 0.0}; }
  static GroupCovariance unit_correlated(double rho) { return {1.0, 1.0, rho}; }

  double sigma1() const { return sigma1_; }
  double sigma2() const { return sigma2_; }
  double rho() const { return rho_; }
  double sigma(int group) const { return group == 1 ? sigma1_ : sigma2_; }
  double determinant() const { return sigma1_ * sigma1_ * sigma2_ * sigma2_ * (1.0 - rho_ * rho_); }

  const Mat2& matrix() const { return sigma_; }
  const Mat2& inverse() const { return inverse_; }
  const Mat2& sqrt() const { return sqrt_; }
  const Mat2& inv_sqrt() const { return inv_sqrt_; }

 private:
  double sigma1_, sigma2_, rho_;
  Mat2 sigma_, inverse_, sqrt_, inv_sqrt_;
};

/// Symmetric positive definite square root of Sigma.
inline Mat2 sigma_sqrt(const GroupCovariance& gc) { return gc.sqrt(); }

/// Corr(Y_1(tj), Y_2(tk)) = rho * sqrt(min(tj,tk) / max(tj,tk)) under Brownian errors.
inline double cross_correlation(const GroupCovariance& gc, double tj, double tk) {
  if (!(tj > 0.0) || !(tk > 0.0)) throw config_error("cross_correlation: times must be positive");
  return gc.rho() * std::sqrt(std::min(tj, tk) / std::max(tj, tk));
}

/// Gram matrix min(t_j, t_k) of Brownian motion at strictly increasing times.
inline Mat brownian_gram(std::span<const double> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i] < 0.0) throw config_error("brownian_gram: times must be nonnegative");
    if (i > 0 && !(points[i] > points[i - 1]))
      throw config_error("brownian_gram: times must be strictly increasing");
  }
  const auto n = static_cast<Eigen::Index>(points.size());
  Mat g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) g(j, k) = std::min(points[j], points[k]);
  return g;
}

/// Triangular kernel K(s,t) = u(min(s,t)) v(max(s,t)) = v(s) v(t) min{q(s), q(t)},
/// q = u / v positive and strictly increasing.
struct TriangularKernel {
  using Fn = std::function<double(double)>;

  std::string name;
  Fn u, v, udot, vdot;
  Fn q_inverse;  ///< closed form when known; otherwise solved numerically

  double q(double t) const { return u(t) / v(t); }
  double operator()(double s, double t) const { return u(std::min(s, t)) * v(std::max(s, t)); }

  bool is_brownian() const { return name == "brownian"; }

  /// Standard Brownian motion: u(t) = t, v(t) = 1.
  static TriangularKernel brownian() {
    return {"brownian", [](double t) { return t; }, [](double) { return 1.0; },
            [](double) { return 1.0; }, [](double) { return 0.0; }, [](double x) { return x; }};
  }

  /// c * min(s, t): u(t) = c t, v(t) = 1.
  static TriangularKernel scaled_brownian(double c) {
    if (!(c > 0.0)) throw config_error("scaled_brownian: scale must be positive");
    return {"scaled_brownian", [c](double t) { return c * t; }, [](double) { return 1.0; },
            [c](double) { return c; }, [](double) { return 0.0; }, [c](double x) { return x / c; }};
  }

  /// exp(-lambda |t - s|): u(t) = e^{lambda t}, v(t) = e^{-lambda t}, q(t) = e^{2 lambda t}.
  static TriangularKernel ornstein_uhlenbeck(double lambda) {
    if (!(lambda > 0.0)) throw config_error("ornstein_uhlenbeck: lambda must be positive");
    return {"ornstein_uhlenbeck",
            [lambda](double t) { return std::exp(lambda * t); },
            [lambda](double t) { return std::exp(-lambda * t); },
            [lambda](double t) { return lambda * std::exp(lambda * t); },
            [lambda](double t) { return -lambda * std::exp(-lambda * t); },
            [lambda](double x) { return std::log(x) / (2.0 * lambda); }};
  }

  /// u and v from the basis catalog; q^{-1} found numerically.
  static TriangularKernel from_terms(const BasisTerm& u, const BasisTerm& v) {
    return {"triangular", [u](double t) { return u.value(t); }, [v](double t) { return v.value(t); },
            [u](double t) { return u.derivative(t); }, [v](double t) { return v.derivative(t); },
            nullptr};
  }
};

/// Maps between observation time t and Brownian time t~ = q(t), and rescales
/// observations Y~(t~) = Y(t) / v(t).
struct TimeMap {
  std::function<double(double)> forward;  ///< t -> q(t)
  std::function<double(double)> inverse;  ///< t~ -> q^{-1}(t~)
  std::function<double(double)> scale;    ///< v(t), in observation time

  static TimeMap identity() {
    return {[](double t) { return t; }, [](double t) { return t; }, [](double) { return 1.0; }};
  }
};

struct BrownianForm {
  CompositeModel model;  ///< on [q(a), q(b)] with Brownian errors, same theta
  TimeMap map;
};

/// Checks that q is positive and strictly increasing and v nonvanishing on a
/// 500-point grid over the interval.
inline void validate_kernel(const TriangularKernel& k, const Interval& iv) {
  constexpr int kPoints = 500;
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kPoints; ++i) {
    const double t = iv.a + (iv.b - iv.a) * i / (kPoints - 1);
    const double v = k.v(t);
    if (!(std::abs(v) > 0.0) || !std::isfinite(v)) {
      std::ostringstream os;
      os << "kernel '" << k.name << "': v vanishes at t = " << t;
      throw config_error(os.str());
    }
    const double q = k.q(t);
    if (!(q > 0.0) || !(q > prev) || !std::isfinite(q)) {
      std::ostringstream os;
      os << "kernel '" << k.name << "': q = u/v must be positive and strictly increasing (fails at t = "
         << t << ")";
      throw config_error(os.str());
    }
    prev = q;
  }
}

namespace detail {

/// Inverts a strictly increasing q on [a,b] by bisection.
inline double invert_increasing(const std::function<double(double)>& q, double a, double b, double y) {
  double lo = a, hi = b;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (q(mid) < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Rewrites a model with triangular-kernel errors as an equivalent model with
/// Brownian errors on [q(a), q(b)]:
///   F~(t~) = F(q^{-1}(t~)) / v(q^{-1}(t~)),  Y~(t~) = Y(q^{-1}(t~)) / v(q^{-1}(t~)).
/// The derivative is (F' v - F v') / (u' v - u v') at q^{-1}(t~).
inline BrownianForm to_brownian(const CompositeModel& model, const TriangularKernel& kernel) {
  const Interval iv = model.interval();
  validate_kernel(kernel, iv);
  auto k = std::make_shared<const TriangularKernel>(kernel);

  std::function<double(double)> forward = [k](double t) { return k->q(t); };
  std::function<double(double)> inverse;
  if (k->q_inverse) {
    inverse = k->q_inverse;
  } else {
    inverse = [k, iv](double y) {
      return detail::invert_increasing([k](double t) { return k->q(t); }, iv.a, iv.b, y);
    };
  }
  std::function<double(double)> scale = [k](double t) { return k->v(t); };

  const Interval tiv{k->q(iv.a), k->q(iv.b)};
  auto base = std::make_shared<const CompositeModel>(model);

  // Invert once and clamp to [a,b] so rounding at the end points stays inside.
  auto original_time = [inverse, iv](double s) { return std::clamp(inverse(s), iv.a, iv.b); };

  CompositeModel::MatrixFn f = [base, k, original_time](double s) {
    const double t = original_time(s);
    return MatP2(base->F(t) / k->v(t));
  };
  CompositeModel::MatrixFn fdot = [base, k, original_time](double s) {
    const double t = original_time(s);
    const double v = k->v(t), vd = k->vdot(t);
    const double jac = k->udot(t) * v - k->u(t) * vd;
    return MatP2((base->Fdot(t) * v - base->F(t) * vd) / jac);
  };
  // Panels uniform in observation time.
  std::function<double(double)> panel_map = [k, iv](double u) { return k->q(iv.a + u * (iv.b - iv.a)); };

  CompositeModel transformed(model.p(), tiv, std::move(f), std::move(fdot), model.structure(),
                             model.layout(), {}, std::move(panel_map));
  return {std::move(transformed), TimeMap{std::move(forward), std::move(inverse), std::move(scale)}};
}

}  // namespace twocurve
