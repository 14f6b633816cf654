#pragma once

// Composite Gauss-Legendre quadrature for scalar- and matrix-valued integrands.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "twocurve/linalg.hpp"

namespace twocurve {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

/// Nodes and weights of the n-point Gauss-Legendre rule (Newton iteration on P_n).
inline GaussLegendreRule gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
  GaussLegendreRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute the derivative at the converged node
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = pk;
    }
    dp = n == 1 ? 1.0 : static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

inline const GaussLegendreRule& gauss_legendre_32() {
  static const GaussLegendreRule rule = gauss_legendre(32);
  return rule;
}

namespace detail {

inline double max_abs(double x) { return std::abs(x); }
inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

template <class F>
using integrand_result_t = std::decay_t<decltype(std::declval<F&>()(0.0))>;

}  // namespace detail

/// Integrate f over consecutive panels [edges[k], edges[k+1]].
/// `reverse` visits the panels last-to-first; the result must not depend on it
/// beyond rounding.
template <class F>
auto integrate_panels(F&& f, const std::vector<double>& edges, const GaussLegendreRule& rule,
                      bool reverse = false) -> detail::integrand_result_t<F> {
  using R = detail::integrand_result_t<F>;
  if (edges.size() < 2) throw std::invalid_argument("integrate_panels: need at least one panel");
  const std::size_t panels = edges.size() - 1;
  R total{};
  bool first = true;
  for (std::size_t pi = 0; pi < panels; ++pi) {
    const std::size_t k = reverse ? panels - 1 - pi : pi;
    const double lo = edges[k], hi = edges[k + 1];
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    R panel{};
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      R v = f(mid + half * rule.nodes[i]);
      if (i == 0) panel = rule.weights[i] * v;
      else panel += rule.weights[i] * v;
    }
    if (first) {
      total = half * panel;
      first = false;
    } else {
      total += half * panel;
    }
  }
  return total;
}

struct QuadratureOptions {
  std::size_t nodes = 32;
  std::size_t panels = 64;
  double tolerance = 1e-10;  ///< per entry, relative to max(1, largest |entry|)
  std::size_t max_doublings = 4;
  bool reverse_panels = false;
  /// Optional monotone map [0,1] -> [a,b] placing panel edges; uniform when empty.
  std::function<double(double)> panel_map;
};

template <class R>
struct QuadratureResult {
  R value;
  double error = 0.0;      ///< max |entry| change under panel doubling
  std::size_t panels = 0;  ///< panels used for `value`
  bool converged = false;
};

inline std::vector<double> panel_edges(double a, double b, std::size_t panels,
                                       const std::function<double(double)>& map) {
  std::vector<double> edges(panels + 1);
  for (std::size_t k = 0; k <= panels; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(panels);
    edges[k] = map ? map(u) : a + u * (b - a);
  }
  edges.front() = a;
  edges.back() = b;
  return edges;
}

/// Composite Gauss-Legendre with a panel-doubling error estimate. Doubles the
/// panel count until successive estimates agree to the tolerance or
/// max_doublings is reached; the finer estimate is returned either way.
template <class F>
auto integrate(F&& f, double a, double b, const QuadratureOptions& opt = {})
    -> QuadratureResult<detail::integrand_result_t<F>> {
  using R = detail::integrand_result_t<F>;
  const GaussLegendreRule local = opt.nodes == 32 ? GaussLegendreRule{} : gauss_legendre(opt.nodes);
  const GaussLegendreRule& rule = opt.nodes == 32 ? gauss_legendre_32() : local;
  std::size_t panels = opt.panels;
  R coarse = integrate_panels(f, panel_edges(a, b, panels, opt.panel_map), rule, opt.reverse_panels);
  QuadratureResult<R> out{coarse, 0.0, panels, false};
  for (std::size_t d = 0; d <= opt.max_doublings; ++d) {
    panels *= 2;
    R fine = integrate_panels(f, panel_edges(a, b, panels, opt.panel_map), rule, opt.reverse_panels);
    R diff = fine - coarse;
    const double err = detail::max_abs(diff);
    const double scale = std::max(1.0, detail::max_abs(fine));
    out.value = fine;
    out.error = err;
    out.panels = panels;
    if (err <= opt.tolerance * scale) {
      out.converged = true;
      break;
    }
    coarse = fine;
  }
  return out;
}

}  // namespace twocurve
