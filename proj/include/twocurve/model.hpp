#pragma once

// The composite two-group model Y(t) = F(t)^T theta + noise, with F(t) a p x 2
// matrix whose columns hold the regression functions of group 1 and group 2.

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "twocurve/basis.hpp"
#include "twocurve/error.hpp"
#include "twocurve/linalg.hpp"

namespace twocurve {

struct Interval {
  double a = 0.0;
  double b = 1.0;

  double length() const { return b - a; }
  bool contains(double t) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(b - a));
    return t >= a - slack && t <= b + slack;
  }
};

inline void validate_interval(const Interval& iv) {
  if (!std::isfinite(iv.a) || !std::isfinite(iv.b) || iv.a < 0.0 || !(iv.a < iv.b)) {
    std::ostringstream os;
    os << "degenerate interval [" << iv.a << ", " << iv.b << "] (need 0 <= a < b)";
    throw config_error(os.str());
  }
}

enum class Structure { separate, shared, general };

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::separate: return "separate";
    case Structure::shared: return "shared";
    case Structure::general: return "general";
  }
  return "?";
}

/// Parameter counts of the block layout. For separate models `shared` is 0;
/// `group1`/`group2` count the parameters owned by one group only.
struct Layout {
  std::size_t shared = 0;
  std::size_t group1 = 0;
  std::size_t group2 = 0;
};

class CompositeModel {
 public:
  using MatrixFn = std::function<MatP2(double)>;

  CompositeModel(std::size_t p, Interval interval, MatrixFn f, MatrixFn fdot, Structure structure,
                 Layout layout, std::vector<CurveBasis> bases = {},
                 std::function<double(double)> panel_map = {})
      : p_(p),
        interval_(interval),
        f_(std::move(f)),
        fdot_(std::move(fdot)),
        structure_(structure),
        layout_(layout),
        bases_(std::move(bases)),
        panel_map_(std::move(panel_map)) {}

  std::size_t p() const { return p_; }
  const Interval& interval() const { return interval_; }
  double a() const { return interval_.a; }
  double b() const { return interval_.b; }
  Structure structure() const { return structure_; }
  const Layout& layout() const { return layout_; }

  /// F(t), p x 2.
  MatP2 F(double t) const { return f_(t); }
  /// dF/dt, p x 2.
  MatP2 Fdot(double t) const { return fdot_(t); }

  /// Component bases the model was built from: {f1, f2} for separate models,
  /// {f0, f1~, f2~} for shared ones, {row1, row2} for general ones. Empty for
  /// models produced by a transform.
  const std::vector<CurveBasis>& bases() const { return bases_; }

  /// Maps [0,1] onto [a,b]; quadrature places panel edges through it.
  const std::function<double(double)>& panel_map() const { return panel_map_; }

  /// Indices into theta of the parameters of group `group` (1 or 2), i.e. the
  /// rows of F whose column `group` carries that group's regression functions.
  /// Empty optional for general models.
  std::optional<std::vector<std::size_t>> group_indices(int group) const {
    if (structure_ == Structure::general) return std::nullopt;
    if (group != 1 && group != 2) throw config_error("group must be 1 or 2");
    std::vector<std::size_t> idx(layout_.shared);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t start = group == 1 ? layout_.shared : layout_.shared + layout_.group1;
    const std::size_t count = group == 1 ? layout_.group1 : layout_.group2;
    for (std::size_t k = 0; k < count; ++k) idx.push_back(start + k);
    return idx;
  }

 private:
  std::size_t p_;
  Interval interval_;
  MatrixFn f_;
  MatrixFn fdot_;
  Structure structure_;
  Layout layout_;
  std::vector<CurveBasis> bases_;
  std::function<double(double)> panel_map_;
};

inline constexpr double kMaxGramCondition = 1e12;

/// Condition number of the diagonally scaled p x p Gram matrix
/// sum_k F(t_k) F(t_k)^T over `points` equispaced times.
inline double gram_condition(const CompositeModel& m, std::size_t points = 200) {
  const auto p = static_cast<Eigen::Index>(m.p());
  Mat gram = Mat::Zero(p, p);
  for (std::size_t k = 0; k < points; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(points - 1);
    const double t = m.panel_map() ? m.panel_map()(u) : m.a() + u * (m.b() - m.a());
    const MatP2 f = m.F(t);
    gram.noalias() += f * f.transpose();
  }
  const Vec d = gram.diagonal();
  if (d.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
  const Vec s = d.cwiseSqrt().cwiseInverse();
  return spd_condition(s.asDiagonal() * gram * s.asDiagonal());
}

inline void check_independence(const CompositeModel& m) {
  const double cond = gram_condition(m);
  if (!(cond < kMaxGramCondition)) {
    std::ostringstream os;
    os << "regression functions are numerically linearly dependent on [" << m.a() << ", "
       << m.b() << "] (Gram condition number " << cond << ")";
    throw config_error(os.str());
  }
}

namespace detail {

inline void require_defined(const CurveBasis& f, const Interval& iv, const char* role) {
  if (!f.defined_on(iv.a, iv.b)) {
    std::ostringstream os;
    os << "basis " << role << " ('" << f.name() << "') is not defined on [" << iv.a << ", " << iv.b
       << "]";
    throw config_error(os.str());
  }
}

}  // namespace detail

/// Groups without shared parameters: F(t) = [[f1, 0], [0, f2]].
inline CompositeModel build_separate(const CurveBasis& f1, const CurveBasis& f2, Interval interval) {
  validate_interval(interval);
  if (f1.empty() || f2.empty()) throw config_error("build_separate: group bases must be non-empty");
  detail::require_defined(f1, interval, "group1");
  detail::require_defined(f2, interval, "group2");
  const auto p1 = static_cast<Eigen::Index>(f1.dim());
  const auto p2 = static_cast<Eigen::Index>(f2.dim());
  auto assemble = [p1, p2](const Vec& g1, const Vec& g2) {
    MatP2 out = MatP2::Zero(p1 + p2, 2);
    out.col(0).head(p1) = g1;
    out.col(1).tail(p2) = g2;
    return out;
  };
  CompositeModel model(
      f1.dim() + f2.dim(), interval,
      [f1, f2, assemble](double t) { return assemble(f1.eval(t), f2.eval(t)); },
      [f1, f2, assemble](double t) { return assemble(f1.deriv(t), f2.deriv(t)); },
      Structure::separate, Layout{0, f1.dim(), f2.dim()}, {f1, f2});
  check_independence(model);
  return model;
}

/// Groups sharing the parameters of f0: F(t) = [[f0, f0], [f1~, 0], [0, f2~]].
/// With an empty f0 the result is the separate model of (f1~, f2~).
inline CompositeModel build_shared(const CurveBasis& f0, const CurveBasis& f1t, const CurveBasis& f2t,
                                   Interval interval) {
  if (f0.empty()) return build_separate(f1t, f2t, interval);
  validate_interval(interval);
  detail::require_defined(f0, interval, "shared");
  detail::require_defined(f1t, interval, "group1");
  detail::require_defined(f2t, interval, "group2");
  const auto p0 = static_cast<Eigen::Index>(f0.dim());
  const auto q1 = static_cast<Eigen::Index>(f1t.dim());
  const auto q2 = static_cast<Eigen::Index>(f2t.dim());
  auto assemble = [p0, q1, q2](const Vec& g0, const Vec& g1, const Vec& g2) {
    MatP2 out = MatP2::Zero(p0 + q1 + q2, 2);
    out.col(0).head(p0) = g0;
    out.col(1).head(p0) = g0;
    out.col(0).segment(p0, q1) = g1;
    out.col(1).tail(q2) = g2;
    return out;
  };
  CompositeModel model(
      f0.dim() + f1t.dim() + f2t.dim(), interval,
      [=](double t) { return assemble(f0.eval(t), f1t.eval(t), f2t.eval(t)); },
      [=](double t) { return assemble(f0.deriv(t), f1t.deriv(t), f2t.deriv(t)); },
      Structure::shared, Layout{f0.dim(), f1t.dim(), f2t.dim()}, {f0, f1t, f2t});
  check_independence(model);
  return model;
}

/// Arbitrary F: `row1` lists F_{1,1..p}, `row2` lists F_{2,1..p} (use "0" for zeros).
inline CompositeModel build_general(const CurveBasis& row1, const CurveBasis& row2, Interval interval) {
  validate_interval(interval);
  if (row1.empty() || row1.dim() != row2.dim())
    throw config_error("build_general: both rows must list the same positive number of functions");
  detail::require_defined(row1, interval, "row1");
  detail::require_defined(row2, interval, "row2");
  auto assemble = [](const Vec& r1, const Vec& r2) {
    MatP2 out(r1.size(), 2);
    out.col(0) = r1;
    out.col(1) = r2;
    return out;
  };
  CompositeModel model(
      row1.dim(), interval, [=](double t) { return assemble(row1.eval(t), row2.eval(t)); },
      [=](double t) { return assemble(row1.deriv(t), row2.deriv(t)); }, Structure::general,
      Layout{}, {row1, row2});
  check_independence(model);
  return model;
}

inline void require_in_interval(const CompositeModel& m, double t, const char* where) {
  if (!m.interval().contains(t)) {
    std::ostringstream os;
    os << where << ": t = " << t << " outside [" << m.a() << ", " << m.b() << "]";
    throw config_error(os.str());
  }
}

/// c(t) with c(t)^T = (1, -1) F^T(t): the contrast giving the difference of the
/// two group curves, c(t)^T theta = F_1^T(t) theta - F_2^T(t) theta.
inline Vec difference_contrast(const CompositeModel& m, double t) {
  require_in_interval(m, t, "difference_contrast");
  const MatP2 f = m.F(t);
  return f.col(0) - f.col(1);
}

}  // namespace twocurve
