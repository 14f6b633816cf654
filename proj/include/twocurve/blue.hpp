#pragma once

// Continuous-time best linear unbiased estimation for the composite model with
// Brownian errors: information matrix, BLUE covariance, per-group (marginal)
// estimation, the a = 0 reductions, and a discretized path estimator.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <span>
#include <vector>

#include "twocurve/error.hpp"
#include "twocurve/kernel.hpp"
#include "twocurve/linalg.hpp"
#include "twocurve/model.hpp"
#include "twocurve/quadrature.hpp"

namespace twocurve {

struct InformationMatrix {
  Mat M;         ///< M0 + boundary
  Mat M0;        ///< integral of Fdot Sigma^-1 Fdot^T over [a,b]
  Mat boundary;  ///< F(a) Sigma^-1 F(a)^T / a
  double quadrature_error = 0.0;
};

/// Integral of Fdot(t) Sigma^-1 Fdot(t)^T over the model interval.
inline QuadratureResult<Mat> integral_information(const CompositeModel& model, const GroupCovariance& gc,
                                                  QuadratureOptions opt = {}) {
  const Mat2 si = gc.inverse();
  if (!opt.panel_map) opt.panel_map = model.panel_map();
  auto integrand = [&](double t) -> Mat {
    const MatP2 d = model.Fdot(t);
    return d * si * d.transpose();
  };
  QuadratureResult<Mat> r = integrate(integrand, model.a(), model.b(), opt);
  r.value = symmetrize(r.value);
  return r;
}

/// M = int_a^b Fdot Sigma^-1 Fdot^T dt + F(a) Sigma^-1 F(a)^T / a   (a > 0).
inline InformationMatrix info_matrix(const CompositeModel& model, const GroupCovariance& gc,
                                     const QuadratureOptions& opt = {}) {
  if (!(model.a() > 0.0))
    throw config_error("info_matrix requires a > 0; use blue_cov_a0 for intervals starting at 0");
  const auto q = integral_information(model, gc, opt);
  InformationMatrix info;
  info.M0 = q.value;
  const MatP2 fa = model.F(model.a());
  info.boundary = symmetrize(fa * gc.inverse() * fa.transpose() / model.a());
  info.M = info.M0 + info.boundary;
  info.quadrature_error = q.error;
  return info;
}

/// Cov(theta_BLUE) = M^-1.
inline Mat blue_cov(const InformationMatrix& info) { return spd_inverse(info.M, "information matrix M"); }

inline Mat blue_cov(const CompositeModel& model, const GroupCovariance& gc) {
  return blue_cov(info_matrix(model, gc));
}

namespace detail {

inline std::vector<std::size_t> require_group(const CompositeModel& model, int group, const char* what) {
  auto idx = model.group_indices(group);
  if (!idx)
    throw config_error(std::string(what) + " needs a separate or shared model (general F has no group decomposition)");
  return *idx;
}

inline Mat select(const Mat& m, const std::vector<std::size_t>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Mat out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = m(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));
  return out;
}

}  // namespace detail

/// Covariance of the BLUE computed from group `group` alone:
///   sigma_l^2 * (int f_l' f_l'^T dt + f_l(a) f_l(a)^T / a)^-1.
inline Mat marginal_cov(const CompositeModel& model, const GroupCovariance& gc, int group) {
  const auto idx = detail::require_group(model, group, "marginal_cov");
  if (!(model.a() > 0.0)) throw config_error("marginal_cov requires a > 0");
  const Eigen::Index col = group - 1;
  auto pick = [&](const MatP2& f) {
    Vec v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) v(static_cast<Eigen::Index>(i)) = f(static_cast<Eigen::Index>(idx[i]), col);
    return v;
  };
  QuadratureOptions opt;
  opt.panel_map = model.panel_map();
  auto integrand = [&](double t) -> Mat {
    const Vec d = pick(model.Fdot(t));
    return d * d.transpose();
  };
  Mat mll = integrate(integrand, model.a(), model.b(), opt).value;
  const Vec fa = pick(model.F(model.a()));
  mll += fa * fa.transpose() / model.a();
  const double s = gc.sigma(group);
  return s * s * spd_inverse(mll, "marginal information matrix");
}

/// Cov(theta_mar^(l)) - Cov(theta_BLUE^(l)); positive semidefinite.
inline Mat loewner_gap(const CompositeModel& model, const GroupCovariance& gc, int group) {
  const auto idx = detail::require_group(model, group, "loewner_gap");
  const Mat full = blue_cov(model, gc);
  return symmetrize(marginal_cov(model, gc, group) - detail::select(full, idx));
}

/// BLUE on [0, b]. Y(0) = F(0)^T theta is observed without noise, so rank(F(0))
/// parameters are determined by the others:
///   theta_J = C0^-1 (Y_I(0) - F^T_{I,K}(0) theta_K),  C0 = F^T_{I,J}(0),
/// and theta_K is estimated from Z(t) = Y(t) - F^T_J(t) C0^-1 Y_I(0) with
///   F~^T(t) = F^T_K(t) - F^T_J(t) C0^-1 F^T_{I,K}(0),   F~^T(0) = 0.
struct A0Blue {
  std::size_t rank = 0;                 ///< rank of F(0)
  std::vector<std::size_t> pivot_rows;  ///< I: groups whose time-0 equations are used
  std::vector<std::size_t> recovered;   ///< J: parameters fixed by Y(0)
  std::vector<std::size_t> estimated;   ///< K: parameters of the reduced model
  std::shared_ptr<const CompositeModel> reduced_model;
  Mat reduced_cov;      ///< Cov(theta_K) = M0~^-1
  Mat recovery;         ///< theta = recovery * theta_K + observation_map * Y(0)
  Mat observation_map;  ///< p x 2
  Mat cov;              ///< full p x p covariance, recovery * reduced_cov * recovery^T
};

inline constexpr double kRankTolerance = 1e-10;

inline A0Blue blue_cov_a0(const CompositeModel& model, const GroupCovariance& gc) {
  if (model.a() != 0.0) throw config_error("blue_cov_a0 requires a = 0");
  const auto p = static_cast<Eigen::Index>(model.p());
  const Mat ft0 = model.F(0.0).transpose();  // 2 x p
  A0Blue out;
  out.rank = numerical_rank(ft0, kRankTolerance);
  const double smax = ft0.size() ? Eigen::JacobiSVD<Mat>(ft0).singularValues()(0) : 0.0;

  if (out.rank == 1) {
    Eigen::Index r = 0, c = 0;
    ft0.cwiseAbs().maxCoeff(&r, &c);
    out.pivot_rows = {static_cast<std::size_t>(r)};
    out.recovered = {static_cast<std::size_t>(c)};
  } else if (out.rank == 2) {
    out.pivot_rows = {0, 1};
    double best = 0.0;
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = i + 1; j < p; ++j) {
        const double det = std::abs(ft0(0, i) * ft0(1, j) - ft0(0, j) * ft0(1, i));
        if (det > best) {
          best = det;
          out.recovered = {static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
        }
      }
    if (!(best > kRankTolerance * smax * smax))
      throw numerical_error("blue_cov_a0: no non-singular 2x2 block of F(0)^T found despite rank 2");
  }
  for (Eigen::Index j = 0; j < p; ++j)
    if (std::find(out.recovered.begin(), out.recovered.end(), static_cast<std::size_t>(j)) == out.recovered.end())
      out.estimated.push_back(static_cast<std::size_t>(j));
  if (out.estimated.empty()) throw numerical_error("blue_cov_a0: every parameter is fixed by Y(0)");

  const auto r = static_cast<Eigen::Index>(out.recovered.size());
  const auto k = static_cast<Eigen::Index>(out.estimated.size());
  auto cols = [](const Mat& m, const std::vector<std::size_t>& idx) {
    Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
    return out;
  };
  auto rows = [](const Mat& m, const std::vector<std::size_t>& idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    return out;
  };

  // coupling = C0^-1 F^T_{I,K}(0)   (r x k); zero when rank 0
  Mat coupling = Mat::Zero(r, k);
  Mat c0inv = Mat::Zero(r, r);
  if (r > 0) {
    const Mat c0 = cols(rows(ft0, out.pivot_rows), out.recovered);
    c0inv = c0.inverse();
    coupling = c0inv * cols(rows(ft0, out.pivot_rows), out.estimated);
  }

  auto base = std::make_shared<const CompositeModel>(model);
  const auto recovered = out.recovered;
  const auto estimated = out.estimated;
  auto reduce = [=](const Mat& ft) -> MatP2 {
    Mat red = cols(ft, estimated);
    if (r > 0) red -= cols(ft, recovered) * coupling;
    return red.transpose();
  };
  CompositeModel::MatrixFn f = [base, reduce](double t) { return reduce(base->F(t).transpose()); };
  CompositeModel::MatrixFn fd = [base, reduce](double t) { return reduce(base->Fdot(t).transpose()); };
  out.reduced_model = std::make_shared<const CompositeModel>(
      static_cast<std::size_t>(k), model.interval(), f, fd, Structure::general, Layout{}, std::vector<CurveBasis>{},
      model.panel_map());

  const Mat m0 = integral_information(*out.reduced_model, gc).value;
  out.reduced_cov = spd_inverse(m0, "reduced information matrix M0");

  out.recovery = Mat::Zero(p, k);
  out.observation_map = Mat::Zero(p, 2);
  for (Eigen::Index j = 0; j < k; ++j) out.recovery(static_cast<Eigen::Index>(estimated[j]), j) = 1.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto row = static_cast<Eigen::Index>(out.recovered[i]);
    out.recovery.row(row) = -coupling.row(i);
    for (Eigen::Index g = 0; g < r; ++g)
      out.observation_map(row, static_cast<Eigen::Index>(out.pivot_rows[g])) = c0inv(i, g);
  }
  out.cov = symmetrize(out.recovery * out.reduced_cov * out.recovery.transpose());
  return out;
}

inline constexpr std::size_t kMinPathPoints = 1000;

/// Left-point discretization of the BLUE
///   M^-1 ( int Fdot Sigma^-1 dY + F(a) Sigma^-1 Y(a) / a )
/// from a trajectory `y` (N x 2) sampled on `grid` (grid[0] = a, grid[N-1] = b).
inline Vec blue_estimate_path(const CompositeModel& model, const GroupCovariance& gc, const InformationMatrix& info,
                              std::span<const double> grid, const Mat& y) {
  const std::size_t n = grid.size();
  if (n < kMinPathPoints) throw config_error("blue_estimate_path: grid needs at least 1000 points");
  if (y.rows() != static_cast<Eigen::Index>(n) || y.cols() != 2)
    throw config_error("blue_estimate_path: path must be N x 2 and match the grid");
  const double tol = 1e-12 * model.interval().length();
  if (std::abs(grid.front() - model.a()) > tol || std::abs(grid.back() - model.b()) > tol)
    throw config_error("blue_estimate_path: grid must start at a and end at b");
  const Mat2 si = gc.inverse();
  Vec acc = model.F(model.a()) * si * y.row(0).transpose() / model.a();
  for (std::size_t k = 1; k < n; ++k) {
    if (!(grid[k] > grid[k - 1])) throw config_error("blue_estimate_path: grid must be strictly increasing");
    const Vec2 dy = (y.row(static_cast<Eigen::Index>(k)) - y.row(static_cast<Eigen::Index>(k - 1))).transpose();
    acc.noalias() += model.Fdot(grid[k - 1]) * (si * dy);
  }
  return Eigen::LLT<Mat>(info.M).solve(acc);
}

inline Vec blue_estimate_path(const CompositeModel& model, const GroupCovariance& gc, std::span<const double> grid,
                              const Mat& y) {
  return blue_estimate_path(model, gc, info_matrix(model, gc), grid, y);
}

/// blue_estimate_path with Fdot Sigma^-1 cached on a fixed grid, for repeated
/// use on many sampled paths.
class PathEstimator {
 public:
  PathEstimator(const CompositeModel& model, const GroupCovariance& gc, std::vector<double> grid)
      : grid_(std::move(grid)), llt_(info_matrix(model, gc).M) {
    const std::size_t n = grid_.size();
    if (n < kMinPathPoints) throw config_error("PathEstimator: grid needs at least 1000 points");
    const double tol = 1e-12 * model.interval().length();
    if (std::abs(grid_.front() - model.a()) > tol || std::abs(grid_.back() - model.b()) > tol)
      throw config_error("PathEstimator: grid must start at a and end at b");
    const Mat2 si = gc.inverse();
    const auto p = static_cast<Eigen::Index>(model.p());
    weights_.resize(p, static_cast<Eigen::Index>(2 * n));
    weights_.leftCols(2) = model.F(model.a()) * si / model.a();
    for (std::size_t k = 1; k < n; ++k) {
      if (!(grid_[k] > grid_[k - 1])) throw config_error("PathEstimator: grid must be strictly increasing");
      weights_.middleCols(static_cast<Eigen::Index>(2 * k), 2) = model.Fdot(grid_[k - 1]) * si;
    }
  }

  const std::vector<double>& grid() const { return grid_; }

  /// y is N x 2 on the grid.
  Vec operator()(const Mat& y) const {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    if (y.rows() != n || y.cols() != 2) throw config_error("PathEstimator: path must be N x 2 and match the grid");
    Vec acc = weights_.leftCols(2) * y.row(0).transpose();
    for (Eigen::Index k = 1; k < n; ++k)
      acc.noalias() += weights_.middleCols(2 * k, 2) * (y.row(k) - y.row(k - 1)).transpose();
    return llt_.solve(acc);
  }

 private:
  std::vector<double> grid_;
  Eigen::LLT<Mat> llt_;
  Mat weights_;
};

}  // namespace twocurve
