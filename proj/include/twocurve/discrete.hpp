#pragma once

// The n-point linear estimator
//   theta_n = M^-1 { sum_{i=2}^n Phi_i Sigma^-1 (Y(t_i) - Y(t_{i-1})) + F(a) Sigma^-1 Y(a) / a }
// with its unbiasedness constraint, optimal weights and covariance.

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "twocurve/blue.hpp"
#include "twocurve/error.hpp"
#include "twocurve/kernel.hpp"
#include "twocurve/linalg.hpp"
#include "twocurve/model.hpp"
#include "twocurve/quadrature.hpp"

namespace twocurve {

/// Observation times a = t_1 < ... < t_n = b, n >= 2.
class Design {
 public:
  explicit Design(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw config_error("a design needs at least two points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i])) throw config_error("design points must be finite");
      if (i > 0 && !(points_[i] > points_[i - 1])) {
        std::ostringstream os;
        os << "design points must be strictly increasing (t_" << i << " = " << points_[i - 1] << ", t_" << i + 1
           << " = " << points_[i] << ")";
        throw config_error(os.str());
      }
    }
  }

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }
  double front() const { return points_.front(); }
  double back() const { return points_.back(); }

 private:
  std::vector<double> points_;
};

inline void require_pinned(const Design& d, const CompositeModel& m) {
  const double tol = 1e-9 * std::max(1.0, std::abs(m.b()));
  if (std::abs(d.front() - m.a()) > tol || std::abs(d.back() - m.b()) > tol) {
    std::ostringstream os;
    os << "design must start at a = " << m.a() << " and end at b = " << m.b() << " (got " << d.front() << ", "
       << d.back() << ")";
    throw config_error(os.str());
  }
}

/// Equally spaced design t_i = a + (i-1)(b-a)/(n-1).
inline Design uniform_design(double a, double b, std::size_t n) {
  if (n < 2) throw config_error("uniform_design: n must be at least 2");
  std::vector<double> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  pts.back() = b;
  return Design(std::move(pts));
}

struct BMatrices {
  std::vector<MatP2> blocks;      ///< B_i = dF_i Sigma^-1/2 / sqrt(dt_i), i = 2..n
  std::vector<MatP2> increments;  ///< dF_i = F(t_i) - F(t_{i-1})
  std::vector<double> dt;         ///< t_i - t_{i-1}
  Mat B;                          ///< sum_i B_i B_i^T
};

inline BMatrices b_matrices(const CompositeModel& model, const GroupCovariance& gc, const Design& design) {
  require_pinned(design, model);
  BMatrices out;
  const std::size_t n = design.size();
  const auto p = static_cast<Eigen::Index>(model.p());
  out.B = Mat::Zero(p, p);
  const Mat2 si = gc.inverse();
  const Mat2 sis = gc.inv_sqrt();
  MatP2 prev = model.F(design[0]);
  for (std::size_t i = 1; i < n; ++i) {
    MatP2 cur = model.F(design[i]);
    const double dt = design[i] - design[i - 1];
    MatP2 df = cur - prev;
    out.blocks.emplace_back(df * sis / std::sqrt(dt));
    out.B.noalias() += df * si * df.transpose() / dt;
    out.increments.push_back(std::move(df));
    out.dt.push_back(dt);
    prev = std::move(cur);
  }
  out.B = symmetrize(out.B);
  return out;
}

inline constexpr double kPseudoInverseCutoff = 1e-12;

/// Inverse of the symmetric PSD matrix B, or its Moore-Penrose inverse when an
/// eigenvalue falls below kPseudoInverseCutoff * lambda_max.
struct BInverse {
  Mat inverse;
  bool pseudo = false;
  std::size_t rank = 0;
};

inline BInverse invert_b(const Mat& b) {
  Eigen::SelfAdjointEigenSolver<Mat> es(b);
  const Vec& ev = es.eigenvalues();
  const double lmax = ev.size() ? std::max(0.0, ev.maxCoeff()) : 0.0;
  const double cut = kPseudoInverseCutoff * lmax;
  BInverse out;
  Vec inv = Vec::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cut && ev(i) > 0.0) {
      inv(i) = 1.0 / ev(i);
      ++out.rank;
    }
  }
  out.pseudo = out.rank < static_cast<std::size_t>(ev.size());
  out.inverse = symmetrize(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose());
  return out;
}

struct WeightMatrices {
  std::vector<MatP2> phis;  ///< Phi_2, ..., Phi_n (p x 2 each)
  bool pseudoinverse = false;
};

namespace detail {

/// M0 B^-1. For nonsingular B this is a Cholesky solve on the diagonally
/// equilibrated B with one refinement step, which keeps the unbiasedness
/// identity sum_i Phi_i Sigma^-1 dF_i^T = M0 B^-1 B = M0 close to roundoff.
inline Mat m0_times_b_inverse(const Mat& m0, const Mat& b, const BInverse& binv) {
  if (binv.pseudo) return m0 * binv.inverse;
  const Vec s = b.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::LDLT<Mat> ldlt(s.asDiagonal() * b * s.asDiagonal());
  // X = B^-1 M0 = S (S B S)^-1 S M0; B symmetric, so M0 B^-1 = X^T
  auto solve = [&](const Mat& rhs) -> Mat { return s.asDiagonal() * ldlt.solve(s.asDiagonal() * rhs); };
  Mat x = solve(m0);
  x += solve(m0 - b * x);
  return x.transpose();
}

}  // namespace detail

/// Everything needed to apply and assess the optimally weighted estimator on one design.
struct DiscreteEstimator {
  Design design;
  InformationMatrix info;
  Mat m_inverse;
  BMatrices b;
  BInverse b_inverse;
  WeightMatrices weights;
  Mat cov;  ///< M^-1 { M0 B^-1 M0 + F(a) Sigma^-1 F(a)^T / a } M^-1
};

/// Builds the estimator with weights Phi*_i = M0 B^-1 dF_i / dt_i.
inline DiscreteEstimator make_discrete_estimator(const CompositeModel& model, const GroupCovariance& gc,
                                                 const Design& design, const InformationMatrix& info,
                                                 const Mat& m_inverse) {
  DiscreteEstimator est{design, info, m_inverse, b_matrices(model, gc, design), {}, {}, {}};
  est.b_inverse = invert_b(est.b.B);
  const Mat m0_binv = detail::m0_times_b_inverse(info.M0, est.b.B, est.b_inverse);
  est.weights.pseudoinverse = est.b_inverse.pseudo;
  est.weights.phis.reserve(est.b.increments.size());
  for (std::size_t i = 0; i < est.b.increments.size(); ++i)
    est.weights.phis.emplace_back(m0_binv * est.b.increments[i] / est.b.dt[i]);
  est.cov = symmetrize(m_inverse * (m0_binv * info.M0 + info.boundary) * m_inverse);
  return est;
}

inline DiscreteEstimator make_discrete_estimator(const CompositeModel& model, const GroupCovariance& gc,
                                                 const Design& design) {
  InformationMatrix info = info_matrix(model, gc);
  const Mat minv = blue_cov(info);
  return make_discrete_estimator(model, gc, design, info, minv);
}

inline WeightMatrices optimal_weights(const CompositeModel& model, const GroupCovariance& gc, const Design& design) {
  return make_discrete_estimator(model, gc, design).weights;
}

/// Covariance of the optimally weighted estimator.
inline Mat estimator_cov(const CompositeModel& model, const GroupCovariance& gc, const Design& design) {
  return make_discrete_estimator(model, gc, design).cov;
}

namespace detail {

inline void require_shapes(const CompositeModel& model, const Design& design, const WeightMatrices& w) {
  if (w.phis.size() + 1 != design.size()) throw config_error("weights: need one p x 2 matrix per design increment");
  for (const auto& phi : w.phis)
    if (phi.rows() != static_cast<Eigen::Index>(model.p())) throw config_error("weights: matrices must be p x 2");
}

/// M0 - sum_i Phi_i Sigma^-1 dF_i^T; zero exactly for unbiased weights.
inline Mat bias_matrix(const Mat& m0, const GroupCovariance& gc, const BMatrices& b, const WeightMatrices& w) {
  Mat r = m0;
  for (std::size_t i = 0; i < w.phis.size(); ++i) r.noalias() -= w.phis[i] * gc.inverse() * b.increments[i].transpose();
  return r;
}

}  // namespace detail

/// || M0 - sum_i Phi_i Sigma^-1 (F(t_i) - F(t_{i-1}))^T ||_F
inline double unbiasedness_residual(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                                    const WeightMatrices& weights, const InformationMatrix& info) {
  detail::require_shapes(model, design, weights);
  return detail::bias_matrix(info.M0, gc, b_matrices(model, gc, design), weights).norm();
}

inline double unbiasedness_residual(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                                    const WeightMatrices& weights) {
  return unbiasedness_residual(model, gc, design, weights, info_matrix(model, gc));
}

/// Covariance of theta_n for arbitrary weights:
///   M^-1 { sum_i dt_i Phi_i Sigma^-1 Phi_i^T + F(a) Sigma^-1 F(a)^T / a } M^-1.
inline Mat weights_cov(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                       const WeightMatrices& weights, const InformationMatrix& info) {
  detail::require_shapes(model, design, weights);
  require_pinned(design, model);
  const Mat minv = blue_cov(info);
  Mat inner = info.boundary;
  for (std::size_t i = 0; i < weights.phis.size(); ++i)
    inner.noalias() += (design[i + 1] - design[i]) * weights.phis[i] * gc.inverse() * weights.phis[i].transpose();
  return symmetrize(minv * inner * minv);
}

/// E[(theta_n - theta)(theta_n - theta)^T] for arbitrary weights (covariance plus squared bias).
inline Mat estimator_mse(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                         const WeightMatrices& weights, const Vec& theta, const InformationMatrix& info) {
  const Mat cov = weights_cov(model, gc, design, weights, info);
  const Vec bias = blue_cov(info) * detail::bias_matrix(info.M0, gc, b_matrices(model, gc, design), weights) * theta;
  return symmetrize(cov + bias * bias.transpose());
}

/// E[(theta_BLUE - theta_n)(theta_BLUE - theta_n)^T] for arbitrary weights:
///   M^-1 { sum_i int_{t_{i-1}}^{t_i} [Fdot - Phi_i] Sigma^-1 [Fdot - Phi_i]^T ds + beta beta^T } M^-1,
/// beta = (M0 - sum_i Phi_i Sigma^-1 dF_i^T) theta.
inline Mat mse_vs_blue(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                       const WeightMatrices& weights, const Vec& theta, const InformationMatrix& info) {
  detail::require_shapes(model, design, weights);
  if (theta.size() != static_cast<Eigen::Index>(model.p())) throw config_error("mse_vs_blue: theta must have length p");
  const BMatrices b = b_matrices(model, gc, design);
  const Mat2 si = gc.inverse();
  const Mat minv = blue_cov(info);
  const auto p = static_cast<Eigen::Index>(model.p());
  Mat inner = Mat::Zero(p, p);
  QuadratureOptions opt;
  opt.panels = 4;
  opt.max_doublings = 2;
  for (std::size_t i = 0; i < weights.phis.size(); ++i) {
    auto integrand = [&](double s) -> Mat {
      const MatP2 d = model.Fdot(s);
      return d * si * d.transpose();
    };
    const Mat s_i = integrate(integrand, design[i], design[i + 1], opt).value;
    const Mat cross = weights.phis[i] * si * b.increments[i].transpose();
    inner += s_i - cross - cross.transpose() + b.dt[i] * weights.phis[i] * si * weights.phis[i].transpose();
  }
  const Vec beta = detail::bias_matrix(info.M0, gc, b, weights) * theta;
  inner += beta * beta.transpose();
  return symmetrize(minv * inner * minv);
}

inline Mat mse_vs_blue(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                       const WeightMatrices& weights, const Vec& theta) {
  return mse_vs_blue(model, gc, design, weights, theta, info_matrix(model, gc));
}

/// The unbiased-weights form  -M^-1 M0 M^-1 + sum_i M^-1 A_i A_i^T M^-1,
/// A_i = Phi_i Sigma^-1/2 sqrt(dt_i). Only meaningful when the weights are unbiased.
inline Mat mse_vs_blue_unbiased(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                                const WeightMatrices& weights, const InformationMatrix& info) {
  detail::require_shapes(model, design, weights);
  const Mat minv = blue_cov(info);
  Mat inner = -info.M0;
  for (std::size_t i = 0; i < weights.phis.size(); ++i) {
    const MatP2 a = weights.phis[i] * gc.inv_sqrt() * std::sqrt(design[i + 1] - design[i]);
    inner.noalias() += a * a.transpose();
  }
  return symmetrize(minv * inner * minv);
}

/// theta_n from observations `y` (n x 2, row j = (Y_1(t_j), Y_2(t_j))).
inline Vec estimate(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                    const WeightMatrices& weights, const InformationMatrix& info, const Mat& y) {
  detail::require_shapes(model, design, weights);
  if (y.rows() != static_cast<Eigen::Index>(design.size()) || y.cols() != 2) {
    std::ostringstream os;
    os << "estimate: expected " << design.size() << " x 2 observations, got " << y.rows() << " x " << y.cols();
    throw config_error(os.str());
  }
  const Mat2 si = gc.inverse();
  Vec acc = model.F(model.a()) * si * y.row(0).transpose() / model.a();
  for (std::size_t i = 0; i < weights.phis.size(); ++i) {
    const Vec2 dy = (y.row(static_cast<Eigen::Index>(i + 1)) - y.row(static_cast<Eigen::Index>(i))).transpose();
    acc.noalias() += weights.phis[i] * (si * dy);
  }
  return Eigen::LLT<Mat>(info.M).solve(acc);
}

inline Vec estimate(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                    const WeightMatrices& weights, const Mat& y) {
  return estimate(model, gc, design, weights, info_matrix(model, gc), y);
}

/// Closest weights (Frobenius) satisfying the unbiasedness identity
/// sum_i Phi_i Sigma^-1 dF_i^T = M0.
inline WeightMatrices project_unbiased(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                                       const WeightMatrices& weights, const InformationMatrix& info) {
  detail::require_shapes(model, design, weights);
  const BMatrices b = b_matrices(model, gc, design);
  const auto p = static_cast<Eigen::Index>(model.p());
  const auto m = static_cast<Eigen::Index>(weights.phis.size());
  Mat phi(p, 2 * m), g(p, 2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    phi.middleCols(2 * i, 2) = weights.phis[static_cast<std::size_t>(i)];
    g.middleCols(2 * i, 2) = b.increments[static_cast<std::size_t>(i)] * gc.inverse();
  }
  const PseudoInverse ggt = pseudo_inverse(g * g.transpose(), kPseudoInverseCutoff);
  phi += (info.M0 - phi * g.transpose()) * ggt.inverse * g;
  WeightMatrices out;
  out.pseudoinverse = ggt.truncated;
  for (Eigen::Index i = 0; i < m; ++i) out.phis.emplace_back(phi.middleCols(2 * i, 2));
  return out;
}

}  // namespace twocurve
