#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "twocurve/error.hpp"

namespace twocurve {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
/// A p x 2 matrix: one row per parameter, one column per group.
using MatP2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

inline constexpr double kMaxCondition = 1e14;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline Vec symmetric_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return symmetric_eigenvalues(m).minCoeff();
}

/// Ratio of extreme eigenvalues of a symmetric matrix; +inf when not positive definite.
inline double spd_condition(const Mat& m) {
  const Vec ev = symmetric_eigenvalues(m);
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Throws numerical_error if the Cholesky factorization fails or the
/// condition number exceeds `max_condition`; never regularizes.
inline Mat spd_inverse(const Mat& m, const char* what = "matrix",
                       double max_condition = kMaxCondition) {
  const Mat s = symmetrize(m);
  const double cond = spd_condition(s);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success || !(cond <= max_condition)) {
    std::ostringstream os;
    os << what << " is numerically singular (condition number " << cond << ", limit "
       << max_condition << ")";
    throw numerical_error(os.str());
  }
  return symmetrize(llt.solve(Mat::Identity(s.rows(), s.cols())));
}

struct PseudoInverse {
  Mat inverse;
  std::size_t rank = 0;
  bool truncated = false;  ///< true when at least one singular value was cut off
};

/// Moore-Penrose inverse with singular values below rel_cutoff * sigma_max dropped.
inline PseudoInverse pseudo_inverse(const Mat& m, double rel_cutoff) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double cut = rel_cutoff * smax;
  PseudoInverse out;
  Vec inv_sv = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cut && sv(i) > 0.0) {
      inv_sv(i) = 1.0 / sv(i);
      ++out.rank;
    }
  }
  out.truncated = out.rank < static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  out.inverse = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

/// Numerical rank with an absolute threshold of rel_tol * (largest singular value).
inline std::size_t numerical_rank(const Mat& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++r;
  return r;
}

/// Unique symmetric positive semidefinite square root.
inline Mat symmetric_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  Vec ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-12 * std::max(1.0, std::abs(ev.maxCoeff())))
    throw numerical_error("square root of an indefinite matrix requested");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

inline double relative_frobenius(const Mat& got, const Mat& want) {
  const double denom = want.norm();
  return denom > 0.0 ? (got - want).norm() / denom : (got - want).norm();
}

/// Kronecker product (used for the equal-basis covariance structure).
inline Mat kronecker(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace twocurve
