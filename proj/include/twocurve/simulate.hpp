#pragma once

// Simulated observations, the critical value D and simultaneous confidence
// bands for the difference of the two regression curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "twocurve/design.hpp"
#include "twocurve/discrete.hpp"
#include "twocurve/error.hpp"
#include "twocurve/kernel.hpp"
#include "twocurve/linalg.hpp"
#include "twocurve/parallel.hpp"

namespace twocurve {

inline constexpr std::size_t kDefaultMcDraws = 100000;
inline constexpr std::size_t kDefaultBandGrid = 500;
inline constexpr std::size_t kDrawChunk = 1000;

struct PathSample {
  Design design;
  Mat y;  ///< n x 2, row j = (Y_1(t_j), Y_2(t_j))
  std::uint64_t seed = 0;
};

/// Draws Y(t_j) = F^T(t_j) theta + Sigma^{1/2} eps(t_j) on a fixed design. With
/// a triangular kernel the error is eps(t) = v(t) W(q(t)) for a standard
/// Brownian motion W.
class ObservationSampler {
 public:
  ObservationSampler(const ComparisonProblem& problem, const Vec& theta, Design design)
      : design_(std::move(design)), sqrt_(problem.covariance().sqrt()) {
    const auto& m = problem.model();
    if (theta.size() != static_cast<Eigen::Index>(m.p())) {
      std::ostringstream os;
      os << "theta has " << theta.size() << " entries, model has p = " << m.p();
      throw config_error(os.str());
    }
    const std::size_t n = design_.size();
    if (design_.front() < 0.0) throw config_error("sample_observations: design points must be nonnegative");
    mean_.resize(static_cast<Eigen::Index>(n), 2);
    clock_.resize(n);
    scale_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double t = design_[j];
      mean_.row(static_cast<Eigen::Index>(j)) = (m.F(t).transpose() * theta).transpose();
      clock_[j] = problem.transformed() ? problem.time_map().forward(t) : t;
      scale_[j] = problem.transformed() ? problem.time_map().scale(t) : 1.0;
    }
    for (std::size_t j = 1; j < n; ++j)
      if (!(clock_[j] > clock_[j - 1])) throw numerical_error("sample_observations: kernel time map is not increasing");
    if (clock_.front() < 0.0) throw numerical_error("sample_observations: kernel time map is negative at t_1");
  }

  const Design& design() const { return design_; }
  const Mat& mean() const { return mean_; }

  Mat sample(Rng& rng) const {
    std::normal_distribution<double> normal;
    const std::size_t n = design_.size();
    Mat y(static_cast<Eigen::Index>(n), 2);
    Vec2 w = Vec2::Zero();
    double prev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double sd = std::sqrt(clock_[j] - prev);
      w(0) += sd * normal(rng);
      w(1) += sd * normal(rng);
      prev = clock_[j];
      y.row(static_cast<Eigen::Index>(j)) = mean_.row(static_cast<Eigen::Index>(j)) + scale_[j] * (sqrt_ * w).transpose();
    }
    return y;
  }

  PathSample sample(std::uint64_t master, std::uint64_t replicate = 0) const {
    Rng rng = make_stream(master, replicate);
    return {design_, sample(rng), master};
  }

 private:
  Design design_;
  Mat2 sqrt_;
  Mat mean_;
  std::vector<double> clock_;
  std::vector<double> scale_;
};

inline PathSample sample_observations(const CompositeModel& model, const GroupCovariance& gc, const Vec& theta,
                                      const Design& design, std::uint64_t seed) {
  return ObservationSampler(ComparisonProblem(model, gc), theta, design).sample(seed);
}

/// Order statistic x_(ceil(level N)).
inline double empirical_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw config_error("empirical_quantile: no values");
  if (!(level > 0.0 && level < 1.0)) throw config_error("empirical_quantile: level must lie in (0, 1)");
  const auto n = values.size();
  auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

/// Standardized contrast rows c(t)^T L / sqrt(h(t)) with L L^T = cov.
inline Mat standardized_contrasts(const ComparisonProblem& problem, const Mat& cov, std::span<const double> grid) {
  if (grid.empty()) throw config_error("critical_value: empty grid");
  const Mat root = symmetric_sqrt(cov);
  Mat a(static_cast<Eigen::Index>(grid.size()), cov.rows());
  std::vector<double> hs(grid.size());
  double hmax = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Vec c = problem.contrast(grid[k]);
    hs[k] = c.dot(cov * c);
    hmax = std::max(hmax, hs[k]);
    a.row(static_cast<Eigen::Index>(k)) = (root * c).transpose();
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(hs[k] > 1e-14 * hmax) || !(hs[k] > 0.0)) {
      std::ostringstream os;
      os << "critical_value: h(t) = 0 at t = " << grid[k] << " (degenerate contrast)";
      throw numerical_error(os.str());
    }
    a.row(static_cast<Eigen::Index>(k)) /= std::sqrt(hs[k]);
  }
  return a;
}

/// Draws of sup_t |c(t)^T Z| / sqrt(h(t)), Z ~ N(0, cov). Draws are generated
/// in fixed chunks with one stream per chunk, so results do not depend on threads.
inline std::vector<double> sup_statistic_draws(const Mat& standardized, std::size_t draws, std::uint64_t seed,
                                               std::size_t threads = 1) {
  std::vector<double> out(draws);
  const std::size_t chunks = (draws + kDrawChunk - 1) / kDrawChunk;
  const auto p = standardized.cols();
  parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng = make_stream(seed, c);
    std::normal_distribution<double> normal;
    const std::size_t begin = c * kDrawChunk, end = std::min(draws, begin + kDrawChunk);
    Mat xi(p, static_cast<Eigen::Index>(end - begin));
    for (Eigen::Index j = 0; j < xi.cols(); ++j)
      for (Eigen::Index i = 0; i < p; ++i) xi(i, j) = normal(rng);
    const Mat s = standardized * xi;
    for (Eigen::Index j = 0; j < xi.cols(); ++j) out[begin + static_cast<std::size_t>(j)] = s.col(j).cwiseAbs().maxCoeff();
  });
  return out;
}

inline void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
}

/// D with P(T <= D) = 1 - alpha, by simulation from the Gaussian law of the estimator.
inline double critical_value(const ComparisonProblem& problem, const Mat& cov, double alpha,
                             std::span<const double> grid, std::size_t mc_draws, std::uint64_t seed,
                             std::size_t threads = 1) {
  validate_alpha(alpha);
  if (mc_draws < 1000) throw config_error("critical_value: mc_draws must be at least 1000");
  return empirical_quantile(sup_statistic_draws(standardized_contrasts(problem, cov, grid), mc_draws, seed, threads),
                            1.0 - alpha);
}

inline double critical_value(const CompositeModel& model, const GroupCovariance& gc, const Design& design, double alpha,
                             std::span<const double> grid, std::size_t mc_draws, std::uint64_t seed,
                             std::size_t threads = 1) {
  const ComparisonProblem problem(model, gc);
  return critical_value(problem, problem.estimator_cov(design), alpha, grid, mc_draws, seed, threads);
}

struct BandResult {
  std::vector<double> grid;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> h;
  double D = 0.0;
  double alpha = 0.05;
  std::vector<double> estimate;  ///< c(t)^T theta_n

  double max_width() const {
    double w = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) w = std::max(w, upper[k] - lower[k]);
    return w;
  }
};

inline BandResult band_from_estimate(const ComparisonProblem& problem, const Mat& cov, const Vec& theta_hat,
                                     std::span<const double> grid, double D, double alpha) {
  BandResult r;
  r.grid.assign(grid.begin(), grid.end());
  r.D = D;
  r.alpha = alpha;
  for (double t : grid) {
    const Vec c = problem.contrast(t);
    const double h = std::max(0.0, c.dot(cov * c));
    const double est = c.dot(theta_hat), half = D * std::sqrt(h);
    r.h.push_back(h);
    r.estimate.push_back(est);
    r.lower.push_back(est - half);
    r.upper.push_back(est + half);
  }
  return r;
}

/// Band with a precomputed critical value.
inline BandResult confidence_band(const ComparisonProblem& problem, const Design& design, const Mat& y, double alpha,
                                  std::span<const double> grid, double D) {
  validate_alpha(alpha);
  const DiscreteEstimator est = problem.estimator(design);
  return band_from_estimate(problem, est.cov, problem.estimate(est, design, y), grid, D, alpha);
}

inline BandResult confidence_band(const ComparisonProblem& problem, const Design& design, const Mat& y, double alpha,
                                  std::span<const double> grid, std::size_t mc_draws = kDefaultMcDraws,
                                  std::uint64_t seed = 20200101, std::size_t threads = 1) {
  const double D = critical_value(problem, problem.estimator_cov(design), alpha, grid, mc_draws, seed, threads);
  return confidence_band(problem, design, y, alpha, grid, D);
}

inline BandResult confidence_band(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                                  const Mat& y, double alpha, std::span<const double> grid,
                                  std::size_t mc_draws = kDefaultMcDraws, std::uint64_t seed = 20200101) {
  return confidence_band(ComparisonProblem(model, gc), design, y, alpha, grid, mc_draws, seed);
}

struct BandStudyConfig {
  double alpha = 0.05;
  std::size_t runs = 100;
  std::size_t grid = kDefaultBandGrid;
  std::size_t mc_draws = kDefaultMcDraws;
  std::uint64_t seed = 20200101;
  std::size_t threads = 1;
};

/// Band envelopes averaged over simulated data sets; D is computed once.
struct BandStudy {
  Design design;
  std::vector<double> grid;
  std::vector<double> truth;  ///< c(t)^T theta
  std::vector<double> h;
  std::vector<double> mean_estimate;
  std::vector<double> mean_lower;
  std::vector<double> mean_upper;
  double D = 0.0;
  double mean_max_width = 0.0;
  double coverage = 0.0;  ///< fraction of runs whose band contains the truth on the whole grid
  std::size_t runs = 0;
};

inline BandStudy band_study(const ComparisonProblem& problem, const Design& design, const Vec& theta,
                            const BandStudyConfig& cfg) {
  validate_alpha(cfg.alpha);
  if (cfg.runs < 1) throw config_error("bands.runs must be at least 1");
  if (cfg.grid < 2) throw config_error("bands.grid must be at least 2");
  const auto& m = problem.model();
  BandStudy s{.design = design};
  s.runs = cfg.runs;
  s.grid = equispaced_grid(m.a(), m.b(), cfg.grid);
  const DiscreteEstimator est = problem.estimator(design);
  // replicate streams are keyed apart from the D draws
  s.D = critical_value(problem, est.cov, cfg.alpha, s.grid, cfg.mc_draws, cfg.seed, cfg.threads);
  const ObservationSampler sampler(problem, theta, design);
  const std::size_t g = s.grid.size();
  for (double t : s.grid) s.truth.push_back(problem.contrast(t).dot(theta));

  std::vector<BandResult> bands(cfg.runs);
  parallel_for(cfg.runs, cfg.threads, [&](std::size_t r) {
    const PathSample ps = sampler.sample(splitmix64(cfg.seed + 1), r);
    bands[r] = band_from_estimate(problem, est.cov, problem.estimate(est, design, ps.y), s.grid, s.D, cfg.alpha);
  });

  s.h = bands.front().h;
  s.mean_estimate.assign(g, 0.0);
  s.mean_lower.assign(g, 0.0);
  s.mean_upper.assign(g, 0.0);
  std::size_t covered = 0;
  for (const auto& b : bands) {
    bool inside = true;
    for (std::size_t k = 0; k < g; ++k) {
      s.mean_estimate[k] += b.estimate[k];
      s.mean_lower[k] += b.lower[k];
      s.mean_upper[k] += b.upper[k];
      inside = inside && b.lower[k] <= s.truth[k] && s.truth[k] <= b.upper[k];
    }
    covered += inside ? 1 : 0;
    s.mean_max_width += b.max_width();
  }
  const double inv = 1.0 / static_cast<double>(cfg.runs);
  for (std::size_t k = 0; k < g; ++k) {
    s.mean_estimate[k] *= inv;
    s.mean_lower[k] *= inv;
    s.mean_upper[k] *= inv;
  }
  s.mean_max_width *= inv;
  s.coverage = static_cast<double>(covered) * inv;
  return s;
}

}  // namespace twocurve
