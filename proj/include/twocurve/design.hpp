#pragma once

// Band-variance function h(t), the Phi_p design criterion and particle-swarm
// optimization of the interior design points.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "twocurve/blue.hpp"
#include "twocurve/discrete.hpp"
#include "twocurve/error.hpp"
#include "twocurve/kernel.hpp"
#include "twocurve/linalg.hpp"
#include "twocurve/model.hpp"
#include "twocurve/parallel.hpp"
#include "twocurve/quadrature.hpp"

namespace twocurve {

/// A model, a between-group covariance and an optional triangular kernel.
/// Designs and observations are always in observation time; with a kernel,
/// estimation runs on the equivalent Brownian model.
class ComparisonProblem {
 public:
  ComparisonProblem(CompositeModel model, GroupCovariance gc, std::optional<TriangularKernel> kernel = std::nullopt)
      : model_(std::make_shared<const CompositeModel>(std::move(model))), gc_(gc) {
    if (kernel && !kernel->is_brownian()) {
      BrownianForm form = to_brownian(*model_, *kernel);
      brownian_ = std::make_shared<const CompositeModel>(std::move(form.model));
      map_ = std::move(form.map);
      transformed_ = true;
    } else {
      brownian_ = model_;
      map_ = TimeMap::identity();
    }
    info_ = info_matrix(*brownian_, gc_);
    m_inverse_ = blue_cov(info_);
  }

  const CompositeModel& model() const { return *model_; }
  const CompositeModel& brownian_model() const { return *brownian_; }
  const GroupCovariance& covariance() const { return gc_; }
  const TimeMap& time_map() const { return map_; }
  bool transformed() const { return transformed_; }
  const InformationMatrix& info() const { return info_; }
  /// Continuous-time BLUE covariance M^-1.
  const Mat& blue_covariance() const { return m_inverse_; }

  Design to_brownian_time(const Design& d) const {
    if (!transformed_) return d;
    std::vector<double> pts(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) pts[i] = map_.forward(d[i]);
    pts.front() = brownian_->a();
    pts.back() = brownian_->b();
    return Design(std::move(pts));
  }

  Mat to_brownian_observations(const Design& d, const Mat& y) const {
    if (!transformed_) return y;
    Mat out = y;
    for (std::size_t i = 0; i < d.size(); ++i) out.row(static_cast<Eigen::Index>(i)) /= map_.scale(d[i]);
    return out;
  }

  DiscreteEstimator estimator(const Design& d) const {
    require_pinned(d, *model_);
    return make_discrete_estimator(*brownian_, gc_, to_brownian_time(d), info_, m_inverse_);
  }

  Mat estimator_cov(const Design& d) const { return estimator(d).cov; }

  /// c(t) = F(t) (1, -1)^T in observation time.
  Vec contrast(double t) const {
    const MatP2 f = model_->F(t);
    return f.col(0) - f.col(1);
  }

  Vec estimate(const DiscreteEstimator& est, const Design& d, const Mat& y) const {
    return twocurve::estimate(*brownian_, gc_, est.design, est.weights, info_, to_brownian_observations(d, y));
  }

 private:
  std::shared_ptr<const CompositeModel> model_;
  std::shared_ptr<const CompositeModel> brownian_;
  GroupCovariance gc_;
  TimeMap map_;
  bool transformed_ = false;
  InformationMatrix info_;
  Mat m_inverse_;
};

struct CriterionConfig {
  double p_norm = std::numeric_limits<double>::infinity();  ///< in [1, inf]
  std::size_t grid_size = 2000;
  bool refine = true;  ///< golden-section refinement around the grid argmax (p = inf)

  void validate() const {
    if (!(p_norm >= 1.0)) throw config_error("criterion.p must be >= 1 (or \"inf\")");
    if (grid_size < 200) throw config_error("criterion.grid_size must be >= 200");
  }
};

/// Global-best PSO with constriction-type coefficients.
struct PsoConfig {
  std::size_t swarm = 40;
  std::size_t iters = 300;
  double inertia = 0.729;
  double c1 = 1.494;
  double c2 = 1.494;
  std::uint64_t seed = 20200101;
  std::size_t restarts = 5;

  void validate() const {
    if (swarm < 2) throw config_error("pso.swarm must be >= 2");
    if (iters < 1) throw config_error("pso.iters must be >= 1");
    if (restarts < 1) throw config_error("pso.restarts must be >= 1");
  }
};

inline std::vector<double> equispaced_grid(double a, double b, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = b;
  return g;
}

/// Evaluates h(t; design) = c(t)^T Cov(theta*_n) c(t) and Phi_p for many
/// designs of one problem; the contrasts on the criterion grid are cached.
class CriterionEvaluator {
 public:
  explicit CriterionEvaluator(ComparisonProblem problem, CriterionConfig cfg = {})
      : problem_(std::move(problem)), cfg_(cfg) {
    cfg_.validate();
    const auto& m = problem_.model();
    grid_ = equispaced_grid(m.a(), m.b(), cfg_.grid_size);
    contrasts_ = contrast_matrix(grid_);
    if (std::isfinite(cfg_.p_norm)) {
      static const GaussLegendreRule rule = gauss_legendre(4);
      for (std::size_t k = 0; k + 1 < grid_.size(); ++k) {
        const double mid = 0.5 * (grid_[k] + grid_[k + 1]), half = 0.5 * (grid_[k + 1] - grid_[k]);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
          quad_nodes_.push_back(mid + half * rule.nodes[i]);
          quad_weights_.push_back(half * rule.weights[i]);
        }
      }
      quad_contrasts_ = contrast_matrix(quad_nodes_);
    }
  }

  const ComparisonProblem& problem() const { return problem_; }
  const CriterionConfig& config() const { return cfg_; }
  const std::vector<double>& grid() const { return grid_; }
  /// grid_size x p matrix; row k is c(grid[k])^T.
  const Mat& grid_contrasts() const { return contrasts_; }

  Mat contrast_matrix(std::span<const double> times) const {
    Mat c(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(problem_.model().p()));
    for (std::size_t k = 0; k < times.size(); ++k) c.row(static_cast<Eigen::Index>(k)) = problem_.contrast(times[k]).transpose();
    return c;
  }

  double h(const Mat& cov, double t) const {
    const Vec c = problem_.contrast(t);
    return c.dot(cov * c);
  }

  double h(const Design& d, double t) const {
    require_in_interval(problem_.model(), t, "h_function");
    return h(problem_.estimator_cov(d), t);
  }

  Vec h_on_grid(const Mat& cov) const { return (contrasts_ * cov).cwiseProduct(contrasts_).rowwise().sum(); }

  /// Phi_p for a given estimator covariance.
  double phi_from_cov(const Mat& cov) const {
    if (std::isfinite(cfg_.p_norm)) {
      const Vec hq = (quad_contrasts_ * cov).cwiseProduct(quad_contrasts_).rowwise().sum();
      double acc = 0.0;
      for (Eigen::Index i = 0; i < hq.size(); ++i)
        acc += quad_weights_[static_cast<std::size_t>(i)] * std::pow(std::max(0.0, hq(i)), cfg_.p_norm);
      return std::pow(acc, 1.0 / cfg_.p_norm);
    }
    const Vec hg = h_on_grid(cov);
    Eigen::Index k = 0;
    double best = hg.maxCoeff(&k);
    if (cfg_.refine) {
      const std::size_t lo = k > 0 ? static_cast<std::size_t>(k) - 1 : 0;
      const std::size_t hi = std::min(grid_.size() - 1, static_cast<std::size_t>(k) + 1);
      best = std::max(best, golden_max(cov, grid_[lo], grid_[hi]));
    }
    return best;
  }

  double phi(const Design& d) const { return phi_from_cov(problem_.estimator_cov(d)); }

  /// PSO objective: interior points in any order; coincident points (gap below
  /// 1e-6 (b - a), endpoints included) and numerical failures score +inf.
  double phi_interior(std::span<const double> interior) const {
    const auto& m = problem_.model();
    std::vector<double> pts;
    pts.reserve(interior.size() + 2);
    pts.push_back(m.a());
    pts.insert(pts.end(), interior.begin(), interior.end());
    pts.push_back(m.b());
    std::sort(pts.begin() + 1, pts.end() - 1);
    const double min_gap = 1e-6 * (m.b() - m.a());
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (!(pts[i] - pts[i - 1] >= min_gap)) return std::numeric_limits<double>::infinity();
    try {
      return phi(Design(std::move(pts)));
    } catch (const numerical_error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

 private:
  double golden_max(const Mat& cov, double lo, double hi) const {
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
    double f1 = h(cov, x1), f2 = h(cov, x2);
    while (hi - lo > 1e-8) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kInvPhi * (hi - lo);
        f2 = h(cov, x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kInvPhi * (hi - lo);
        f1 = h(cov, x1);
      }
    }
    return std::max(f1, f2);
  }

  ComparisonProblem problem_;
  CriterionConfig cfg_;
  std::vector<double> grid_;
  Mat contrasts_;
  std::vector<double> quad_nodes_;
  std::vector<double> quad_weights_;
  Mat quad_contrasts_;
};

/// h(t; t_1..t_n) = c(t)^T Cov(theta*_n) c(t).
inline double h_function(const CompositeModel& model, const GroupCovariance& gc, const Design& design, double t) {
  require_in_interval(model, t, "h_function");
  const ComparisonProblem problem(model, gc);
  const Vec c = difference_contrast(model, t);
  return c.dot(problem.estimator_cov(design) * c);
}

/// Phi_p(t_1..t_n) = || h(.; t_1..t_n) ||_p on [a, b].
inline double phi_p(const CompositeModel& model, const GroupCovariance& gc, const Design& design,
                    const CriterionConfig& cfg = {}) {
  return CriterionEvaluator(ComparisonProblem(model, gc), cfg).phi(design);
}

struct OptimizationResult {
  Design design;
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> restart_values;
  std::vector<std::vector<double>> history;  ///< best value after each iteration, per restart
  std::size_t evaluations = 0;
};

/// Minimizes Phi_p over the n - 2 interior points with t_1 = a, t_n = b fixed.
inline OptimizationResult optimize_design(const CriterionEvaluator& eval, std::size_t n, const PsoConfig& pso,
                                          std::size_t threads = 1) {
  pso.validate();
  const auto& m = eval.problem().model();
  if (n < 2) throw config_error("optimize_design: n must be at least 2");
  if (n == 2) {
    Design d({m.a(), m.b()});
    const double v = eval.phi(d);
    return {d, v, {v}, {{v}}, 1};
  }
  const std::size_t dim = n - 2;
  const double lo = m.a(), hi = m.b(), width = hi - lo;

  OptimizationResult best{Design({lo, hi}), std::numeric_limits<double>::infinity(), {}, {}, 0};
  std::vector<double> best_x;

  for (std::size_t r = 0; r < pso.restarts; ++r) {
    Rng rng = make_stream(pso.seed, r);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t s = pso.swarm;
    std::vector<std::vector<double>> x(s, std::vector<double>(dim)), v = x;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t d = 0; d < dim; ++d) {
        x[i][d] = lo + width * unit(rng);
        v[i][d] = 0.5 * (lo + width * unit(rng) - x[i][d]);
      }
    std::vector<double> f(s);
    auto evaluate_all = [&] {
      parallel_for(s, threads, [&](std::size_t i) { f[i] = eval.phi_interior(x[i]); });
      best.evaluations += s;
    };
    evaluate_all();
    std::vector<std::vector<double>> pbest = x;
    std::vector<double> pbest_f = f;
    std::size_t g = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
    std::vector<double> gbest = x[g];
    double gbest_f = f[g];
    std::vector<double> history;
    history.reserve(pso.iters);

    for (std::size_t it = 0; it < pso.iters; ++it) {
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
          const double r1 = unit(rng), r2 = unit(rng);
          double vel = pso.inertia * v[i][d] + pso.c1 * r1 * (pbest[i][d] - x[i][d]) +
                       pso.c2 * r2 * (gbest[d] - x[i][d]);
          vel = std::clamp(vel, -width, width);
          double pos = x[i][d] + vel;
          // reflect into [lo, hi]
          if (pos < lo) {
            pos = lo + (lo - pos);
            vel = -vel;
          }
          if (pos > hi) {
            pos = hi - (pos - hi);
            vel = -vel;
          }
          x[i][d] = std::clamp(pos, lo, hi);
          v[i][d] = vel;
        }
      }
      evaluate_all();
      for (std::size_t i = 0; i < s; ++i) {
        if (f[i] < pbest_f[i]) {
          pbest_f[i] = f[i];
          pbest[i] = x[i];
        }
        if (f[i] < gbest_f) {
          gbest_f = f[i];
          gbest = x[i];
        }
      }
      history.push_back(gbest_f);
    }
    best.restart_values.push_back(gbest_f);
    best.history.push_back(std::move(history));
    if (gbest_f < best.value) {
      best.value = gbest_f;
      best_x = gbest;
    }
  }
  if (!std::isfinite(best.value)) throw numerical_error("optimize_design: no finite criterion value found");
  std::vector<double> pts{lo};
  std::sort(best_x.begin(), best_x.end());
  pts.insert(pts.end(), best_x.begin(), best_x.end());
  pts.push_back(hi);
  best.design = Design(std::move(pts));
  return best;
}

inline OptimizationResult optimize_design(const CompositeModel& model, const GroupCovariance& gc, std::size_t n,
                                          const CriterionConfig& cfg = {}, const PsoConfig& pso = {},
                                          std::size_t threads = 1) {
  return optimize_design(CriterionEvaluator(ComparisonProblem(model, gc), cfg), n, pso, threads);
}

}  // namespace twocurve
