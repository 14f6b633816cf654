#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "twocurve/simulate.hpp"

using namespace twocurve;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Interval kIv{1.0, 10.0};

CurveBasis basis(std::vector<std::string> terms) { return CurveBasis::parse("g", terms); }

/// Sample covariance of the stacked vector (Y_1(t_1..t_n), Y_2(t_1..t_n)).
Mat sample_cov(const ObservationSampler& s, std::size_t reps, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(s.design().size());
  Mat x(2 * n, static_cast<Eigen::Index>(reps));
  for (std::size_t r = 0; r < reps; ++r) {
    const Mat y = s.sample(seed, r).y;
    x.col(static_cast<Eigen::Index>(r)) << y.col(0), y.col(1);
  }
  const Vec mean = x.rowwise().mean();
  const Mat c = x.colwise() - mean;
  return c * c.transpose() / static_cast<double>(reps - 1);
}

}  // namespace

TEST_CASE("sampled observations have Brownian covariance", "[simulate]") {
  const auto m = build_separate(basis({"t"}), basis({"t"}), kIv);
  const Design d({1, 4, 7, 10});

  SECTION("independent groups") {
    const ComparisonProblem problem(m, GroupCovariance::identity());
    const Mat c = sample_cov(ObservationSampler(problem, Vec::Zero(2), d), 100000, 1);
    CHECK_THAT(c(0, 0), WithinRel(1.0, 0.02));
  }
  SECTION("correlated groups, full covariance") {
    const GroupCovariance gc(1.5, 0.7, 0.5);
    const ComparisonProblem problem(m, gc);
    const Mat c = sample_cov(ObservationSampler(problem, Vec::Ones(2), d), 100000, 2);
    Mat v(8, 8);
    for (int g = 0; g < 2; ++g)
      for (int h = 0; h < 2; ++h)
        for (int j = 0; j < 4; ++j)
          for (int k = 0; k < 4; ++k)
            v(4 * g + j, 4 * h + k) =
                gc.matrix()(g, h) * std::min(d[static_cast<std::size_t>(j)], d[static_cast<std::size_t>(k)]);
    // Gaussian sample covariance: Var(c_ab) = (V_aa V_bb + V_ab^2) / N
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const double se = std::sqrt((v(a, a) * v(b, b) + v(a, b) * v(a, b)) / 100000.0);
        CHECK(std::abs(c(a, b) - v(a, b)) <= 4.5 * se);
      }
  }
  SECTION("same-time and cross-time correlation") {
    const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.7));
    const Mat c = sample_cov(ObservationSampler(problem, Vec::Zero(2), d), 100000, 3);
    CHECK_THAT(c(1, 5) / std::sqrt(c(1, 1) * c(5, 5)), WithinAbs(0.7, 0.01));
    const ComparisonProblem half(m, GroupCovariance(1, 1, 0.5));
    const Mat e = sample_cov(ObservationSampler(half, Vec::Zero(2), Design({1, 4, 10})), 100000, 4);
    // Corr(Y_1(1), Y_2(4)) = 0.5 * sqrt(1/4)
    CHECK_THAT(e(0, 4) / std::sqrt(e(0, 0) * e(4, 4)), WithinAbs(cross_correlation(GroupCovariance(1, 1, 0.5), 1, 4), 0.01));
  }
}

TEST_CASE("sampling is reproducible and checks theta", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const Design d({1, 4, 7, 10});
  const PathSample a = sample_observations(m, GroupCovariance(1, 1, 0.5), Vec::Ones(6), d, 77);
  const PathSample b = sample_observations(m, GroupCovariance(1, 1, 0.5), Vec::Ones(6), d, 77);
  CHECK(a.y == b.y);
  CHECK(a.seed == 77);
  CHECK_THROWS_AS(sample_observations(m, GroupCovariance(1, 1, 0.5), Vec::Ones(5), d, 77), config_error);
}

TEST_CASE("OU sampling reproduces the exponential kernel", "[simulate]") {
  const auto m = build_separate(basis({"t"}), basis({"t"}), kIv);
  const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.4), TriangularKernel::ornstein_uhlenbeck(0.5));
  const Design d({1, 2, 4, 10});
  const Mat c = sample_cov(ObservationSampler(problem, Vec::Zero(2), d), 100000, 5);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      const double kv = std::exp(-0.5 * std::abs(d[static_cast<std::size_t>(j)] - d[static_cast<std::size_t>(k)]));
      CHECK(std::abs(c(j, k) - kv) <= 0.03);
      CHECK(std::abs(c(j, 4 + k) - 0.4 * kv) <= 0.03);
    }
}

TEST_CASE("empirical quantile", "[simulate]") {
  std::vector<double> v{5, 1, 4, 2, 3};
  CHECK(empirical_quantile(v, 0.5) == 3);
  CHECK(empirical_quantile(v, 0.99) == 5);
  CHECK(empirical_quantile(v, 0.01) == 1);
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), config_error);
}

TEST_CASE("critical value at a single point is a normal quantile", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const std::vector<double> one{5.0};
  const Design d({1, 4, 7, 10});
  CHECK_THAT(critical_value(m, gc, d, 0.05, one, 100000, 1), WithinAbs(1.95996, 0.02));
  CHECK_THAT(critical_value(m, gc, d, 0.5, one, 100000, 1), WithinAbs(0.67449, 0.01));
  CHECK_THROWS_AS(critical_value(m, gc, d, 0.0, one, 100000, 1), config_error);
  CHECK_THROWS_AS(critical_value(m, gc, d, 0.05, one, 10, 1), config_error);
}

TEST_CASE("critical value monotonicity", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const Design d({1, 4, 7, 10});
  const ComparisonProblem problem(m, gc);
  const Mat cov = problem.estimator_cov(d);
  const auto coarse = equispaced_grid(1, 10, 51), fine = equispaced_grid(1, 10, 501);
  const double d_single = critical_value(problem, cov, 0.05, std::vector<double>{1.0}, 20000, 4);
  const double d_coarse = critical_value(problem, cov, 0.05, coarse, 20000, 4);
  const double d_fine = critical_value(problem, cov, 0.05, fine, 20000, 4);
  CHECK(d_coarse >= d_single);
  CHECK(d_fine >= d_coarse);
  CHECK(d_fine >= 1.96);
  CHECK(critical_value(problem, cov, 0.10, fine, 20000, 4) <= d_fine);
  CHECK(critical_value(problem, cov, 0.05, fine, 20000, 4, 3) == d_fine);
}

TEST_CASE("degenerate contrast is reported", "[simulate]") {
  const auto m = build_shared(basis({"1"}), basis({"t"}), basis({"t^2"}), Interval{0.5, 2});
  const ComparisonProblem problem(m, GroupCovariance::identity());
  const Design d({0.5, 1, 2});
  // c(t) = (0, t, -t^2) never vanishes on [0.5, 2]
  const std::vector<double> g{0.5, 1.0};
  CHECK_NOTHROW(critical_value(problem, problem.estimator_cov(d), 0.05, g, 2000, 1));
  const auto gen = build_general(basis({"t", "1"}), basis({"t", "t^2"}), Interval{1, 2});
  const ComparisonProblem gp(gen, GroupCovariance::identity());
  // c(t) = (0, 1 - t^2) vanishes at t = 1
  try {
    critical_value(gp, gp.estimator_cov(Design({1, 1.5, 2})), 0.05, std::vector<double>{1.0, 1.5}, 2000, 1);
    FAIL("expected a numerical_error");
  } catch (const numerical_error& e) {
    CHECK(std::string(e.what()).find("t = 1") != std::string::npos);
  }
}

TEST_CASE("noise-free band for the linear model", "[simulate]") {
  const auto m = build_separate(basis({"t"}), basis({"t"}), kIv);
  const ComparisonProblem problem(m, GroupCovariance::identity());
  const Design d({1, 10});
  Mat y(2, 2);
  y << 1, 1, 10, 10;
  const auto grid = equispaced_grid(1, 10, 50);
  const BandResult band = confidence_band(problem, d, y, 0.05, grid, 20000, 3);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(std::abs(band.estimate[k]) < 1e-12);
    const double half = band.D * std::sqrt(0.2 * grid[k] * grid[k]);
    CHECK_THAT(band.upper[k], WithinAbs(half, 1e-10));
    CHECK_THAT(band.lower[k], WithinAbs(-half, 1e-10));
    CHECK_THAT(band.upper[k] - band.lower[k], WithinAbs(2 * band.D * std::sqrt(band.h[k]), 1e-12));
  }
  // with proportional contrasts the sup statistic is a single |N(0,1)|
  CHECK_THAT(band.D, WithinAbs(1.96, 0.05));
}

TEST_CASE("simultaneous coverage", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_c(), kIv);
  const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.5));
  BandStudyConfig cfg;
  cfg.runs = 2000;
  cfg.grid = 200;
  cfg.mc_draws = 20000;
  cfg.seed = 2024;
  const BandStudy s = band_study(problem, Design({1, 2.86, 8.83, 10}), Vec::Ones(6), cfg);
  CHECK(s.coverage >= 0.93);
  CHECK(s.coverage <= 0.97);
  for (std::size_t k = 0; k < s.grid.size(); ++k) CHECK(s.mean_upper[k] >= s.mean_lower[k]);
}

TEST_CASE("optimal design narrows the band", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.2));
  BandStudyConfig cfg;
  cfg.runs = 20;
  cfg.grid = 200;
  cfg.mc_draws = 5000;
  const BandStudy opt = band_study(problem, Design({1, 1.59, 3.93, 10}), Vec::Ones(6), cfg);
  const BandStudy uni = band_study(problem, Design({1, 4, 7, 10}), Vec::Ones(6), cfg);
  CHECK(opt.mean_max_width < uni.mean_max_width);
}

TEST_CASE("band study is independent of the thread count", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_c(), kIv);
  const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.5));
  BandStudyConfig cfg;
  cfg.runs = 30;
  cfg.grid = 100;
  cfg.mc_draws = 3000;
  const BandStudy a = band_study(problem, Design({1, 4, 7, 10}), Vec::Ones(6), cfg);
  cfg.threads = 3;
  const BandStudy b = band_study(problem, Design({1, 4, 7, 10}), Vec::Ones(6), cfg);
  CHECK(a.D == b.D);
  CHECK(a.mean_lower == b.mean_lower);
  CHECK(a.mean_upper == b.mean_upper);
}

TEST_CASE("zero true difference for equal bases and theta = 0", "[simulate]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_a(), kIv);
  const ComparisonProblem problem(m, GroupCovariance(1, 1, 0.5));
  BandStudyConfig cfg;
  cfg.runs = 5;
  cfg.grid = 50;
  cfg.mc_draws = 2000;
  const BandStudy s = band_study(problem, Design({1, 4, 7, 10}), Vec::Zero(6), cfg);
  for (double v : s.truth) CHECK(v == 0.0);
}
