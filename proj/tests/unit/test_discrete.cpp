#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "twocurve/discrete.hpp"

using namespace twocurve;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Interval kIv{1.0, 10.0};

CurveBasis basis(std::vector<std::string> terms) { return CurveBasis::parse("g", terms); }

CompositeModel linear_pair() { return build_separate(basis({"t"}), basis({"t"}), kIv); }

WeightMatrices random_weights(std::size_t p, std::size_t m, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z;
  WeightMatrices w;
  for (std::size_t i = 0; i < m; ++i) {
    MatP2 phi(static_cast<Eigen::Index>(p), 2);
    for (auto& x : phi.reshaped()) x = scale * z(rng);
    w.phis.push_back(phi);
  }
  return w;
}

}  // namespace

TEST_CASE("designs", "[discrete]") {
  CHECK(uniform_design(1, 10, 4).points() == std::vector<double>{1, 4, 7, 10});
  CHECK(uniform_design(1, 10, 2).points() == std::vector<double>{1, 10});
  CHECK(uniform_design(0, 1, 5).points() == std::vector<double>{0, 0.25, 0.5, 0.75, 1});
  CHECK_THROWS_AS(Design({1.0}), config_error);
  CHECK_THROWS_AS(Design({1.0, 3.0, 3.0, 10.0}), config_error);
  CHECK_THROWS_AS(b_matrices(linear_pair(), GroupCovariance::identity(), Design({2.0, 10.0})), config_error);
}

TEST_CASE("B matrices of the linear model", "[discrete]") {
  const auto m = linear_pair();
  const BMatrices b2 = b_matrices(m, GroupCovariance::identity(), Design({1.0, 10.0}));
  CHECK((b2.blocks[0] - 3.0 * Mat::Identity(2, 2)).norm() < 1e-14);
  CHECK((b2.B - 9.0 * Mat::Identity(2, 2)).norm() < 1e-13);
  const BMatrices b3 = b_matrices(m, GroupCovariance::identity(), uniform_design(1, 10, 3));
  CHECK((b3.B - 9.0 * Mat::Identity(2, 2)).norm() < 1e-13);
}

TEST_CASE("B matrix against a direct evaluation", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const Design d({1, 4, 7, 10});
  const BMatrices b = b_matrices(m, gc, d);
  // entrywise re-implementation: (dF Sigma^-1 dF^T)_{jk} = sum_{r,s} dF_jr S^rs dF_ks
  const double det = 1.0 - 0.25;
  const double sinv[2][2] = {{1.0 / det, -0.5 / det}, {-0.5 / det, 1.0 / det}};
  Mat expect = Mat::Zero(6, 6);
  for (int i = 1; i < 4; ++i) {
    const Mat df = m.F(d[static_cast<std::size_t>(i)]) - m.F(d[static_cast<std::size_t>(i - 1)]);
    const double dt = d[static_cast<std::size_t>(i)] - d[static_cast<std::size_t>(i - 1)];
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k)
        for (int r = 0; r < 2; ++r)
          for (int s = 0; s < 2; ++s) expect(j, k) += df(j, r) * sinv[r][s] * df(k, s) / dt;
  }
  CHECK((b.B - expect).norm() < 1e-12 * expect.norm());
  Mat from_blocks = Mat::Zero(6, 6);
  for (const auto& blk : b.blocks) from_blocks += blk * blk.transpose();
  CHECK((from_blocks - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("optimal weights of the linear model", "[discrete]") {
  const auto m = linear_pair();
  const Design d({1.0, 10.0});
  const DiscreteEstimator est = make_discrete_estimator(m, GroupCovariance::identity(), d);
  REQUIRE(est.weights.phis.size() == 1);
  CHECK((est.weights.phis[0] - Mat::Identity(2, 2)).norm() < 1e-13);
  CHECK((est.cov - 0.1 * Mat::Identity(2, 2)).norm() < 1e-14);
  const Mat mse = mse_vs_blue(m, GroupCovariance::identity(), d, est.weights, Vec::Ones(2));
  CHECK(mse.norm() < 1e-10);

  Mat y(2, 2);
  y << 2, 3, 20, 30;
  const Vec theta = estimate(m, GroupCovariance::identity(), d, est.weights, y);
  CHECK(std::abs(theta(0) - 2) < 1e-10);
  CHECK(std::abs(theta(1) - 3) < 1e-10);
  CHECK_THROWS_AS(estimate(m, GroupCovariance::identity(), d, est.weights, Mat::Zero(3, 2)), config_error);
}

TEST_CASE("unbiasedness of the optimal weights at the reference designs", "[discrete]") {
  const CurveBasis cat[] = {catalog::f_a(), catalog::f_b(), catalog::f_c()};
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  const std::vector<double> designs[3][3] = {
      {{1, 1.59, 3.93, 10}, {1, 1.62, 3.91, 10}, {1, 1.74, 7.99, 10}},
      {{1, 3.46, 9.60, 10}, {1, 2.86, 8.83, 10}, {1, 2.61, 3.52, 10}},
      {{1, 2.20, 6.25, 10}, {1, 1.62, 3.98, 10}, {1, 2.85, 6.29, 10}}};
  const double rhos[3] = {0.2, 0.5, 0.7};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      const auto m = build_separate(cat[pairs[i][0]], cat[pairs[i][1]], kIv);
      const GroupCovariance gc(1, 1, rhos[k]);
      const Design d(designs[i][k]);
      const DiscreteEstimator est = make_discrete_estimator(m, gc, d);
      CHECK(unbiasedness_residual(m, gc, d, est.weights, est.info) < 1e-9);
    }
}

TEST_CASE("unbiasedness residual of zero and perturbed weights", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.3);
  const Design d = uniform_design(1, 10, 6);
  const DiscreteEstimator est = make_discrete_estimator(m, gc, d);
  WeightMatrices zero;
  for (std::size_t i = 0; i < 5; ++i) zero.phis.push_back(MatP2::Zero(6, 2));
  CHECK_THAT(unbiasedness_residual(m, gc, d, zero, est.info), WithinAbs(est.info.M0.norm(), 1e-12));

  std::mt19937_64 rng(3);
  WeightMatrices perturbed = est.weights;
  const WeightMatrices noise = random_weights(6, 5, rng, 1e-3);
  for (std::size_t i = 0; i < 5; ++i) perturbed.phis[i] += noise.phis[i];
  const double r = unbiasedness_residual(m, gc, d, perturbed, est.info);
  // the residual is linear in the weights, so only the noise contributes
  Mat expect = Mat::Zero(6, 6);
  for (std::size_t i = 0; i < 5; ++i)
    expect += noise.phis[i] * gc.matrix().inverse() * (m.F(d[i + 1]) - m.F(d[i])).transpose();
  CHECK(r > 0.0);
  CHECK_THAT(r, WithinRel(expect.norm(), 1e-6));
}

TEST_CASE("singular B uses the pseudoinverse", "[discrete]") {
  const auto m = build_separate(basis({"1"}), basis({"1"}), kIv);
  const DiscreteEstimator est = make_discrete_estimator(m, GroupCovariance::identity(), uniform_design(1, 10, 3));
  CHECK(est.weights.pseudoinverse);
  for (const auto& phi : est.weights.phis) CHECK(phi.norm() == 0.0);
}

TEST_CASE("estimator covariance dominates the BLUE and converges to it", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const InformationMatrix info = info_matrix(m, gc);
  const Mat blue = blue_cov(info);
  const Mat cov4 = estimator_cov(m, gc, uniform_design(1, 10, 4));
  CHECK(oracle::min_eig(cov4 - blue) >= -1e-8);
  CHECK((cov4 - cov4.transpose()).norm() == 0.0);
  const Mat cov1000 = estimator_cov(m, gc, uniform_design(1, 10, 1000));
  CHECK(oracle::rel_frobenius(cov1000, blue) < 1e-3);
}

TEST_CASE("covariance formula against the explicit linear form", "[discrete]") {
  const auto m = build_separate(catalog::f_b(), catalog::f_c(), kIv);
  const GroupCovariance gc(1.2, 0.9, -0.3);
  const Design d({1, 2.5, 4, 8.5, 10});
  const DiscreteEstimator est = make_discrete_estimator(m, gc, d);
  std::vector<Mat> phis(est.weights.phis.begin(), est.weights.phis.end());
  const Mat lin = oracle::linear_form_cov(m, gc.matrix(), d.points(), phis, est.info.M);
  CHECK(oracle::rel_frobenius(est.cov, lin) < 1e-8);

  // arbitrary unbiased weights: E[(theta_n - theta)(..)^T] = mse_vs_blue + M^-1
  std::mt19937_64 rng(21);
  const WeightMatrices w = project_unbiased(m, gc, d, random_weights(6, 4, rng), est.info);
  REQUIRE(unbiasedness_residual(m, gc, d, w, est.info) < 1e-9);
  std::vector<Mat> wp(w.phis.begin(), w.phis.end());
  const Mat lin_w = oracle::linear_form_cov(m, gc.matrix(), d.points(), wp, est.info.M);
  CHECK(oracle::rel_frobenius(weights_cov(m, gc, d, w, est.info), lin_w) < 1e-8);
  const Mat mse = mse_vs_blue(m, gc, d, w, Vec::Ones(6), est.info);
  CHECK(oracle::rel_frobenius(mse + est.m_inverse, lin_w) < 1e-8);
  CHECK(oracle::rel_frobenius(mse_vs_blue_unbiased(m, gc, d, w, est.info), mse) < 1e-8);
}

TEST_CASE("optimal weights minimize the MSE among unbiased weights", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_c(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const Design d = uniform_design(1, 10, 8);
  const DiscreteEstimator est = make_discrete_estimator(m, gc, d);
  const Mat best = mse_vs_blue_unbiased(m, gc, d, est.weights, est.info);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const WeightMatrices w = project_unbiased(m, gc, d, random_weights(6, 7, rng), est.info);
    REQUIRE(unbiasedness_residual(m, gc, d, w, est.info) < 1e-8);
    CHECK(oracle::min_eig(mse_vs_blue_unbiased(m, gc, d, w, est.info) - best) >= -1e-8);
  }
}

TEST_CASE("MSE with zero weights and theta = 0", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.4);
  const Design d = uniform_design(1, 10, 5);
  WeightMatrices zero;
  for (int i = 0; i < 4; ++i) zero.phis.push_back(MatP2::Zero(6, 2));
  const Mat mse = mse_vs_blue(m, gc, d, zero, Vec::Zero(6));
  const Mat m0 = oracle::trapezoid_information(m, gc.matrix(), 1000000, false);
  const Mat minv = blue_cov(m, gc);
  CHECK(oracle::rel_frobenius(mse, minv * m0 * minv) < 1e-7);
}

TEST_CASE("MSE against the BLUE decreases under refinement", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const InformationMatrix info = info_matrix(m, gc);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {4, 7, 13, 25, 49}) {  // nested designs
    const Design d = uniform_design(1, 10, n);
    const DiscreteEstimator est = make_discrete_estimator(m, gc, d, info, blue_cov(info));
    const double tr = mse_vs_blue(m, gc, d, est.weights, Vec::Ones(6), info).trace();
    CHECK(tr < prev);
    prev = tr;
  }
}

TEST_CASE("refining a design never increases the covariance trace", "[discrete]") {
  const auto m = build_separate(catalog::f_b(), catalog::f_c(), kIv);
  const GroupCovariance gc(1, 1, 0.7);
  const Mat coarse = estimator_cov(m, gc, Design({1, 3, 6, 10}));
  const Mat fine = estimator_cov(m, gc, Design({1, 2, 3, 4.5, 6, 8, 10}));
  CHECK(fine.trace() <= coarse.trace() + 1e-10);
}

TEST_CASE("swapping groups with the sign of rho", "[discrete]") {
  const GroupCovariance g1(1.3, 0.6, 0.4), g2(0.6, 1.3, 0.4);
  const Design d({1, 2, 5, 10});
  const Mat a = estimator_cov(build_separate(catalog::f_a(), catalog::f_c(), kIv), g1, d);
  const Mat b = estimator_cov(build_separate(catalog::f_c(), catalog::f_a(), kIv), g2, d);
  // permute (f_C, f_A) parameters back to (f_A, f_C)
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 4, 5, 0, 1, 2;
  const Mat bp = perm.transpose() * b * perm;
  CHECK(oracle::rel_frobenius(bp, a) < 1e-10);
}

TEST_CASE("a constant shift in group 1 changes the estimate", "[discrete]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  const GroupCovariance gc(1, 1, 0.5);
  const Design d({1, 4, 7, 10});
  const DiscreteEstimator est = make_discrete_estimator(m, gc, d);
  Mat y(4, 2);
  for (int j = 0; j < 4; ++j) y.row(j) = (m.F(d[static_cast<std::size_t>(j)]).transpose() * Vec::Ones(6)).transpose();
  const Vec clean = estimate(m, gc, d, est.weights, est.info, y);
  CHECK((clean - Vec::Ones(6)).norm() < 1e-9);
  y.col(0).array() += 0.5;
  CHECK((estimate(m, gc, d, est.weights, est.info, y) - clean).norm() > 1e-3);
}
