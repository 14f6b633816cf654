#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "twocurve/model.hpp"

using namespace twocurve;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Interval kIv{1.0, 10.0};

CurveBasis basis(std::vector<std::string> terms) { return CurveBasis::parse("g", terms); }

}  // namespace

TEST_CASE("separate model places bases in blocks", "[model]") {
  const auto m = build_separate(basis({"t"}), basis({"t"}), kIv);
  CHECK(m.p() == 2);
  const MatP2 f = m.F(3.0);
  CHECK(f(0, 0) == 3.0);
  CHECK(f(0, 1) == 0.0);
  CHECK(f(1, 0) == 0.0);
  CHECK(f(1, 1) == 3.0);
}

TEST_CASE("separate f_A / f_B entries", "[model]") {
  const auto m = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  CHECK(m.p() == 6);
  CHECK_THAT(m.F(2.0)(1, 0), WithinAbs(std::sin(2.0), 1e-15));
  // second column holds f_B = (t^2, cos t, cos 2t) in rows 4..6
  CHECK_THAT(m.F(4.0)(4, 1), WithinAbs(std::cos(4.0), 1e-15));
  CHECK_THAT(m.F(4.0)(5, 1), WithinAbs(std::cos(8.0), 1e-15));
  CHECK(m.F(4.0)(4, 0) == 0.0);
}

TEST_CASE("empty or undefined bases are rejected", "[model]") {
  CHECK_THROWS_AS(build_separate(CurveBasis{}, catalog::f_a(), kIv), config_error);
  CHECK_THROWS_AS(build_separate(catalog::f_c(), catalog::f_a(), Interval{0.0, 1.0}), config_error);
  CHECK_THROWS_AS(build_separate(catalog::f_a(), catalog::f_b(), Interval{2.0, 2.0}), config_error);
  CHECK_THROWS_AS(BasisTerm::parse("tan(t)"), config_error);
}

TEST_CASE("linearly dependent rows are rejected", "[model]") {
  CHECK_THROWS_AS(build_separate(basis({"t", "2*t"}), catalog::f_a(), kIv), config_error);
}

TEST_CASE("shared model layout", "[model]") {
  const auto m = build_shared(basis({"1"}), basis({"t"}), basis({"t^2"}), kIv);
  CHECK(m.p() == 3);
  const MatP2 f = m.F(2.0);
  Vec c1(3), c2(3);
  c1 << 1, 2, 0;
  c2 << 1, 0, 4;
  CHECK((f.col(0) - c1).norm() == 0.0);
  CHECK((f.col(1) - c2).norm() == 0.0);

  const auto m3 = build_shared(basis({"t"}), basis({"sin(t)"}), basis({"cos(t)"}), kIv);
  const MatP2 g = m3.F(1.3);
  CHECK(g(0, 0) == 1.3);
  CHECK(g(0, 1) == 1.3);
  CHECK(g(1, 0) == std::sin(1.3));
  CHECK(g(1, 1) == 0.0);
  CHECK(g(2, 0) == 0.0);
  CHECK(g(2, 1) == std::cos(1.3));
}

TEST_CASE("shared model with no common part equals the separate model", "[model]") {
  const auto shared = build_shared(CurveBasis{}, catalog::f_a(), catalog::f_b(), kIv);
  const auto separate = build_separate(catalog::f_a(), catalog::f_b(), kIv);
  CHECK(shared.structure() == Structure::separate);
  for (double t : {1.0, 2.5, 7.0, 10.0}) CHECK((shared.F(t) - separate.F(t)).norm() == 0.0);
}

TEST_CASE("difference contrast", "[model]") {
  const auto sep = build_separate(basis({"t"}), basis({"t"}), kIv);
  const Vec c = difference_contrast(sep, 3.0);
  CHECK(c(0) == 3.0);
  CHECK(c(1) == -3.0);

  const auto sh = build_shared(basis({"1"}), basis({"t"}), basis({"t^2"}), kIv);
  const Vec d = difference_contrast(sh, 2.0);
  CHECK(d(0) == 0.0);
  CHECK(d(1) == 2.0);
  CHECK(d(2) == -4.0);

  const auto ac = build_separate(catalog::f_a(), catalog::f_c(), kIv);
  Vec expect(6);
  expect << 1, std::sin(1.0), std::cos(1.0), -1, 0, -1;
  CHECK((difference_contrast(ac, 1.0) - expect).norm() < 1e-15);

  CHECK_THROWS_AS(difference_contrast(ac, 10.5), config_error);
}

TEST_CASE("catalog bases at reference points", "[model]") {
  const Vec a = catalog::f_a().eval(std::numbers::pi);
  CHECK_THAT(a(0), WithinAbs(std::numbers::pi, 1e-15));
  CHECK_THAT(a(1), WithinAbs(0.0, 1e-15));
  CHECK_THAT(a(2), WithinAbs(-1.0, 1e-15));
  const Vec b = catalog::f_b().eval(0.0);
  CHECK(b(0) == 0.0);
  CHECK(b(1) == 1.0);
  CHECK(b(2) == 1.0);
  const Vec c = catalog::f_c().eval(1.0);
  CHECK(c(0) == 1.0);
  CHECK(c(1) == 0.0);
  CHECK(c(2) == 1.0);
}

TEST_CASE("analytic derivatives agree with central differences", "[model]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  const CurveBasis all = basis({"1", "t", "t^3", "sin(2t)", "cos(-0.5t)", "exp(0.3t)", "log(t)", "1/t", "2.5*t^2"});
  for (int k = 0; k < 100; ++k) {
    const double t = u(rng), h = 1e-5 * t;
    const Vec fd = (all.eval(t + h) - all.eval(t - h)) / (2 * h);
    const Vec an = all.deriv(t);
    for (Eigen::Index i = 0; i < an.size(); ++i) CHECK(std::abs(fd(i) - an(i)) <= 1e-6 * std::max(1.0, std::abs(an(i))));
  }
}

TEST_CASE("block structure round trip and contrast identity", "[model]") {
  const auto m = build_separate(catalog::f_b(), catalog::f_c(), kIv);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  std::normal_distribution<double> z;
  for (int k = 0; k < 100; ++k) {
    const double t = u(rng);
    const MatP2 f = m.F(t);
    CHECK((f.col(0).head(3) - catalog::f_b().eval(t)).norm() == 0.0);
    CHECK((f.col(1).tail(3) - catalog::f_c().eval(t)).norm() == 0.0);
    Vec theta(6);
    for (auto& x : theta) x = z(rng);
    const double lhs = difference_contrast(m, t).dot(theta);
    const double rhs = f.col(0).dot(theta) - f.col(1).dot(theta);
    CHECK_THAT(lhs, WithinAbs(rhs, 1e-12 * (1 + std::abs(rhs))));
  }
}

TEST_CASE("basis term parser grammar", "[model]") {
  CHECK_THAT(BasisTerm::parse("3*t^2").value(2.0), WithinRel(12.0, 1e-15));
  CHECK_THAT(BasisTerm::parse("sin(2*t)").value(0.3), WithinRel(std::sin(0.6), 1e-15));
  CHECK_THAT(BasisTerm::parse("exp(-t)").value(1.0), WithinRel(std::exp(-1.0), 1e-15));
  CHECK_THAT(BasisTerm::parse("cos(t)").value(0.5), WithinRel(std::cos(0.5), 1e-15));
  CHECK_THAT(BasisTerm::parse("1/t").derivative(2.0), WithinRel(-0.25, 1e-15));
  CHECK_THROWS_AS(BasisTerm::parse("t^"), config_error);
  CHECK_THROWS_AS(catalog::by_name("f_D"), config_error);
}
