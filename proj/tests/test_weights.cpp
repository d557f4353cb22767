#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "doob/rng.hpp"
#include "doob/weights.hpp"

using namespace doob;

namespace {

GaussianLikelihood lik_1d(double floor) {
  GaussianLikelihood w;
  w.A = Eigen::MatrixXd::Ones(1, 1);
  w.y = Eigen::VectorXd::Constant(1, 0.5);
  w.sigma_noise = 1.0;
  w.floor = floor;
  return w;
}

ExpQuadReward exp_linear_1d() {
  ExpQuadReward w;
  w.Q = Eigen::MatrixXd::Zero(1, 1);
  w.b = Eigen::VectorXd::Ones(1);
  return w;
}

}  // namespace

TEST_CASE("eval_weight closed forms") {
  {
    GaussianLikelihood w = lik_1d(1e-3);
    Eigen::VectorXd x(1);
    x(0) = 0.5;
    CHECK(eval_weight(WeightSpec{w}, x) == doctest::Approx(1.0));
    x(0) = 1.5;
    CHECK(eval_weight(WeightSpec{w}, x) == doctest::Approx(std::exp(-0.5)));
    x(0) = 100.0;  // floor engages far from y
    CHECK(eval_weight(WeightSpec{w}, x) == doctest::Approx(1e-3));
  }
  {
    ExpQuadReward w;
    w.Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    w.b = Eigen::Vector2d(1.0, -1.0);
    w.c = 0.3;
    w.alpha = 2.0;
    Eigen::Vector2d x(0.5, 0.25);
    const double r = -0.5 * x.dot(w.Q * x) + w.b.dot(x) + w.c;
    CHECK(eval_weight(WeightSpec{w}, x) == doctest::Approx(std::exp(r / 2.0)));
  }
  {
    ConstantWeight w{2.5};
    CHECK(eval_weight(WeightSpec{w}, Eigen::Vector3d::Zero()) == 2.5);
  }
  {
    Eigen::VectorXd bad(1);
    bad(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(eval_weight(WeightSpec{ConstantWeight{}}, bad));
  }
}

TEST_CASE("bounds_on_support") {
  CHECK_THROWS(bounds_on_support(WeightSpec{ConstantWeight{}}, 0.0));

  {
    auto b = bounds_on_support(WeightSpec{lik_1d(0.05)}, 3.0);
    REQUIRE(b.has_value());
    CHECK(b->lower == 0.05);
    CHECK(b->upper == 1.0);
  }
  CHECK_FALSE(bounds_on_support(WeightSpec{lik_1d(0.0)}, 3.0).has_value());
  {
    auto b = bounds_on_support(WeightSpec{ConstantWeight{1.7}}, 1.0);
    REQUIRE(b.has_value());
    CHECK(b->lower == 1.7);
    CHECK(b->upper == 1.7);
  }
  {
    DensityRatio dr(GaussianMixture::standard(1), GaussianMixture::standard(1));
    CHECK_FALSE(bounds_on_support(WeightSpec{dr}, 2.0).has_value());
  }
  {
    // w(x) = e^x on |x| <= 2: exact range (e^-2, e^2)
    auto b = bounds_on_support(WeightSpec{exp_linear_1d()}, 2.0);
    REQUIRE(b.has_value());
    CHECK(b->lower == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(b->upper == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
    // cross-check against a grid scan
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 400; ++i) {
      Eigen::VectorXd x(1);
      x(0) = -2.0 + 4.0 * i / 400;
      const double v = eval_weight(WeightSpec{exp_linear_1d()}, x);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(b->lower <= lo * (1 + 1e-12));
    CHECK(b->upper >= hi * (1 - 1e-12));
  }
  {
    // quadratic term: bound must dominate the grid scan (not necessarily tight)
    ExpQuadReward w;
    w.Q = Eigen::MatrixXd::Constant(1, 1, 3.0);
    w.b = Eigen::VectorXd::Constant(1, -0.5);
    w.c = 0.2;
    auto b = bounds_on_support(WeightSpec{w}, 1.5);
    REQUIRE(b.has_value());
    for (int i = 0; i <= 300; ++i) {
      Eigen::VectorXd x(1);
      x(0) = -1.5 + 3.0 * i / 300;
      const double v = eval_weight(WeightSpec{w}, x);
      CHECK(v <= b->upper * (1 + 1e-12));
      CHECK(v >= b->lower * (1 - 1e-12));
    }
  }
}

TEST_CASE("is_conjugate") {
  CHECK(is_conjugate(WeightSpec{lik_1d(0.0)}));
  CHECK_FALSE(is_conjugate(WeightSpec{lik_1d(1e-3)}));
  CHECK(is_conjugate(WeightSpec{exp_linear_1d()}));
  CHECK(is_conjugate(WeightSpec{ConstantWeight{}}));
  DensityRatio dr(GaussianMixture::standard(1), GaussianMixture::standard(1));
  CHECK_FALSE(is_conjugate(WeightSpec{dr}));
}

TEST_CASE("tilted_target: N(0,1) tilted by e^x is N(1,1)") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  GaussianMixture q = tilted_target(p0, WeightSpec{exp_linear_1d()});
  REQUIRE(q.components() == 1);
  CHECK(q.means[0](0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q.covs[0](0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("tilted_target: Gaussian likelihood posterior") {
  // prior N(0,1), likelihood y = x + noise, sigma = 1, y = 0.5:
  // posterior N(0.25, 0.5)
  GaussianMixture p0 = GaussianMixture::standard(1);
  GaussianMixture q = tilted_target(p0, WeightSpec{lik_1d(0.0)});
  CHECK(q.means[0](0) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(q.covs[0](0, 0) == doctest::Approx(0.5).epsilon(1e-13));

  CHECK_THROWS(tilted_target(p0, WeightSpec{lik_1d(1e-3)}));
  DensityRatio dr(GaussianMixture::standard(1), GaussianMixture::standard(1));
  CHECK_THROWS(tilted_target(p0, WeightSpec{dr}));
  // constant weight leaves the mixture untouched
  GaussianMixture same = tilted_target(p0, WeightSpec{ConstantWeight{3.0}});
  CHECK((same.means[0] - p0.means[0]).norm() == 0.0);
}

TEST_CASE("tilted_target mixture reweighting vs importance sampling") {
  GaussianMixture p0;
  p0.weights = Eigen::Vector2d(0.3, 0.7);
  p0.means = {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)};
  p0.covs = {Eigen::MatrixXd::Constant(1, 1, 0.5),
             Eigen::MatrixXd::Constant(1, 1, 0.5)};
  WeightSpec spec{exp_linear_1d()};
  GaussianMixture q = tilted_target(p0, spec);
  CHECK(q.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));

  const int n = 400000;
  Eigen::MatrixXd xs = sample_mixture(p0, n, 21);
  double sw = 0.0, swx = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = eval_weight(spec, xs.row(i).transpose());
    sw += w;
    swx += w * xs(i, 0);
  }
  const double is_mean = swx / sw;
  CHECK(std::abs(q.mean()(0) - is_mean) < 0.01);
}

TEST_CASE("density ratio: q0 = p0 gives w = 1; mixture case matches log-densities") {
  GaussianMixture p0;
  p0.weights = Eigen::Vector2d(0.5, 0.5);
  p0.means = {Eigen::VectorXd::Constant(1, -0.5), Eigen::VectorXd::Constant(1, 0.5)};
  p0.covs = {Eigen::MatrixXd::Constant(1, 1, 0.4),
             Eigen::MatrixXd::Constant(1, 1, 0.4)};
  DensityRatio same(p0, p0);
  rng::CounterStream st(3);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd x = 2.0 * st.normal_vector(1);
    CHECK(std::abs(eval_weight(WeightSpec{same}, x) - 1.0) < 1e-8);
  }

  GaussianMixture q0 = GaussianMixture::standard(1);
  DensityRatio dr(q0, p0);
  MixtureDensity dp(p0), dq(q0);
  Eigen::VectorXd x(1);
  x(0) = 0.3;
  CHECK(eval_weight(WeightSpec{dr}, x) ==
        doctest::Approx(std::exp(dq.log_density(x) - dp.log_density(x))));

  // far in the tail the reference underflows and evaluation refuses
  Eigen::VectorXd far(1);
  far(0) = 60.0;
  CHECK_THROWS(eval_weight(WeightSpec{dr}, far));
}

TEST_CASE("floored likelihood bounds hold empirically") {
  GaussianLikelihood w;
  w.A = Eigen::MatrixXd::Identity(2, 2);
  w.y = Eigen::Vector2d(0.3, -0.7);
  w.sigma_noise = 0.8;
  w.floor = 0.01;
  auto b = bounds_on_support(WeightSpec{w}, 5.0);
  REQUIRE(b.has_value());
  rng::CounterStream st(9);
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd x = 2.0 * st.normal_vector(2);
    const double v = eval_weight(WeightSpec{w}, x);
    CHECK(v >= b->lower);
    CHECK(v <= b->upper);
  }
}

TEST_CASE("tilt_gaussian") {
  // conjugate identity: tilting N(0,1) by e^x gives z = e^{1/2}, mean 1
  TiltedGaussian tg = tilt_gaussian(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Identity(1, 1),
                                    WeightSpec{exp_linear_1d()});
  CHECK(tg.log_z == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(tg.mean(0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(tg.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-13));

  // quadratic tilt of N(m, C): precision adds Q/alpha
  {
    ExpQuadReward w;
    w.Q = Eigen::MatrixXd::Constant(1, 1, 3.0);
    w.b = Eigen::VectorXd::Constant(1, 0.5);
    TiltedGaussian t2 = tilt_gaussian(Eigen::VectorXd::Constant(1, 0.2),
                                      Eigen::MatrixXd::Constant(1, 1, 0.5),
                                      WeightSpec{w});
    CHECK(t2.cov(0, 0) == doctest::Approx(1.0 / (2.0 + 3.0)).epsilon(1e-12));
    CHECK(t2.mean(0) == doctest::Approx((0.2 / 0.5 + 0.5) / 5.0).epsilon(1e-12));
  }

  // Gaussian likelihood: z matches the evidence density up to the dropped
  // (2 pi sigma^2)^{-1/2} prefactor
  {
    GaussianLikelihood w = lik_1d(0.0);
    TiltedGaussian t3 = tilt_gaussian(Eigen::VectorXd::Zero(1),
                                      Eigen::MatrixXd::Identity(1, 1),
                                      WeightSpec{w});
    // E[w] = sigma/sqrt(sigma^2 + 1) * exp(-y^2 / (2 (sigma^2 + 1)))
    const double expect = std::sqrt(0.5) * std::exp(-0.25 * 0.5 * 0.5);
    CHECK(std::exp(t3.log_z) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(t3.mean(0) == doctest::Approx(0.25).epsilon(1e-12));
  }

  CHECK_THROWS(tilt_gaussian(Eigen::VectorXd::Zero(1),
                             Eigen::MatrixXd::Identity(1, 1),
                             WeightSpec{lik_1d(1e-3)}));
  DensityRatio dr(GaussianMixture::standard(1), GaussianMixture::standard(1));
  CHECK_THROWS(tilt_gaussian(Eigen::VectorXd::Zero(1),
                             Eigen::MatrixXd::Identity(1, 1), WeightSpec{dr}));
}

TEST_CASE("tilt_gaussian Monte Carlo cross-check") {
  GaussianLikelihood w;
  w.A = Eigen::MatrixXd::Identity(2, 2);
  w.y = Eigen::Vector2d(1.0, 0.0);
  w.sigma_noise = 1.0;
  w.floor = 0.0;
  Eigen::Vector2d m(0.2, -0.3);
  Eigen::Matrix2d C;
  C << 0.6, 0.1, 0.1, 0.4;
  TiltedGaussian tg = tilt_gaussian(m, C, WeightSpec{w});

  const int n = 300000;
  Eigen::MatrixXd xs = sample_mixture(GaussianMixture::single(m, C), n, 31);
  double sw = 0.0;
  Eigen::Vector2d swx = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const double wi = eval_weight(WeightSpec{w}, xs.row(i).transpose());
    sw += wi;
    swx += wi * xs.row(i).transpose();
  }
  CHECK(std::abs(sw / n - std::exp(tg.log_z)) < 0.005);
  CHECK((swx / sw - tg.mean).norm() < 0.01);
}
