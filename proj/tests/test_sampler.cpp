#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "doob/metrics.hpp"
#include "doob/sampler.hpp"

using namespace doob;

namespace {

const VpSchedule kSched(4.0, 0.01, 64);

WeightSpec exp_linear() {
  ExpQuadReward w;
  w.Q = Eigen::MatrixXd::Zero(1, 1);
  w.b = Eigen::VectorXd::Ones(1);
  return WeightSpec{w};
}

}  // namespace

TEST_CASE("step closed form") {
  Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd g = Eigen::VectorXd::Constant(1, -0.25);
  Eigen::VectorXd xi = Eigen::VectorXd::Constant(1, 2.0);
  const double h = 0.1;
  const double expect = std::exp(h) + 2.0 * (std::exp(h) - 1.0) * 0.25 +
                        std::sqrt(std::exp(2.0 * h) - 1.0) * 2.0;
  CHECK(step(z, s, g, h, xi)(0) == doctest::Approx(expect).epsilon(1e-14));

  // zero noise, zero drift: pure exponential scaling
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  CHECK(step(z, zero, zero, h, zero)(0) ==
        doctest::Approx(std::exp(h)).epsilon(1e-14));

  CHECK_THROWS(step(z, s, g, 0.0, xi));
  CHECK_THROWS(step(z, s, g, -0.1, xi));
}

TEST_CASE("step is linear in each argument") {
  Eigen::Vector2d z(0.3, -1.0), s(0.1, 0.2), g(0.0, -0.5), xi(1.0, -1.0);
  const double h = 0.05;
  Eigen::Vector2d a = step(z, s, g, h, xi);
  Eigen::Vector2d b = step(2.0 * z, s, g, h, xi);
  CHECK((b - a - std::exp(h) * z).norm() < 1e-14);
  Eigen::Vector2d c = step(z, s, g, h, 2.0 * xi);
  CHECK((c - a - std::sqrt(std::exp(2 * h) - 1.0) * xi).norm() < 1e-13);
}

TEST_CASE("reference sampler recovers N(0, I)") {
  // N(0,I) is a fixed point of the forward process, so the reverse run must
  // return it (up to the T0 early stop).
  GaussianMixture p0 = GaussianMixture::standard(1);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 5000;
  cfg.seed = 3;
  SampleBatch b = reference_sample(p0, cfg);
  REQUIRE(b.points.rows() == 5000);
  REQUIRE(b.points.cols() == 1);
  CHECK(b.guidance_mode == "none");
  CHECK(b.truncated_count == 0);
  CHECK(b.wall_time_seconds > 0.0);

  Eigen::MatrixXd direct = sample_mixture(p0, 5000, 1234);
  const double w2 = w2_1d(b.points.col(0), direct.col(0));
  // calibrated same-distribution scale for n = 5000 is ~0.02
  CHECK(w2 * w2 < 0.05);
}

TEST_CASE("bitwise determinism in the seed") {
  GaussianMixture p0 = GaussianMixture::standard(2);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 64;
  cfg.seed = 17;
  SampleBatch a = reference_sample(p0, cfg);
  SampleBatch b = reference_sample(p0, cfg);
  CHECK((a.points.array() == b.points.array()).all());

  cfg.seed = 18;
  SampleBatch c = reference_sample(p0, cfg);
  CHECK_FALSE((a.points.array() == c.points.array()).all());
}

TEST_CASE("thread-count invariance is bitwise") {
  GaussianMixture p0 = GaussianMixture::standard(2);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 257;  // deliberately not a multiple of the thread count
  cfg.seed = 5;
  cfg.threads = 1;
  SampleBatch a = reference_sample(p0, cfg);
  cfg.threads = 3;
  SampleBatch b = reference_sample(p0, cfg);
  CHECK((a.points.array() == b.points.array()).all());
}

TEST_CASE("constant weight guidance leaves the path bitwise unchanged") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  SamplerConfig ref_cfg{kSched};
  ref_cfg.n_particles = 200;
  ref_cfg.seed = 9;
  SampleBatch ref = reference_sample(p0, ref_cfg);

  DoobOracle oracle(p0, kSched, WeightSpec{ConstantWeight{3.0}});
  SamplerConfig g_cfg = ref_cfg;
  g_cfg.guidance_mode = GuidanceMode::kOracle;
  SampleBatch guided = guided_sample(p0, g_cfg, oracle);
  CHECK((ref.points.array() == guided.points.array()).all());
}

TEST_CASE("estimator-guided run requires anchors") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 4;
  cfg.guidance_mode = GuidanceMode::kEstimator;
  std::vector<HEstimator> empty;
  CHECK_THROWS_WITH_AS(
      guided_sample(p0, cfg, empty),
      doctest::Contains("no estimator anchor for reverse time t=0"),
      std::runtime_error);
}

TEST_CASE("oracle guidance moves the sample toward the tilted target") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  WeightSpec spec = exp_linear();
  DoobOracle oracle(p0, kSched, spec);
  GaussianMixture target = tilted_target(p0, spec);  // N(1, 1)
  SamplerConfig cfg{kSched};
  cfg.n_particles = 4000;
  cfg.seed = 21;
  cfg.guidance_mode = GuidanceMode::kOracle;
  SampleBatch b = guided_sample(p0, cfg, oracle);
  CHECK(std::abs(b.points.col(0).mean() - 1.0) < 0.1);
  Eigen::MatrixXd tgt = sample_mixture(target, 4000, 77);
  const double w2 = w2_1d(b.points.col(0), tgt.col(0));
  CHECK(w2 * w2 < 0.05);
}

TEST_CASE("postprocess") {
  SampleBatch batch;
  batch.points.resize(3, 2);
  batch.points << 0.1, 0.2, 3.0, 4.0, -0.5, 0.0;
  batch.seed = 11;

  SampleBatch out = postprocess(batch, 2.0, 0.5);
  CHECK(out.truncated_count == 1);  // row (3, 4) has norm 5 > 2
  CHECK(out.points(1, 0) == 0.0);
  CHECK(out.points(1, 1) == 0.0);
  CHECK(out.points(0, 0) == doctest::Approx(0.2).epsilon(1e-15));  // z / mu
  CHECK(out.points(2, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(out.seed == 11);

  CHECK_THROWS(postprocess(batch, -1.0, 0.5));
  CHECK_THROWS(postprocess(batch, 2.0, 0.0));
  CHECK_THROWS(postprocess(batch, 2.0, 1.5));
}

TEST_CASE("default truncation radius formula") {
  const double r = default_truncation_radius(kSched, 2, 1e-4);
  const auto [mu, s2] = mu_sigma(kSched.early_stop);
  const double expect =
      std::sqrt((4.0 * 2 * mu * mu + 8.0 * s2) * std::log(1e4));
  CHECK(r == doctest::Approx(expect).epsilon(1e-14));
  // tighter eps target means a larger ball
  CHECK(default_truncation_radius(kSched, 2, 1e-6) > r);
  CHECK_THROWS(default_truncation_radius(kSched, 2, 0.0));
  CHECK_THROWS(default_truncation_radius(kSched, 2, 1.5));
}

TEST_CASE("postprocess inside guided_sample counts truncations") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  WeightSpec spec = exp_linear();
  DoobOracle oracle(p0, kSched, spec);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 2000;
  cfg.seed = 2;
  cfg.guidance_mode = GuidanceMode::kOracle;
  cfg.postprocess_enabled = true;
  cfg.truncation_radius = 1.0;  // aggressive ball: some mass must fall outside
  SampleBatch b = guided_sample(p0, cfg, oracle);
  CHECK(b.truncated_count > 0);
  for (int i = 0; i < b.points.rows(); ++i) {
    const double v = b.points(i, 0);
    // post-processed points are either exact zeros or rescaled survivors
    CHECK((v == 0.0 || std::abs(v) <= 1.0 / mu_of(kSched.early_stop) + 1e-12));
  }
}

TEST_CASE("noisy score mode perturbs but stays close for small eps") {
  GaussianMixture p0 = GaussianMixture::standard(1);
  SamplerConfig cfg{kSched};
  cfg.n_particles = 3000;
  cfg.seed = 31;
  SampleBatch exact = reference_sample(p0, cfg);

  SamplerConfig noisy_cfg = cfg;
  noisy_cfg.score_mode = ScoreMode::kNoisy;
  noisy_cfg.eps_ref = 0.1;
  SampleBatch noisy = reference_sample(p0, noisy_cfg);
  CHECK_FALSE((exact.points.array() == noisy.points.array()).all());
  const double w2 = w2_1d(exact.points.col(0), noisy.points.col(0));
  CHECK(w2 < 0.25);

  // eps = 0 in noisy mode adds exact zeros: bitwise identical to exact mode
  noisy_cfg.eps_ref = 0.0;
  SampleBatch zero_eps = reference_sample(p0, noisy_cfg);
  CHECK((exact.points.array() == zero_eps.points.array()).all());
}
