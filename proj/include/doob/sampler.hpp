#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doob/doob_oracle.hpp"
#include "doob/gaussian_mixture.hpp"
#include "doob/h_matching.hpp"
#include "doob/schedule.hpp"

namespace doob {

enum class GuidanceMode { kNone, kOracle, kEstimator };
enum class ScoreMode { kExact, kNoisy };

struct SamplerConfig {
  VpSchedule sched;
  int n_particles = 1;
  std::uint64_t seed = 0;
  GuidanceMode guidance_mode = GuidanceMode::kNone;
  ScoreMode score_mode = ScoreMode::kExact;
  double eps_ref = 0.0;  // score perturbation scale (noisy mode)
  bool postprocess_enabled = false;
  double truncation_radius = std::numeric_limits<double>::infinity();
  int threads = 1;
};

// Default radius R^2 = (4 d mu_{T0}^2 + 8 sigma_{T0}^2) * log(1/eps_target).
double default_truncation_radius(const VpSchedule& sched, int d,
                                 double eps_target);

struct SampleBatch {
  Eigen::MatrixXd points;  // n x d
  std::uint64_t seed = 0;
  std::string guidance_mode;
  int truncated_count = 0;
  double wall_time_seconds = 0.0;
};

// One exponential-integrator update:
//   exp(h) z + 2 (exp(h) - 1) (s + g) + sqrt(exp(2h) - 1) xi.
Eigen::VectorXd step(const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                     const Eigen::VectorXd& g, double h,
                     const Eigen::VectorXd& xi);

// Unguided reference-process run (g = 0); no post-processing by default.
SampleBatch reference_sample(const GaussianMixture& p0, const SamplerConfig& cfg);

// Guided run: g from the exact oracle or from per-anchor-time fitted
// estimators (nearest-anchor lookup). Applies post-processing when enabled.
SampleBatch guided_sample(const GaussianMixture& p0, const SamplerConfig& cfg,
                          const DoobOracle& oracle);
SampleBatch guided_sample(const GaussianMixture& p0, const SamplerConfig& cfg,
                          const std::vector<HEstimator>& estimators);

// z -> mu_{T0}^{-1} z 1{||z|| <= R}; truncated particles become exact zeros.
SampleBatch postprocess(const SampleBatch& batch, double radius, double mu_t0);

}  // namespace doob
