#pragma once

#include <memory>
#include <optional>
#include <variant>

#include <Eigen/Dense>

#include "doob/gaussian_mixture.hpp"

namespace doob {

// w(x) = max(floor, exp(-||y - Ax||^2 / (2 sigma^2))). The (2 pi sigma^2)^{-d/2}
// prefactor is dropped: the guidance grad(log h) is invariant to constant
// rescaling of w, and dropping it keeps w <= 1.
struct GaussianLikelihood {
  Eigen::MatrixXd A;    // m x d
  Eigen::VectorXd y;    // m
  double sigma_noise;   // > 0
  double floor = 1e-3;  // >= 0
};

// r(x) = -1/2 x^T Q x + b^T x + c with Q symmetric PSD; w = exp(r / alpha).
struct ExpQuadReward {
  Eigen::MatrixXd Q;
  Eigen::VectorXd b;
  double c = 0.0;
  double alpha = 1.0;
};

// w(x) = q0(x) / p0(x).
struct DensityRatio {
  GaussianMixture target;
  GaussianMixture reference;
  std::shared_ptr<const MixtureDensity> target_density;
  std::shared_ptr<const MixtureDensity> reference_density;

  DensityRatio(GaussianMixture q0, GaussianMixture p0);
};

struct ConstantWeight {
  double c = 1.0;
};

using WeightSpec =
    std::variant<GaussianLikelihood, ExpQuadReward, DensityRatio, ConstantWeight>;

double eval_weight(const WeightSpec& spec, const Eigen::VectorXd& x);

struct WeightBounds {
  double lower;  // B_lo > 0
  double upper;  // B_hi
};

// Certified bounds of w on the ball ||x||_2 <= radius. Unsupported variants
// (DensityRatio, unfloored likelihood) return nullopt; the caller must supply
// bounds.
std::optional<WeightBounds> bounds_on_support(const WeightSpec& spec,
                                              double radius);

bool is_conjugate(const WeightSpec& spec);

// Exact tilted mixture q0 ~ w * p0 for conjugate specs (unfloored Gaussian
// likelihood, quadratic reward, constant). Throws for the rest.
GaussianMixture tilted_target(const GaussianMixture& p0, const WeightSpec& spec);

// Per-component conjugate Gaussian integral: for X ~ N(m, C),
//   log_z = log E[w(X)], and (mean, cov) of the w-tilted Gaussian
//   (so E[X w(X)] = exp(log_z) * mean).
struct TiltedGaussian {
  double log_z;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
TiltedGaussian tilt_gaussian(const Eigen::VectorXd& m, const Eigen::MatrixXd& C,
                             const WeightSpec& spec);

}  // namespace doob
