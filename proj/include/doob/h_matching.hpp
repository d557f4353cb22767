#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "doob/doob_oracle.hpp"
#include "doob/gaussian_mixture.hpp"
#include "doob/quadrature.hpp"
#include "doob/weights.hpp"

namespace doob {

// RBF feature map with an optional constant basis function appended as the
// last entry (its Jacobian row is all-zero).
struct FeatureMap {
  Eigen::MatrixXd centers;  // M x d
  double bandwidth = 1.0;
  bool include_constant = true;

  int input_dim() const { return static_cast<int>(centers.cols()); }
  int size() const {
    return static_cast<int>(centers.rows()) + (include_constant ? 1 : 0);
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
  // size() x d matrix of feature gradients.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

  static FeatureMap constant_only(int d);
};

// Centers subsampled without replacement from the training inputs; bandwidth
// from the median pairwise distance among centers, floored at 1e-3.
FeatureMap build_features(const Eigen::MatrixXd& train_xt, int M,
                          std::uint64_t seed);

// Fitted h-function over the feature span: clamped value, floored guidance
// denominator. Immutable post-fit.
struct HEstimator {
  FeatureMap features;
  Eigen::VectorXd coeffs;
  double lambda = 0.0;
  double clamp_lo = 0.0;
  double clamp_hi = 0.0;
  double t = 0.0;  // reverse time the estimator is valid for

  double raw(const Eigen::VectorXd& x) const {
    return features.eval(x).dot(coeffs);
  }
  double eval_h(const Eigen::VectorXd& x) const;
  // (theta^T Dphi(x)) / max(theta^T phi(x), clamp_lo); numerator unclamped.
  Eigen::VectorXd eval_guidance(const Eigen::VectorXd& x) const;
  Eigen::VectorXd raw_grad(const Eigen::VectorXd& x) const {
    return features.jacobian(x).transpose() * coeffs;
  }
};

// Least-squares Doob matching: theta solves
//   (Phi^T Phi + n*ridge*I) theta = Phi^T w.
HEstimator fit_vanilla(const PairBatch& pairs, const WeightSpec& spec,
                       const FeatureMap& fm, double ridge,
                       const WeightBounds& clamp, double t);

// Gradient-regularized matching: theta solves
//   (Phi^T Phi + lambda * sum_k G_k^T G_k + n*ridge*I) theta = Phi^T w,
// the exact minimizer of the empirical objective over the span.
HEstimator fit_gradient_regularized(const PairBatch& pairs,
                                    const WeightSpec& spec,
                                    const FeatureMap& fm, double lambda,
                                    double ridge, const WeightBounds& clamp,
                                    double t);

// Same solve but with responses overridden (used by contamination studies).
HEstimator fit_with_responses(const Eigen::MatrixXd& xt,
                              const Eigen::VectorXd& responses,
                              const FeatureMap& fm, double lambda, double ridge,
                              const WeightBounds& clamp, double t);

// Rate-matched default lambda = c * n^{-2/(d+8)}.
double auto_lambda(int n, int d, double c = 1.0);

// Population gradient-regularized fit in 1D by quadrature against p_{T-t},
// with the closed-form oracle as regression target. Returns the minimizer of
// the population objective restricted to the feature span.
struct PopulationFit {
  HEstimator estimator;
  // Quadrature moment matrices, kept for the coercivity identities:
  // value_gram = integral(phi phi^T dp), grad_gram = integral(phi' phi'^T dp).
  Eigen::MatrixXd value_gram;
  Eigen::MatrixXd grad_gram;
  Eigen::VectorXd target_moments;  // integral(phi h* dp)
  double target_sq;                // integral(h*^2 dp)
  MixtureQuadrature quad;
};
PopulationFit population_fit_1d(const GaussianMixture& p0,
                                const VpSchedule& sched, const WeightSpec& spec,
                                double t, const FeatureMap& fm, double lambda,
                                int quad_order, const WeightBounds& clamp,
                                double ridge = 0.0);

// Monte Carlo H1 error components against the oracle on points drawn from
// p_{T-t}: (L2 error, its SE, gradient L2 error, its SE).
struct H1Error {
  double l2;
  double l2_se;
  double grad_l2;
  double grad_l2_se;
};
H1Error h1_error(const HEstimator& est, const DoobOracle& oracle, double t,
                 const Eigen::MatrixXd& eval_points);

}  // namespace doob
