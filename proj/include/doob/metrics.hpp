#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

namespace doob {

struct MetricReport {
  std::string name;
  double value = 0.0;
  double standard_error = 0.0;
  int n_a = 0;
  int n_b = 0;
  std::uint64_t seed = 0;
};

// Exact empirical 1D 2-Wasserstein distance via the quantile coupling
// (O(n log n) sort + O(n + m) sweep over merged quantile breakpoints).
double w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Average of w2_1d over n_proj random unit directions; SE across projections.
struct SlicedW2 {
  double value;
  double standard_error;
};
SlicedW2 sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                   int n_proj, std::uint64_t seed);

// Bures 2-Wasserstein distance between Gaussians.
double gaussian_w2(const Eigen::VectorXd& m1, const Eigen::MatrixXd& c1,
                   const Eigen::VectorXd& m2, const Eigen::MatrixXd& c2);

// 95th percentile of sliced_w2 between two independent size-n samples of the
// same distribution over n_resample resamples; the pass threshold for
// "distribution unchanged" checks.
double same_distribution_threshold(
    int n, int n_proj, std::uint64_t seed,
    const std::function<Eigen::MatrixXd(int, std::uint64_t)>& sampler,
    int n_resample = 50);

}  // namespace doob
