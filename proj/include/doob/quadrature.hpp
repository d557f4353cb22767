#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "doob/gaussian_mixture.hpp"

namespace doob {

// Gauss-Hermite nodes/weights for the physicists' weight exp(-u^2),
// computed by the Golub-Welsch eigen decomposition.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermite gauss_hermite(int order);

// Quadrature rule for integrals against a 1D Gaussian mixture:
// integral f dp ~= sum_j weights[j] * f(points[j]).
struct MixtureQuadrature {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;
};

MixtureQuadrature mixture_quadrature_1d(const GaussianMixture& p, int order);

}  // namespace doob
