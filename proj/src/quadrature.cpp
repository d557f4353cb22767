#include "doob/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace doob {

GaussHermite gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order >= 1");
  // Jacobi matrix of the Hermite recurrence; off-diagonal sqrt(k/2).
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights.resize(order);
  const double mu0 = std::sqrt(std::numbers::pi);  // integral of exp(-u^2)
  for (int i = 0; i < order; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    gh.weights(i) = mu0 * v0 * v0;
  }
  return gh;
}

MixtureQuadrature mixture_quadrature_1d(const GaussianMixture& p, int order) {
  if (p.dim() != 1) {
    throw std::invalid_argument("mixture_quadrature_1d: 1D mixtures only");
  }
  const GaussHermite gh = gauss_hermite(order);
  const int M = p.components();
  MixtureQuadrature q;
  q.points.resize(M * order);
  q.weights.resize(M * order);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < M; ++i) {
    const double m = p.means[i](0);
    const double s = std::sqrt(std::max(p.covs[i](0, 0), 0.0));
    for (int j = 0; j < order; ++j) {
      q.points(i * order + j) = m + std::numbers::sqrt2 * s * gh.nodes(j);
      q.weights(i * order + j) = p.weights(i) * inv_sqrt_pi * gh.weights(j);
    }
  }
  return q;
}

}  // namespace doob
