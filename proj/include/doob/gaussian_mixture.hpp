#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "doob/schedule.hpp"

namespace doob {

// Gaussian mixture with explicit component parameters. Covariances may be
// PSD-singular; density-evaluating paths add an eps_pd jitter.
struct GaussianMixture {
  Eigen::VectorXd weights;             // simplex, length M
  std::vector<Eigen::VectorXd> means;  // M d-vectors
  std::vector<Eigen::MatrixXd> covs;   // M d x d symmetric PSD

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int components() const { return static_cast<int>(weights.size()); }

  static GaussianMixture single(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static GaussianMixture standard(int d);  // N(0, I_d)

  // Throws on invalid weights / asymmetric or indefinite covariances.
  // Returns false (a warning, not an error) if the means + 3 sigma envelope
  // fall outside the unit hypercube; the tail-bound constants assume they
  // don't.
  bool validate(double tol = 1e-10) const;

  Eigen::VectorXd mean() const;
};

constexpr double kEpsPd = 1e-10;

// Cached per-component Cholesky factors for repeated density / score
// evaluation. Immutable, shareable.
class MixtureDensity {
 public:
  explicit MixtureDensity(const GaussianMixture& mix, double jitter = kEpsPd);

  int dim() const { return mix_.dim(); }
  const GaussianMixture& mixture() const { return mix_; }

  double log_density(const Eigen::VectorXd& x) const;

  // Responsibility-weighted sum of component scores; responsibilities in
  // log-space.
  Eigen::VectorXd score(const Eigen::VectorXd& x) const;

  // log responsibilities log r_i(x) (normalized).
  Eigen::VectorXd log_responsibilities(const Eigen::VectorXd& x) const;

 private:
  GaussianMixture mix_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts_;
  Eigen::VectorXd log_norms_;  // log pi_i - 1/2 log det(2 pi C_i)
};

// Mixture with components N(mu_t m_i, mu_t^2 C_i + sigma_t^2 I); weights
// unchanged. Positive definite for t > 0 even for singular C_i.
GaussianMixture marginal_at(const GaussianMixture& p0, double t);

// n iid (x0, xt) pairs with xt = mu_t x0 + sigma_t eps; deterministic given
// seed, per-draw counter substreams.
struct PairBatch {
  Eigen::MatrixXd x0;  // n x d
  Eigen::MatrixXd xt;  // n x d
};
PairBatch sample_x0_xt_pairs(const GaussianMixture& p0, double t, int n,
                             std::uint64_t seed);

// n iid draws from the mixture itself.
Eigen::MatrixXd sample_mixture(const GaussianMixture& mix, int n,
                               std::uint64_t seed);

// Conditional law of X0 given X_t = x under the forward corruption
// (prior N(m_i, C_i), likelihood x | x0 ~ N(mu_t x0, sigma_t^2 I)).
// Singular-C-safe; weights reweighted in log-space. Requires t > 0.
GaussianMixture posterior_x0_given_xt(const GaussianMixture& p0, double t,
                                      const Eigen::VectorXd& x);

// Low-dimensional subspace embedding: ambient mixture is the pushforward of
// a latent mixture through a column-orthogonal P.
struct SubspaceEmbedding {
  Eigen::MatrixXd basis;  // d x d*, orthonormal columns
  GaussianMixture latent;

  SubspaceEmbedding(Eigen::MatrixXd P, GaussianMixture latent_mix);

  int ambient_dim() const { return static_cast<int>(basis.rows()); }
  int intrinsic_dim() const { return static_cast<int>(basis.cols()); }
};

// Ambient mixture with means P m_i and covariances P C_i P^T (rank <= d*).
GaussianMixture embed(const SubspaceEmbedding& e);

// Random column-orthogonal d x k matrix (QR of a Gaussian matrix).
Eigen::MatrixXd random_orthonormal(int d, int k, std::uint64_t seed);

// log N(x; m, C) for a single PD Gaussian.
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& m,
                            const Eigen::MatrixXd& cov);

double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace doob
