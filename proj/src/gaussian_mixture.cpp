#include "doob/gaussian_mixture.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "doob/rng.hpp"

namespace doob {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& cov,
                                       double jitter) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd jittered = cov;
  jittered.diagonal().array() += jitter;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("MixtureDensity: covariance not PSD even with jitter");
  }
  return llt;
}

}  // namespace

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

GaussianMixture GaussianMixture::single(Eigen::VectorXd mean,
                                        Eigen::MatrixXd cov) {
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means.push_back(std::move(mean));
  g.covs.push_back(std::move(cov));
  return g;
}

GaussianMixture GaussianMixture::standard(int d) {
  return single(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d));
}

bool GaussianMixture::validate(double tol) const {
  const int M = components();
  if (M == 0 || static_cast<int>(means.size()) != M ||
      static_cast<int>(covs.size()) != M) {
    throw std::invalid_argument("GaussianMixture: inconsistent component counts");
  }
  if (std::abs(weights.sum() - 1.0) > tol || weights.minCoeff() < 0.0) {
    throw std::invalid_argument("GaussianMixture: weights must be a simplex vector");
  }
  const int d = dim();
  for (int i = 0; i < M; ++i) {
    if (means[i].size() != d || covs[i].rows() != d || covs[i].cols() != d) {
      throw std::invalid_argument("GaussianMixture: dimension mismatch");
    }
    if ((covs[i] - covs[i].transpose()).cwiseAbs().maxCoeff() > tol) {
      throw std::invalid_argument("GaussianMixture: covariance not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covs[i]);
    if (es.eigenvalues().minCoeff() < -tol) {
      throw std::invalid_argument("GaussianMixture: covariance not PSD");
    }
  }
  // Support check: means + 3 sigma envelope inside the unit
  // hypercube. Warning only.
  for (int i = 0; i < M; ++i) {
    const Eigen::VectorXd sd = covs[i].diagonal().cwiseMax(0.0).cwiseSqrt();
    if (((means[i] + 3.0 * sd).cwiseAbs().maxCoeff() > 1.0) ||
        ((means[i] - 3.0 * sd).cwiseAbs().maxCoeff() > 1.0)) {
      return false;
    }
  }
  return true;
}

Eigen::VectorXd GaussianMixture::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (int i = 0; i < components(); ++i) m += weights(i) * means[i];
  return m;
}

MixtureDensity::MixtureDensity(const GaussianMixture& mix, double jitter)
    : mix_(mix) {
  const int M = mix_.components();
  const int d = mix_.dim();
  llts_.reserve(static_cast<std::size_t>(M));
  log_norms_.resize(M);
  for (int i = 0; i < M; ++i) {
    llts_.push_back(robust_llt(mix_.covs[i], jitter));
    double log_det = 0.0;
    for (int j = 0; j < d; ++j) {
      log_det += 2.0 * std::log(llts_.back().matrixL()(j, j));
    }
    const double log_w = mix_.weights(i) > 0.0
                             ? std::log(mix_.weights(i))
                             : -std::numeric_limits<double>::infinity();
    log_norms_(i) = log_w - 0.5 * (d * kLog2Pi + log_det);
  }
}

double MixtureDensity::log_density(const Eigen::VectorXd& x) const {
  const int M = mix_.components();
  Eigen::VectorXd terms(M);
  for (int i = 0; i < M; ++i) {
    const Eigen::VectorXd r = x - mix_.means[i];
    const Eigen::VectorXd y = llts_[static_cast<std::size_t>(i)].matrixL().solve(r);
    terms(i) = log_norms_(i) - 0.5 * y.squaredNorm();
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd MixtureDensity::log_responsibilities(
    const Eigen::VectorXd& x) const {
  const int M = mix_.components();
  Eigen::VectorXd terms(M);
  for (int i = 0; i < M; ++i) {
    const Eigen::VectorXd r = x - mix_.means[i];
    const Eigen::VectorXd y = llts_[static_cast<std::size_t>(i)].matrixL().solve(r);
    terms(i) = log_norms_(i) - 0.5 * y.squaredNorm();
  }
  return terms.array() - log_sum_exp(terms);
}

Eigen::VectorXd MixtureDensity::score(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw std::domain_error("score: non-finite input");
  const Eigen::VectorXd log_r = log_responsibilities(x);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(mix_.dim());
  for (int i = 0; i < mix_.components(); ++i) {
    const double ri = std::exp(log_r(i));
    if (ri == 0.0) continue;
    s -= ri * llts_[static_cast<std::size_t>(i)].solve(x - mix_.means[i]);
  }
  return s;
}

GaussianMixture marginal_at(const GaussianMixture& p0, double t) {
  if (t < 0.0) throw std::domain_error("marginal_at: t must be nonnegative");
  const auto [mu, sigma2] = mu_sigma(t);
  const int d = p0.dim();
  GaussianMixture out;
  out.weights = p0.weights;
  out.means.reserve(p0.means.size());
  out.covs.reserve(p0.covs.size());
  for (int i = 0; i < p0.components(); ++i) {
    out.means.push_back(mu * p0.means[i]);
    out.covs.push_back(mu * mu * p0.covs[i] +
                       sigma2 * Eigen::MatrixXd::Identity(d, d));
  }
  return out;
}

namespace {

// Draw one point from the mixture with an already-seeded stream.
Eigen::VectorXd draw_one(const GaussianMixture& mix,
                         const std::vector<Eigen::LLT<Eigen::MatrixXd>>& llts,
                         rng::CounterStream& stream) {
  const double u = stream.uniform();
  int comp = mix.components() - 1;
  double acc = 0.0;
  for (int i = 0; i < mix.components(); ++i) {
    acc += mix.weights(i);
    if (u <= acc) {
      comp = i;
      break;
    }
  }
  const Eigen::VectorXd z = stream.normal_vector(mix.dim());
  return mix.means[static_cast<std::size_t>(comp)] +
         llts[static_cast<std::size_t>(comp)].matrixL() * z;
}

std::vector<Eigen::LLT<Eigen::MatrixXd>> component_llts(
    const GaussianMixture& mix) {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
  llts.reserve(static_cast<std::size_t>(mix.components()));
  for (const auto& cov : mix.covs) llts.push_back(robust_llt(cov, kEpsPd));
  return llts;
}

}  // namespace

PairBatch sample_x0_xt_pairs(const GaussianMixture& p0, double t, int n,
                             std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_x0_xt_pairs: n >= 1 required");
  const auto [mu, sigma2] = mu_sigma(t);
  const double sigma = std::sqrt(sigma2);
  const int d = p0.dim();
  const auto llts = component_llts(p0);
  PairBatch batch;
  batch.x0.resize(n, d);
  batch.xt.resize(n, d);
  for (int i = 0; i < n; ++i) {
    rng::CounterStream stream(
        rng::mix_keys({seed, static_cast<std::uint64_t>(i), 0x70616972ULL}));
    const Eigen::VectorXd x0 = draw_one(p0, llts, stream);
    const Eigen::VectorXd eps = stream.normal_vector(d);
    batch.x0.row(i) = x0.transpose();
    batch.xt.row(i) = (mu * x0 + sigma * eps).transpose();
  }
  return batch;
}

Eigen::MatrixXd sample_mixture(const GaussianMixture& mix, int n,
                               std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_mixture: n >= 1 required");
  const auto llts = component_llts(mix);
  Eigen::MatrixXd out(n, mix.dim());
  for (int i = 0; i < n; ++i) {
    rng::CounterStream stream(
        rng::mix_keys({seed, static_cast<std::uint64_t>(i), 0x6d697864ULL}));
    out.row(i) = draw_one(mix, llts, stream).transpose();
  }
  return out;
}

GaussianMixture posterior_x0_given_xt(const GaussianMixture& p0, double t,
                                      const Eigen::VectorXd& x) {
  if (!(t > 0.0)) {
    throw std::domain_error("posterior_x0_given_xt: t = 0 is degenerate");
  }
  const auto [mu, sigma2] = mu_sigma(t);
  const int d = p0.dim();
  const int M = p0.components();
  GaussianMixture post;
  post.means.reserve(static_cast<std::size_t>(M));
  post.covs.reserve(static_cast<std::size_t>(M));
  Eigen::VectorXd log_w(M);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < M; ++i) {
    const Eigen::MatrixXd& C = p0.covs[i];
    const Eigen::VectorXd& m = p0.means[i];
    // Evidence covariance of x given component i; PD for t > 0 even when C
    // is singular.
    const Eigen::MatrixXd S = mu * mu * C + sigma2 * eye;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("posterior_x0_given_xt: evidence covariance not PD");
    }
    const Eigen::VectorXd r = x - mu * m;
    const Eigen::MatrixXd gain = mu * (llt.solve(C)).transpose();  // C S^{-1} * mu
    post.means.push_back(m + gain * r);
    Eigen::MatrixXd cov = C - mu * gain * C;
    post.covs.push_back(0.5 * (cov + cov.transpose()));
    const double log_pi = p0.weights(i) > 0.0
                              ? std::log(p0.weights(i))
                              : -std::numeric_limits<double>::infinity();
    double log_det = 0.0;
    for (int j = 0; j < d; ++j) log_det += 2.0 * std::log(llt.matrixL()(j, j));
    const Eigen::VectorXd y = llt.matrixL().solve(r);
    log_w(i) = log_pi - 0.5 * (d * kLog2Pi + log_det + y.squaredNorm());
  }
  post.weights = (log_w.array() - log_sum_exp(log_w)).exp();
  post.weights /= post.weights.sum();
  return post;
}

SubspaceEmbedding::SubspaceEmbedding(Eigen::MatrixXd P,
                                     GaussianMixture latent_mix)
    : basis(std::move(P)), latent(std::move(latent_mix)) {
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  const Eigen::MatrixXd eye =
      Eigen::MatrixXd::Identity(basis.cols(), basis.cols());
  if ((gram - eye).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("SubspaceEmbedding: columns not orthonormal");
  }
  if (latent.dim() != basis.cols()) {
    throw std::invalid_argument("SubspaceEmbedding: latent dimension mismatch");
  }
  latent.validate();
}

GaussianMixture embed(const SubspaceEmbedding& e) {
  GaussianMixture out;
  out.weights = e.latent.weights;
  for (int i = 0; i < e.latent.components(); ++i) {
    out.means.push_back(e.basis * e.latent.means[i]);
    out.covs.push_back(e.basis * e.latent.covs[i] * e.basis.transpose());
  }
  return out;
}

Eigen::MatrixXd random_orthonormal(int d, int k, std::uint64_t seed) {
  rng::CounterStream stream(rng::mix_keys({seed, 0x6f72746eULL}));
  Eigen::MatrixXd G(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) G(i, j) = stream.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  return Q;
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& m,
                            const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(cov, kEpsPd);
  double log_det = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    log_det += 2.0 * std::log(llt.matrixL()(j, j));
  }
  const Eigen::VectorXd y = llt.matrixL().solve(x - m);
  return -0.5 * (x.size() * kLog2Pi + log_det + y.squaredNorm());
}

}  // namespace doob
