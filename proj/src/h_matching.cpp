#include "doob/h_matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doob/rng.hpp"

namespace doob {

Eigen::VectorXd FeatureMap::eval(const Eigen::VectorXd& x) const {
  const int M = static_cast<int>(centers.rows());
  Eigen::VectorXd phi(size());
  const double inv2l2 = 1.0 / (2.0 * bandwidth * bandwidth);
  for (int j = 0; j < M; ++j) {
    phi(j) = std::exp(-(x - centers.row(j).transpose()).squaredNorm() * inv2l2);
  }
  if (include_constant) phi(M) = 1.0;
  return phi;
}

Eigen::MatrixXd FeatureMap::jacobian(const Eigen::VectorXd& x) const {
  const int M = static_cast<int>(centers.rows());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(size(), input_dim());
  const double inv_l2 = 1.0 / (bandwidth * bandwidth);
  const double inv2l2 = 0.5 * inv_l2;
  for (int j = 0; j < M; ++j) {
    const Eigen::VectorXd diff = x - centers.row(j).transpose();
    const double e = std::exp(-diff.squaredNorm() * inv2l2);
    J.row(j) = (-inv_l2 * e) * diff.transpose();
  }
  return J;  // constant row stays zero
}

FeatureMap FeatureMap::constant_only(int d) {
  FeatureMap fm;
  fm.centers = Eigen::MatrixXd::Zero(0, d);
  fm.bandwidth = 1.0;
  fm.include_constant = true;
  return fm;
}

FeatureMap build_features(const Eigen::MatrixXd& train_xt, int M,
                          std::uint64_t seed) {
  const int n = static_cast<int>(train_xt.rows());
  if (M < 1 || M > n) {
    throw std::invalid_argument("build_features: requires 1 <= M <= n");
  }
  // Seeded Fisher-Yates prefix for subsampling without replacement.
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng::CounterStream stream(rng::mix_keys({seed, 0x66656174ULL}));
  for (int i = 0; i < M; ++i) {
    const int j = i + static_cast<int>(stream.uniform() * (n - i));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(std::min(j, n - 1))]);
  }
  FeatureMap fm;
  fm.centers.resize(M, train_xt.cols());
  for (int i = 0; i < M; ++i) {
    fm.centers.row(i) = train_xt.row(idx[static_cast<std::size_t>(i)]);
  }
  // Median heuristic over pairwise center distances, floored at 1e-3.
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(M) * (M - 1) / 2);
  for (int i = 0; i < M; ++i) {
    for (int j = i + 1; j < M; ++j) {
      dists.push_back((fm.centers.row(i) - fm.centers.row(j)).norm());
    }
  }
  double bw = 1.0;
  if (!dists.empty()) {
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid),
                     dists.end());
    bw = dists[mid];
    if (dists.size() % 2 == 0) {
      const double lo =
          *std::max_element(dists.begin(), dists.begin() + static_cast<long>(mid));
      bw = 0.5 * (bw + lo);
    }
  }
  fm.bandwidth = std::max(bw, 1e-3);
  fm.include_constant = true;
  return fm;
}

double HEstimator::eval_h(const Eigen::VectorXd& x) const {
  return std::clamp(raw(x), clamp_lo, clamp_hi);
}

Eigen::VectorXd HEstimator::eval_guidance(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd phi = features.eval(x);
  const double denom = std::max(phi.dot(coeffs), clamp_lo);
  return (features.jacobian(x).transpose() * coeffs) / denom;
}

namespace {

HEstimator solve_normal_equations(const Eigen::MatrixXd& xt,
                                  const Eigen::VectorXd& w,
                                  const FeatureMap& fm, double lambda,
                                  double ridge, const WeightBounds& clamp,
                                  double t) {
  const int n = static_cast<int>(xt.rows());
  const int p = fm.size();
  const int d = fm.input_dim();
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = xt.row(i).transpose();
    const Eigen::VectorXd phi = fm.eval(x);
    normal.noalias() += phi * phi.transpose();
    rhs.noalias() += w(i) * phi;
    if (lambda > 0.0) {
      const Eigen::MatrixXd J = fm.jacobian(x);  // p x d
      for (int k = 0; k < d; ++k) {
        normal.noalias() += lambda * J.col(k) * J.col(k).transpose();
      }
    }
  }
  normal.diagonal().array() += n * ridge;
  if (ridge == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
    const double emax = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(emax, 1.0)) {
      throw std::runtime_error(
          "fit: normal equations numerically singular; pass ridge > 0");
    }
  }
  HEstimator est;
  est.features = fm;
  est.coeffs = Eigen::LDLT<Eigen::MatrixXd>(normal).solve(rhs);
  est.lambda = lambda;
  est.clamp_lo = clamp.lower;
  est.clamp_hi = clamp.upper;
  est.t = t;
  return est;
}

}  // namespace

HEstimator fit_vanilla(const PairBatch& pairs, const WeightSpec& spec,
                       const FeatureMap& fm, double ridge,
                       const WeightBounds& clamp, double t) {
  const int n = static_cast<int>(pairs.x0.rows());
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    w(i) = eval_weight(spec, pairs.x0.row(i).transpose());
  }
  return solve_normal_equations(pairs.xt, w, fm, 0.0, ridge, clamp, t);
}

HEstimator fit_gradient_regularized(const PairBatch& pairs,
                                    const WeightSpec& spec,
                                    const FeatureMap& fm, double lambda,
                                    double ridge, const WeightBounds& clamp,
                                    double t) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("fit_gradient_regularized: lambda > 0 required");
  }
  const int n = static_cast<int>(pairs.x0.rows());
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    w(i) = eval_weight(spec, pairs.x0.row(i).transpose());
  }
  return solve_normal_equations(pairs.xt, w, fm, lambda, ridge, clamp, t);
}

HEstimator fit_with_responses(const Eigen::MatrixXd& xt,
                              const Eigen::VectorXd& responses,
                              const FeatureMap& fm, double lambda, double ridge,
                              const WeightBounds& clamp, double t) {
  return solve_normal_equations(xt, responses, fm, lambda, ridge, clamp, t);
}

double auto_lambda(int n, int d, double c) {
  return c * std::pow(static_cast<double>(n), -2.0 / (d + 8.0));
}

PopulationFit population_fit_1d(const GaussianMixture& p0,
                                const VpSchedule& sched, const WeightSpec& spec,
                                double t, const FeatureMap& fm, double lambda,
                                int quad_order, const WeightBounds& clamp,
                                double ridge) {
  if (p0.dim() != 1) {
    throw std::invalid_argument("population_fit_1d: 1D reference only");
  }
  const DoobOracle oracle(p0, sched, spec, DoobOracle::Mode::kClosedForm);
  const GaussianMixture marg = marginal_at(p0, sched.terminal_time - t);
  PopulationFit fit;
  fit.quad = mixture_quadrature_1d(marg, quad_order);
  const int p = fm.size();
  const int q = static_cast<int>(fit.quad.points.size());
  fit.value_gram = Eigen::MatrixXd::Zero(p, p);
  fit.grad_gram = Eigen::MatrixXd::Zero(p, p);
  fit.target_moments = Eigen::VectorXd::Zero(p);
  fit.target_sq = 0.0;
  for (int j = 0; j < q; ++j) {
    Eigen::VectorXd x(1);
    x(0) = fit.quad.points(j);
    const double wq = fit.quad.weights(j);
    const Eigen::VectorXd phi = fm.eval(x);
    const Eigen::VectorXd dphi = fm.jacobian(x).col(0);
    const double h = oracle.h_star(t, x);
    fit.value_gram.noalias() += wq * phi * phi.transpose();
    fit.grad_gram.noalias() += wq * dphi * dphi.transpose();
    fit.target_moments.noalias() += wq * h * phi;
    fit.target_sq += wq * h * h;
  }
  Eigen::MatrixXd normal = fit.value_gram + lambda * fit.grad_gram;
  normal.diagonal().array() += ridge;
  fit.estimator.features = fm;
  fit.estimator.coeffs = Eigen::LDLT<Eigen::MatrixXd>(normal).solve(
      fit.target_moments);
  fit.estimator.lambda = lambda;
  fit.estimator.clamp_lo = clamp.lower;
  fit.estimator.clamp_hi = clamp.upper;
  fit.estimator.t = t;
  return fit;
}

H1Error h1_error(const HEstimator& est, const DoobOracle& oracle, double t,
                 const Eigen::MatrixXd& eval_points) {
  const int n = static_cast<int>(eval_points.rows());
  double sum_v = 0.0, sum_v2 = 0.0, sum_g = 0.0, sum_g2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = eval_points.row(i).transpose();
    const double dv = est.eval_h(x) - oracle.h_star(t, x);
    const double dg = (est.raw_grad(x) - oracle.grad_h_star(t, x)).squaredNorm();
    sum_v += dv * dv;
    sum_v2 += dv * dv * dv * dv;
    sum_g += dg;
    sum_g2 += dg * dg;
  }
  const double nn = static_cast<double>(n);
  const double mv = sum_v / nn;
  const double mg = sum_g / nn;
  const double se_mv = std::sqrt(std::max(0.0, sum_v2 / nn - mv * mv) / nn);
  const double se_mg = std::sqrt(std::max(0.0, sum_g2 / nn - mg * mg) / nn);
  H1Error err;
  err.l2 = std::sqrt(mv);
  err.grad_l2 = std::sqrt(mg);
  // Delta method for the sqrt of a mean.
  err.l2_se = err.l2 > 0.0 ? se_mv / (2.0 * err.l2) : std::sqrt(se_mv);
  err.grad_l2_se = err.grad_l2 > 0.0 ? se_mg / (2.0 * err.grad_l2)
                                     : std::sqrt(se_mg);
  return err;
}

}  // namespace doob
