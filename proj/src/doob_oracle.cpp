#include "doob/doob_oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>

#include "doob/rng.hpp"

namespace doob {

DoobOracle::DoobOracle(GaussianMixture p0, VpSchedule sched, WeightSpec spec,
                       Mode mode, int n_mc, std::uint64_t seed)
    : p0_(std::move(p0)),
      sched_(std::move(sched)),
      spec_(std::move(spec)),
      mode_(mode),
      n_mc_(n_mc),
      seed_(seed) {
  if (mode_ == Mode::kClosedForm && !is_conjugate(spec_)) {
    throw std::invalid_argument(
        "DoobOracle: closed form requires a conjugate weight spec");
  }
  if (mode_ == Mode::kMonteCarlo && n_mc_ < 2) {
    throw std::invalid_argument("DoobOracle: n_mc >= 2 required");
  }
}

DoobOracle::Moments DoobOracle::conditional_moments(
    double forward_t, const Eigen::VectorXd& x) const {
  const GaussianMixture post = posterior_x0_given_xt(p0_, forward_t, x);
  const int d = p0_.dim();
  Moments mo;
  mo.x0_w = Eigen::VectorXd::Zero(d);
  mo.x0 = Eigen::VectorXd::Zero(d);
  if (mode_ == Mode::kClosedForm) {
    const int M = post.components();
    Eigen::VectorXd log_mass(M);
    std::vector<Eigen::VectorXd> tilt_means(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) {
      const TiltedGaussian tg = tilt_gaussian(post.means[i], post.covs[i], spec_);
      log_mass(i) = (post.weights(i) > 0.0
                         ? std::log(post.weights(i))
                         : -std::numeric_limits<double>::infinity()) +
                    tg.log_z;
      tilt_means[static_cast<std::size_t>(i)] = tg.mean;
      mo.x0 += post.weights(i) * post.means[i];
    }
    mo.h = std::exp(log_sum_exp(log_mass));
    for (int i = 0; i < M; ++i) {
      mo.x0_w += std::exp(log_mass(i)) * tilt_means[static_cast<std::size_t>(i)];
    }
    mo.se = 0.0;
    return mo;
  }
  // Monte Carlo over exact conditional draws; substream keyed by
  // (seed, t bits, x bytes) so grid evaluations are order-independent.
  std::uint64_t key = rng::mix_keys({seed_, rng::hash_double(forward_t)});
  for (int j = 0; j < x.size(); ++j) {
    key = rng::mix_keys({key, rng::hash_double(x(j))});
  }
  const Eigen::MatrixXd draws = sample_mixture(post, n_mc_, key);
  double sum_w = 0.0, sum_w2 = 0.0;
  for (int i = 0; i < n_mc_; ++i) {
    const Eigen::VectorXd x0 = draws.row(i).transpose();
    const double w = eval_weight(spec_, x0);
    sum_w += w;
    sum_w2 += w * w;
    mo.x0_w += w * x0;
    mo.x0 += x0;
  }
  const double n = static_cast<double>(n_mc_);
  mo.h = sum_w / n;
  mo.x0_w /= n;
  mo.x0 /= n;
  const double var = std::max(0.0, sum_w2 / n - mo.h * mo.h);
  mo.se = std::sqrt(var / n);
  return mo;
}

double DoobOracle::h_star(double t, const Eigen::VectorXd& x) const {
  return h_star_with_se(t, x).value;
}

DoobOracle::Estimate DoobOracle::h_star_with_se(double t,
                                                const Eigen::VectorXd& x) const {
  const double T = sched_.terminal_time;
  if (t < 0.0 || !(t < T)) {
    throw std::domain_error("h_star: reverse time must lie in [0, T)");
  }
  const Moments mo = conditional_moments(T - t, x);
  return {mo.h, mo.se};
}

Eigen::VectorXd DoobOracle::grad_h_star(double t, const Eigen::VectorXd& x) const {
  const double T = sched_.terminal_time;
  if (t < 0.0 || !(t < T)) {
    throw std::domain_error("grad_h_star: reverse time must lie in [0, T)");
  }
  if (std::holds_alternative<ConstantWeight>(spec_)) {
    return Eigen::VectorXd::Zero(p0_.dim());  // exact, not just tiny
  }
  const double tau = T - t;
  const auto [mu, sigma2] = mu_sigma(tau);
  const Moments mo = conditional_moments(tau, x);
  return (mu / sigma2) * (mo.x0_w - mo.x0 * mo.h);
}

Eigen::VectorXd DoobOracle::guidance(double t, const Eigen::VectorXd& x) const {
  const double T = sched_.terminal_time;
  if (t < 0.0 || !(t < T)) {
    throw std::domain_error("guidance: reverse time must lie in [0, T)");
  }
  if (std::holds_alternative<ConstantWeight>(spec_)) {
    return Eigen::VectorXd::Zero(p0_.dim());
  }
  const double tau = T - t;
  const auto [mu, sigma2] = mu_sigma(tau);
  const Moments mo = conditional_moments(tau, x);
  return (mu / sigma2) * (mo.x0_w - mo.x0 * mo.h) / mo.h;
}

RegularityReport verify_regularity(const DoobOracle& oracle, double t,
                                   const std::vector<Eigen::VectorXd>& grid,
                                   const WeightBounds& bounds) {
  const double T = oracle.schedule().terminal_time;
  const double sigma2 = sigma2_of(T - t);
  const int d = oracle.reference().dim();
  RegularityReport rep{};
  rep.grad_bound = 2.0 * bounds.upper / sigma2;
  rep.hessian_bound = 6.0 * bounds.upper / (sigma2 * sigma2);
  rep.max_value_ratio_hi = 0.0;
  rep.min_value_ratio_lo = std::numeric_limits<double>::infinity();
  rep.max_grad_ratio = 0.0;
  rep.max_hessian_ratio = 0.0;
  const double fd_step = 1e-4;
  for (const auto& x : grid) {
    const double h = oracle.h_star(t, x);
    rep.max_value_ratio_hi = std::max(rep.max_value_ratio_hi, h / bounds.upper);
    rep.min_value_ratio_lo = std::min(rep.min_value_ratio_lo, h / bounds.lower);
    const Eigen::VectorXd g = oracle.grad_h_star(t, x);
    rep.max_grad_ratio =
        std::max(rep.max_grad_ratio, g.cwiseAbs().maxCoeff() / rep.grad_bound);
    for (int l = 0; l < d; ++l) {
      Eigen::VectorXd xp = x, xm = x;
      xp(l) += fd_step;
      xm(l) -= fd_step;
      const Eigen::VectorXd col =
          (oracle.grad_h_star(t, xp) - oracle.grad_h_star(t, xm)) /
          (2.0 * fd_step);
      rep.max_hessian_ratio = std::max(
          rep.max_hessian_ratio, col.cwiseAbs().maxCoeff() / rep.hessian_bound);
    }
  }
  rep.value_bounds_hold =
      rep.max_value_ratio_hi <= 1.0 + 1e-9 && rep.min_value_ratio_lo >= 1.0 - 1e-9;
  rep.grad_bound_holds = rep.max_grad_ratio <= 1.0 + 1e-9;
  rep.hessian_bound_holds = rep.max_hessian_ratio <= 1.0 + 1e-9;
  return rep;
}

double check_lowdim_representation(
    const DoobOracle& oracle, double t,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs) {
  double max_dev = 0.0;
  for (const auto& [x1, x2] : pairs) {
    max_dev = std::max(max_dev,
                       std::abs(oracle.h_star(t, x1) - oracle.h_star(t, x2)));
  }
  return max_dev;
}

}  // namespace doob
