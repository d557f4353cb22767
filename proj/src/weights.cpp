#include "doob/weights.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace doob {

namespace {

double log_det_llt(const Eigen::LLT<Eigen::MatrixXd>& llt, int d) {
  double out = 0.0;
  for (int j = 0; j < d; ++j) out += 2.0 * std::log(llt.matrixL()(j, j));
  return out;
}

}  // namespace

DensityRatio::DensityRatio(GaussianMixture q0, GaussianMixture p0)
    : target(std::move(q0)), reference(std::move(p0)) {
  target_density = std::make_shared<MixtureDensity>(target);
  reference_density = std::make_shared<MixtureDensity>(reference);
}

double eval_weight(const WeightSpec& spec, const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw std::domain_error("eval_weight: non-finite input");
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GaussianLikelihood>) {
          const double u = (s.y - s.A * x).squaredNorm() /
                           (2.0 * s.sigma_noise * s.sigma_noise);
          return std::max(s.floor, std::exp(-u));
        } else if constexpr (std::is_same_v<S, ExpQuadReward>) {
          const double r = -0.5 * x.dot(s.Q * x) + s.b.dot(x) + s.c;
          return std::exp(r / s.alpha);
        } else if constexpr (std::is_same_v<S, DensityRatio>) {
          const double lp = s.reference_density->log_density(x);
          const double lq = s.target_density->log_density(x);
          const double lw = lq - lp;
          if (!std::isfinite(lw) || lp < -700.0) {
            throw std::runtime_error(
                "eval_weight: reference density underflows at the query point");
          }
          return std::exp(lw);
        } else {
          return s.c;
        }
      },
      spec);
}

std::optional<WeightBounds> bounds_on_support(const WeightSpec& spec,
                                              double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("bounds_on_support: radius must be positive");
  }
  return std::visit(
      [&](const auto& s) -> std::optional<WeightBounds> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GaussianLikelihood>) {
          if (s.floor <= 0.0) return std::nullopt;
          return WeightBounds{s.floor, 1.0};
        } else if constexpr (std::is_same_v<S, ExpQuadReward>) {
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.Q);
          const double lam_max = es.eigenvalues().maxCoeff();
          const double bn = s.b.norm();
          const double r_hi = bn * radius + s.c;
          const double r_lo = -0.5 * lam_max * radius * radius - bn * radius + s.c;
          return WeightBounds{std::exp(r_lo / s.alpha), std::exp(r_hi / s.alpha)};
        } else if constexpr (std::is_same_v<S, ConstantWeight>) {
          return WeightBounds{s.c, s.c};
        } else {
          return std::nullopt;  // density ratio: caller must supply bounds
        }
      },
      spec);
}

bool is_conjugate(const WeightSpec& spec) {
  return std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GaussianLikelihood>) {
          return s.floor == 0.0;
        } else {
          return std::is_same_v<S, ExpQuadReward> ||
                 std::is_same_v<S, ConstantWeight>;
        }
      },
      spec);
}

TiltedGaussian tilt_gaussian(const Eigen::VectorXd& m, const Eigen::MatrixXd& C,
                             const WeightSpec& spec) {
  const int d = static_cast<int>(m.size());
  return std::visit(
      [&](const auto& s) -> TiltedGaussian {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GaussianLikelihood>) {
          if (s.floor > 0.0) {
            throw std::invalid_argument(
                "tilt_gaussian: floored likelihood is not conjugate");
          }
          const int my = static_cast<int>(s.y.size());
          const double s2 = s.sigma_noise * s.sigma_noise;
          const Eigen::MatrixXd S_ev =
              s.A * C * s.A.transpose() + s2 * Eigen::MatrixXd::Identity(my, my);
          Eigen::LLT<Eigen::MatrixXd> llt(S_ev);
          if (llt.info() != Eigen::Success) {
            throw std::runtime_error("tilt_gaussian: evidence covariance not PD");
          }
          const Eigen::VectorXd r = s.y - s.A * m;
          const Eigen::MatrixXd K = C * s.A.transpose() * llt.solve(
                                        Eigen::MatrixXd::Identity(my, my));
          TiltedGaussian out;
          out.mean = m + K * r;
          Eigen::MatrixXd cov = C - K * s.A * C;
          out.cov = 0.5 * (cov + cov.transpose());
          const Eigen::VectorXd yw = llt.matrixL().solve(r);
          out.log_z = my * std::log(s.sigma_noise) - 0.5 * log_det_llt(llt, my) -
                      0.5 * yw.squaredNorm();
          return out;
        } else if constexpr (std::is_same_v<S, ExpQuadReward>) {
          const double a = s.alpha;
          if (s.Q.cwiseAbs().maxCoeff() == 0.0) {
            // Pure exponential tilt; valid for singular PSD C.
            TiltedGaussian out;
            out.mean = m + C * s.b / a;
            out.cov = C;
            out.log_z = s.c / a + s.b.dot(m) / a +
                        0.5 * s.b.dot(C * s.b) / (a * a);
            return out;
          }
          Eigen::MatrixXd Cpd = C;
          Eigen::LLT<Eigen::MatrixXd> lltC(Cpd);
          if (lltC.info() != Eigen::Success) {
            Cpd.diagonal().array() += kEpsPd;
            lltC.compute(Cpd);
            if (lltC.info() != Eigen::Success) {
              throw std::runtime_error("tilt_gaussian: covariance not PD");
            }
          }
          const Eigen::MatrixXd Cinv =
              lltC.solve(Eigen::MatrixXd::Identity(d, d));
          const Eigen::MatrixXd Lam = Cinv + s.Q / a;
          Eigen::LLT<Eigen::MatrixXd> lltL(Lam);
          if (lltL.info() != Eigen::Success) {
            throw std::runtime_error("tilt_gaussian: tilted precision not PD");
          }
          const Eigen::VectorXd eta = Cinv * m + s.b / a;
          TiltedGaussian out;
          out.cov = lltL.solve(Eigen::MatrixXd::Identity(d, d));
          out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
          out.mean = lltL.solve(eta);
          out.log_z = s.c / a + 0.5 * eta.dot(out.mean) - 0.5 * m.dot(Cinv * m) -
                      0.5 * log_det_llt(lltC, d) - 0.5 * log_det_llt(lltL, d);
          return out;
        } else if constexpr (std::is_same_v<S, ConstantWeight>) {
          return TiltedGaussian{std::log(s.c), m, C};
        } else {
          throw std::invalid_argument("tilt_gaussian: density ratio is not conjugate");
        }
      },
      spec);
}

GaussianMixture tilted_target(const GaussianMixture& p0, const WeightSpec& spec) {
  if (!is_conjugate(spec)) {
    throw std::invalid_argument(
        "tilted_target: spec is not conjugate; use the Monte Carlo oracle");
  }
  if (std::holds_alternative<ConstantWeight>(spec)) return p0;
  const int M = p0.components();
  GaussianMixture out;
  out.means.reserve(static_cast<std::size_t>(M));
  out.covs.reserve(static_cast<std::size_t>(M));
  Eigen::VectorXd log_w(M);
  for (int i = 0; i < M; ++i) {
    const TiltedGaussian tg = tilt_gaussian(p0.means[i], p0.covs[i], spec);
    out.means.push_back(tg.mean);
    out.covs.push_back(tg.cov);
    log_w(i) = (p0.weights(i) > 0.0 ? std::log(p0.weights(i))
                                    : -std::numeric_limits<double>::infinity()) +
               tg.log_z;
  }
  out.weights = (log_w.array() - log_sum_exp(log_w)).exp();
  out.weights /= out.weights.sum();
  return out;
}

}  // namespace doob
