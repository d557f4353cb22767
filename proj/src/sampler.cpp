#include "doob/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "doob/rng.hpp"

namespace doob {

double default_truncation_radius(const VpSchedule& sched, int d,
                                 double eps_target) {
  if (!(eps_target > 0.0) || !(eps_target < 1.0)) {
    throw std::invalid_argument("default_truncation_radius: eps in (0, 1)");
  }
  const auto [mu, sigma2] = mu_sigma(sched.early_stop);
  return std::sqrt((4.0 * d * mu * mu + 8.0 * sigma2) *
                   std::log(1.0 / eps_target));
}

Eigen::VectorXd step(const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                     const Eigen::VectorXd& g, double h,
                     const Eigen::VectorXd& xi) {
  if (!(h > 0.0)) throw std::invalid_argument("step: h > 0 required");
  const double eh = std::exp(h);
  // 2 phi^2(h) = 2 (e^h - 1); phi(2h) = sqrt(e^{2h} - 1).
  return eh * z + (2.0 * (eh - 1.0)) * (s + g) + phi(2.0 * h) * xi;
}

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974ULL;
constexpr std::uint64_t kTagXi = 0x78695f6bULL;
constexpr std::uint64_t kTagScoreNoise = 0x736e6f69ULL;

using GuideFn =
    std::function<Eigen::VectorXd(int, double, const Eigen::VectorXd&)>;

// Shared driver: one exact-score marginal per grid time, counter-keyed noise
// per (seed, particle, step). An empty guide means g = 0 identically, which
// keeps the reference and Constant-guided paths bitwise equal.
SampleBatch run_particles(const GaussianMixture& p0, const SamplerConfig& cfg,
                          const GuideFn& guide, const char* mode_name) {
  if (cfg.n_particles < 1) {
    throw std::invalid_argument("sampler: n_particles >= 1 required");
  }
  const auto start = std::chrono::steady_clock::now();
  const int d = p0.dim();
  const int K = cfg.sched.steps;
  const double h = cfg.sched.step_size();
  const double T = cfg.sched.terminal_time;
  std::vector<MixtureDensity> marginals;
  marginals.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    marginals.emplace_back(marginal_at(p0, T - k * h));
  }
  const double noise_sd =
      cfg.score_mode == ScoreMode::kNoisy && cfg.eps_ref > 0.0
          ? std::sqrt(cfg.eps_ref * cfg.eps_ref / d)
          : 0.0;

  SampleBatch batch;
  batch.points.resize(cfg.n_particles, d);
  batch.seed = cfg.seed;
  batch.guidance_mode = mode_name;

  auto worker = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const auto pid = static_cast<std::uint64_t>(i);
      rng::CounterStream init(rng::mix_keys({cfg.seed, pid, kTagInit}));
      Eigen::VectorXd z = init.normal_vector(d);
      for (int k = 0; k < K; ++k) {
        const auto sid = static_cast<std::uint64_t>(k);
        Eigen::VectorXd s = marginals[static_cast<std::size_t>(k)].score(z);
        if (noise_sd > 0.0) {
          rng::CounterStream ns(
              rng::mix_keys({cfg.seed, pid, sid, kTagScoreNoise}));
          s += noise_sd * ns.normal_vector(d);
        }
        const Eigen::VectorXd g =
            guide ? guide(k, k * h, z) : Eigen::VectorXd::Zero(d);
        rng::CounterStream xs(rng::mix_keys({cfg.seed, pid, sid, kTagXi}));
        z = step(z, s, g, h, xs.normal_vector(d));
      }
      batch.points.row(i) = z.transpose();
    }
  };

  const int n_threads =
      std::max(1, std::min(cfg.threads, cfg.n_particles));
  if (n_threads == 1) {
    worker(0, cfg.n_particles);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    const int chunk = (cfg.n_particles + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(cfg.n_particles, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  if (!batch.points.allFinite()) {
    throw std::runtime_error("sampler: non-finite particle state");
  }
  batch.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return batch;
}

SampleBatch maybe_postprocess(SampleBatch batch, const SamplerConfig& cfg) {
  if (!cfg.postprocess_enabled) return batch;
  const double wall = batch.wall_time_seconds;
  SampleBatch out =
      postprocess(batch, cfg.truncation_radius, mu_of(cfg.sched.early_stop));
  out.wall_time_seconds = wall;
  return out;
}

}  // namespace

SampleBatch reference_sample(const GaussianMixture& p0,
                             const SamplerConfig& cfg) {
  return run_particles(p0, cfg, GuideFn{}, "none");
}

SampleBatch guided_sample(const GaussianMixture& p0, const SamplerConfig& cfg,
                          const DoobOracle& oracle) {
  GuideFn guide = [&oracle](int /*k*/, double t, const Eigen::VectorXd& z) {
    return oracle.guidance(t, z);
  };
  return maybe_postprocess(run_particles(p0, cfg, guide, "oracle"), cfg);
}

SampleBatch guided_sample(const GaussianMixture& p0, const SamplerConfig& cfg,
                          const std::vector<HEstimator>& estimators) {
  const int K = cfg.sched.steps;
  const double h = cfg.sched.step_size();
  // Resolve the nearest anchor per grid time up front so the particle loop
  // stays pure.
  std::vector<const HEstimator*> anchor(static_cast<std::size_t>(K), nullptr);
  for (int k = 0; k < K; ++k) {
    const double t = k * h;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& est : estimators) {
      const double dist = std::abs(est.t - t);
      if (dist < best) {
        best = dist;
        anchor[static_cast<std::size_t>(k)] = &est;
      }
    }
    if (anchor[static_cast<std::size_t>(k)] == nullptr) {
      throw std::runtime_error(
          "guided_sample: no estimator anchor for reverse time t=" +
          std::to_string(t));
    }
  }
  GuideFn guide = [&anchor](int k, double /*t*/, const Eigen::VectorXd& z) {
    return anchor[static_cast<std::size_t>(k)]->eval_guidance(z);
  };
  return maybe_postprocess(run_particles(p0, cfg, guide, "estimator"), cfg);
}

SampleBatch postprocess(const SampleBatch& batch, double radius, double mu_t0) {
  if (!(radius > 0.0)) throw std::invalid_argument("postprocess: R > 0");
  if (!(mu_t0 > 0.0) || mu_t0 > 1.0) {
    throw std::invalid_argument("postprocess: mu_T0 in (0, 1]");
  }
  SampleBatch out = batch;
  out.truncated_count = 0;
  const double inv_mu = 1.0 / mu_t0;
  for (int i = 0; i < out.points.rows(); ++i) {
    if (out.points.row(i).norm() <= radius) {
      out.points.row(i) *= inv_mu;
    } else {
      out.points.row(i).setZero();
      ++out.truncated_count;
    }
  }
  return out;
}

}  // namespace doob
