#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "doob/gaussian_mixture.hpp"
#include "doob/h_matching.hpp"
#include "doob/sampler.hpp"
#include "doob/schedule.hpp"
#include "doob/weights.hpp"

namespace doob {

struct ExperimentConfig {
  std::string suite;
  GaussianMixture p0 = GaussianMixture::standard(1);
  WeightSpec weight = ConstantWeight{1.0};
  VpSchedule sched{4.0, 0.01, 64};

  // estimator knobs
  int m_features = 0;     // 0 -> round(4 n^{1/3}) capped at 200
  double lambda = -1.0;   // < 0 -> auto n^{-2/(d+8)}
  double ridge = 1e-8;
  int n_train = 10000;
  int anchors = 16;       // 0 -> one estimator per grid time
  double bandwidth_override = 0.0;  // > 0 replaces the median heuristic

  // sampler knobs
  int n_particles = 2000;
  double eps_ref = 0.0;
  int threads = 1;

  // metric knobs
  int n_proj = 64;
  double base_threshold = 0.05;

  // suite-specific knobs
  double fit_time_frac = 0.5;        // anchor t = frac * T for single-time fits
  double contamination_freq = 8.0;   // oscillatory response contamination
  int ambient_dim = 5;               // lowdim suite

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir;

  nlohmann::json resolved;  // full resolved config, embedded in reports
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct ExperimentReport {
  std::string suite;
  bool pass = false;
  nlohmann::json details;
  nlohmann::json resolved_config;
};

// Dispatches on cfg.suite; writes report.json (plus suite CSV/SVG artifacts)
// into cfg.out_dir when set.
ExperimentReport run_suite(const ExperimentConfig& cfg);

// One gradient-regularized estimator per anchor time. n_anchors = 0 places an
// anchor at every sampler grid time; otherwise anchors are evenly spaced over
// [0, T - T0). lambda < 0 resolves to auto_lambda(n_train, d).
std::vector<HEstimator> fit_anchor_estimators(
    const GaussianMixture& p0, const VpSchedule& sched, const WeightSpec& spec,
    int n_train, int m_features, double lambda, double ridge,
    const WeightBounds& clamp, std::uint64_t seed, int n_anchors,
    double bandwidth_override = 0.0, int threads = 1);

// OLS fit of log(median_s y) on log(x) with a 90% band from resampling the
// seed axis with replacement. values[i][s] = y at x[i] for seed s.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
};
SlopeFit fit_loglog_slope(const std::vector<double>& x,
                          const std::vector<std::vector<double>>& values,
                          std::uint64_t seed, int n_boot = 200);

double median(std::vector<double> v);

// Minimal static line chart; one polyline per series, log-log optional.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series, bool log_x = false,
                    bool log_y = false);

}  // namespace doob
