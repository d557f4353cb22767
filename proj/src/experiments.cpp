#include "doob/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "doob/doob_oracle.hpp"
#include "doob/metrics.hpp"
#include "doob/persist.hpp"
#include "doob/rng.hpp"

namespace doob {

using nlohmann::json;

namespace {

int default_m(int n) {
  return std::min(200, std::max(8, static_cast<int>(
                                      std::lround(4.0 * std::cbrt(n)))));
}

WeightBounds resolve_clamp(const WeightSpec& spec, int d) {
  const double radius = 6.0 * std::sqrt(static_cast<double>(d));
  if (auto b = bounds_on_support(spec, radius)) return *b;
  return {1e-6, 1e6};
}

double w2_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                  int n_proj, std::uint64_t seed) {
  if (a.cols() == 1) {
    const double w = w2_1d(a.col(0), b.col(0));
    return w * w;
  }
  const double w = sliced_w2(a, b, n_proj, seed).value;
  return w * w;
}

json to_json(const std::vector<double>& v) {
  json j = json::array();
  for (double x : v) j.push_back(x);
  return j;
}

bool non_increasing(const std::vector<double>& v, double slack = 0.0) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1] + slack) return false;
  }
  return true;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return true;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

SlopeFit fit_loglog_slope(const std::vector<double>& x,
                          const std::vector<std::vector<double>>& values,
                          std::uint64_t seed, int n_boot) {
  const std::size_t k = x.size();
  if (values.size() != k || k < 2) {
    throw std::invalid_argument("fit_loglog_slope: need >= 2 x points");
  }
  const std::size_t n_seeds = values.front().size();
  auto ols = [&](const std::vector<double>& med) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double lx = std::log(x[i]);
      const double ly = std::log(med[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double n = static_cast<double>(k);
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return std::pair{slope, (sy - slope * sx) / n};
  };
  std::vector<double> med(k);
  for (std::size_t i = 0; i < k; ++i) med[i] = median(values[i]);
  SlopeFit fit;
  std::tie(fit.slope, fit.intercept) = ols(med);
  if (n_seeds < 2 || n_boot < 2) {
    fit.band_lo = fit.band_hi = fit.slope;
    return fit;
  }
  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(n_boot));
  rng::CounterStream stream(rng::mix_keys({seed, 0x626f6f74ULL}));
  for (int b = 0; b < n_boot; ++b) {
    std::vector<double> bmed(k);
    std::vector<std::size_t> pick(n_seeds);
    for (auto& p : pick) {
      p = std::min<std::size_t>(
          static_cast<std::size_t>(stream.uniform() * n_seeds), n_seeds - 1);
    }
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> vals;
      vals.reserve(n_seeds);
      for (auto p : pick) vals.push_back(values[i][p]);
      bmed[i] = median(vals);
    }
    boot.push_back(ols(bmed).first);
  }
  std::sort(boot.begin(), boot.end());
  const auto q = [&](double p) {
    return boot[std::min<std::size_t>(
        static_cast<std::size_t>(p * (boot.size() - 1)), boot.size() - 1)];
  };
  fit.band_lo = q(0.05);
  fit.band_hi = q(0.95);
  return fit;
}

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series, bool log_x,
                    bool log_y) {
  constexpr double W = 640, H = 420, L = 60, R = 20, T = 40, B = 40;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, tx(v));
      xmax = std::max(xmax, tx(v));
    }
    for (double v : s.y) {
      ymin = std::min(ymin, ty(v));
      ymax = std::max(ymax, ty(v));
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  auto px = [&](double v) { return L + (tx(v) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
    << H << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
    << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='15'>"
    << title << "</text>\n"
    << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='"
    << H - B << "' stroke='black'/>\n"
    << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
    << H - B << "' stroke='black'/>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* c = colors[si % 6];
    f << "<polyline fill='none' stroke='" << c << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    f << "'/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
        << "' r='3' fill='" << c << "'/>\n";
    }
    f << "<text x='" << W - R - 150 << "' y='" << T + 16 * (si + 1)
      << "' font-size='12' fill='" << c << "'>" << s.label << "</text>\n";
  }
  f << "</svg>\n";
}

std::vector<HEstimator> fit_anchor_estimators(
    const GaussianMixture& p0, const VpSchedule& sched, const WeightSpec& spec,
    int n_train, int m_features, double lambda, double ridge,
    const WeightBounds& clamp, std::uint64_t seed, int n_anchors,
    double bandwidth_override, int threads) {
  const double T = sched.terminal_time;
  const double h = sched.step_size();
  std::vector<double> anchor_times;
  if (n_anchors <= 0) {
    for (int k = 0; k < sched.steps; ++k) anchor_times.push_back(k * h);
  } else {
    const double span = T - sched.early_stop;
    for (int a = 0; a < n_anchors; ++a) {
      anchor_times.push_back(a * span / n_anchors);
    }
  }
  const int d = p0.dim();
  const int M = m_features > 0 ? m_features : default_m(n_train);
  const double lam = lambda >= 0.0 ? lambda : auto_lambda(n_train, d);
  std::vector<HEstimator> out(anchor_times.size());
  auto fit_one = [&](std::size_t a) {
    const double t = anchor_times[a];
    const PairBatch pairs = sample_x0_xt_pairs(
        p0, T - t, n_train,
        rng::mix_keys({seed, static_cast<std::uint64_t>(a), 0x616e6368ULL}));
    FeatureMap fm = build_features(pairs.xt, M, seed);
    if (bandwidth_override > 0.0) fm.bandwidth = bandwidth_override;
    out[a] = lam > 0.0
                 ? fit_gradient_regularized(pairs, spec, fm, lam, ridge, clamp, t)
                 : fit_vanilla(pairs, spec, fm, ridge, clamp, t);
  };
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(anchor_times.size())));
  if (n_threads == 1) {
    for (std::size_t a = 0; a < anchor_times.size(); ++a) fit_one(a);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t a = static_cast<std::size_t>(w);
             a < anchor_times.size(); a += static_cast<std::size_t>(n_threads)) {
          fit_one(a);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

namespace {

// suite: guided runs with Constant weight must reproduce the reference run
// bit for bit.
json run_identity(const ExperimentConfig& cfg, bool& pass) {
  const WeightSpec w = ConstantWeight{1.0};
  const DoobOracle oracle(cfg.p0, cfg.sched, w);
  SamplerConfig scfg{cfg.sched};
  scfg.n_particles = cfg.n_particles;
  scfg.threads = cfg.threads;
  json rows = json::array();
  pass = true;
  for (auto seed : cfg.seeds) {
    scfg.seed = seed;
    const SampleBatch ref = reference_sample(cfg.p0, scfg);
    const SampleBatch gui = guided_sample(cfg.p0, scfg, oracle);
    const bool equal = ref.points.rows() == gui.points.rows() &&
                       (ref.points.array() == gui.points.array()).all();
    pass = pass && equal;
    rows.push_back({{"seed", seed}, {"bitwise_equal", equal}});
  }
  return {{"rows", rows}};
}

json run_posterior_gaussian(const ExperimentConfig& cfg, bool& pass) {
  const GaussianMixture target = tilted_target(cfg.p0, cfg.weight);
  const DoobOracle oracle(cfg.p0, cfg.sched, cfg.weight);
  const WeightBounds clamp = resolve_clamp(cfg.weight, cfg.p0.dim());
  SamplerConfig scfg{cfg.sched};
  scfg.n_particles = cfg.n_particles;
  scfg.threads = cfg.threads;
  scfg.postprocess_enabled = true;
  scfg.truncation_radius =
      default_truncation_radius(cfg.sched, cfg.p0.dim(), 1e-4);
  std::vector<double> w2_oracle, w2_est;
  json rows = json::array();
  for (auto seed : cfg.seeds) {
    scfg.seed = seed;
    const Eigen::MatrixXd tgt = sample_mixture(
        target, cfg.n_particles, rng::mix_keys({seed, 0x74677431ULL}));
    const SampleBatch ob = guided_sample(cfg.p0, scfg, oracle);
    const double wo = w2_squared(ob.points, tgt, cfg.n_proj, seed);
    const auto ests = fit_anchor_estimators(
        cfg.p0, cfg.sched, cfg.weight, cfg.n_train, cfg.m_features, cfg.lambda,
        cfg.ridge, clamp, seed, cfg.anchors, cfg.bandwidth_override,
        cfg.threads);
    const SampleBatch eb = guided_sample(cfg.p0, scfg, ests);
    const double we = w2_squared(eb.points, tgt, cfg.n_proj, seed);
    w2_oracle.push_back(wo);
    w2_est.push_back(we);
    rows.push_back({{"seed", seed},
                    {"w2sq_oracle", wo},
                    {"w2sq_estimator", we},
                    {"truncated_oracle", ob.truncated_count},
                    {"truncated_estimator", eb.truncated_count}});
  }
  const double thr_cal = same_distribution_threshold(
      cfg.n_particles, cfg.n_proj, cfg.seeds.front(),
      [&](int n, std::uint64_t s) { return sample_mixture(target, n, s); });
  const double threshold = std::max(cfg.base_threshold, thr_cal);
  const double med_o = median(w2_oracle);
  const double med_e = median(w2_est);
  pass = med_o < threshold && med_e <= med_o + 0.05;
  return {{"rows", rows},
          {"median_w2sq_oracle", med_o},
          {"median_w2sq_estimator", med_e},
          {"calibrated_threshold", thr_cal},
          {"threshold", threshold}};
}

json run_rate_sweep_n(const ExperimentConfig& cfg, bool& pass) {
  const std::vector<int> ns = {500, 2000, 8000, 32000};
  const double T = cfg.sched.terminal_time;
  const double t = cfg.fit_time_frac * T;
  const double tau = T - t;
  const DoobOracle oracle(cfg.p0, cfg.sched, cfg.weight);
  const WeightBounds clamp = resolve_clamp(cfg.weight, cfg.p0.dim());
  const int d = cfg.p0.dim();
  const GaussianMixture marg = marginal_at(cfg.p0, tau);
  std::vector<std::vector<double>> errs(ns.size());
  json rows = json::array();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const int n = ns[i];
    for (auto seed : cfg.seeds) {
      // n-independent key: the size-n training set is a prefix of the largest
      // one (per-draw substreams), which correlates errors across the sweep
      // and stabilizes the bootstrap slope band.
      const std::uint64_t key = rng::mix_keys({seed, 0x72617465ULL});
      const PairBatch pairs = sample_x0_xt_pairs(cfg.p0, tau, n, key);
      FeatureMap fm = build_features(pairs.xt, default_m(n), key);
      if (cfg.bandwidth_override > 0.0) fm.bandwidth = cfg.bandwidth_override;
      const double lam =
          cfg.lambda >= 0.0 ? cfg.lambda : auto_lambda(n, d);
      const HEstimator est = fit_gradient_regularized(
          pairs, cfg.weight, fm, lam, cfg.ridge, clamp, t);
      const Eigen::MatrixXd eval = sample_mixture(
          marg, 2000, rng::mix_keys({seed, 0x6576616cULL}));
      double acc = 0.0;
      for (int r = 0; r < eval.rows(); ++r) {
        const Eigen::VectorXd x = eval.row(r).transpose();
        acc += (est.eval_guidance(x) - oracle.guidance(t, x)).squaredNorm();
      }
      const double err = std::sqrt(acc / eval.rows());
      errs[i].push_back(err);
      rows.push_back(
          {{"n", n}, {"seed", seed}, {"guidance_l2_error", err}, {"lambda", lam}});
    }
  }
  std::vector<double> xs(ns.begin(), ns.end());
  std::vector<double> meds;
  for (auto& e : errs) meds.push_back(median(e));
  const SlopeFit fit = fit_loglog_slope(xs, errs, cfg.seeds.front());
  pass = strictly_decreasing(meds) && fit.slope < 0.0 && fit.band_hi < 0.0;
  return {{"rows", rows},
          {"n_values", ns},
          {"median_errors", to_json(meds)},
          {"slope", fit.slope},
          {"band", {fit.band_lo, fit.band_hi}}};
}

json run_regularization_gap(const ExperimentConfig& cfg, bool& pass) {
  if (cfg.p0.dim() != 1) {
    throw std::invalid_argument("regularization_gap: 1D reference required");
  }
  const double T = cfg.sched.terminal_time;
  const double t = cfg.fit_time_frac * T;
  const DoobOracle oracle(cfg.p0, cfg.sched, cfg.weight);
  const WeightBounds clamp = resolve_clamp(cfg.weight, 1);
  // Fixed grid of centers over the bulk of p_{T-t}; the sweep compares
  // population solutions within one span, so the basis must not move with
  // lambda.
  const int M = 200;
  FeatureMap fm;
  fm.centers.resize(M, 1);
  for (int i = 0; i < M; ++i) {
    fm.centers(i, 0) = -5.0 + 10.0 * i / (M - 1);
  }
  fm.bandwidth = cfg.bandwidth_override > 0.0 ? cfg.bandwidth_override : 0.4;
  fm.include_constant = true;
  const int quad_order = 120;
  const double ridge = 1e-12;
  const PopulationFit base = population_fit_1d(
      cfg.p0, cfg.sched, cfg.weight, t, fm, 0.0, quad_order, clamp, ridge);
  // Whitened spectral solve of the lambda family: restrict to the
  // numerically significant eigenspace of the value Gram so every h^lambda is
  // computed exactly in one shared basis. The direct RBF-basis solve is too
  // ill-conditioned to resolve gaps near lambda = 1e-4.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(base.value_gram);
  const double s_max = es_a.eigenvalues().maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < es_a.eigenvalues().size(); ++i) {
    if (es_a.eigenvalues()(i) > s_max * 1e-12) keep.push_back(i);
  }
  const int r = static_cast<int>(keep.size());
  Eigen::MatrixXd W(base.value_gram.rows(), r);
  for (int j = 0; j < r; ++j) {
    W.col(j) =
        es_a.eigenvectors().col(keep[static_cast<std::size_t>(j)]) /
        std::sqrt(es_a.eigenvalues()(keep[static_cast<std::size_t>(j)]));
  }
  const Eigen::MatrixXd gt = W.transpose() * base.grad_gram * W;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_g(
      0.5 * (gt + gt.transpose()));
  const Eigen::VectorXd spec = es_g.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd bt =
      es_g.eigenvectors().transpose() * (W.transpose() * base.target_moments);
  const Eigen::MatrixXd back = W * es_g.eigenvectors();  // whitened -> RBF
  std::vector<double> lambdas;
  for (int i = 0; i <= 6; ++i) lambdas.push_back(std::pow(10.0, -4.0 + 0.5 * i));
  std::vector<double> l2_gap, grad_gap, l2_vs_oracle, grad_vs_oracle, grad_energy;
  const double proj_residual_sq =
      std::max(0.0, base.target_sq - bt.squaredNorm());
  for (double lam : lambdas) {
    // In whitened coordinates A = I, G = diag(spec):
    // theta^lam = b / (1 + lam*spec), delta = theta^lam - theta^0.
    const Eigen::ArrayXd denom = 1.0 + lam * spec.array();
    const Eigen::ArrayXd theta = bt.array() / denom;
    const Eigen::ArrayXd delta = theta - bt.array();
    l2_gap.push_back(std::sqrt(delta.square().sum()));
    grad_gap.push_back(std::sqrt((spec.array() * delta.square()).sum()));
    grad_energy.push_back((spec.array() * theta.square()).sum());
    l2_vs_oracle.push_back(
        std::sqrt(proj_residual_sq + delta.square().sum()));
    // Gradient error vs the oracle needs quadrature (the out-of-span gradient
    // residual has no Gram expression); informational only.
    HEstimator est = base.estimator;
    est.coeffs = back * theta.matrix();
    double og = 0.0;
    for (int j = 0; j < base.quad.points.size(); ++j) {
      Eigen::VectorXd x(1);
      x(0) = base.quad.points(j);
      const double dg =
          est.raw_grad(x)(0) - oracle.grad_h_star(t, x)(0);
      og += base.quad.weights(j) * dg * dg;
    }
    grad_vs_oracle.push_back(std::sqrt(og));
  }
  auto slope_of = [&](const std::vector<double>& y) {
    std::vector<std::vector<double>> vals;
    for (double v : y) vals.push_back({v});
    return fit_loglog_slope(lambdas, vals, 0, 0).slope;
  };
  const double s_l2 = slope_of(l2_gap);
  const double s_grad = slope_of(grad_gap);
  const bool penalty_monotone = non_increasing(grad_energy, 1e-12);
  pass = s_l2 >= 0.8 && s_l2 <= 1.2 && s_grad >= 0.3 && s_grad <= 0.7 &&
         penalty_monotone;
  return {{"lambdas", to_json(lambdas)},
          {"l2_gap", to_json(l2_gap)},
          {"grad_gap", to_json(grad_gap)},
          {"l2_vs_oracle", to_json(l2_vs_oracle)},
          {"grad_vs_oracle", to_json(grad_vs_oracle)},
          {"grad_energy", to_json(grad_energy)},
          {"l2_slope", s_l2},
          {"grad_slope", s_grad},
          {"penalty_monotone", penalty_monotone}};
}

json run_vanilla_vs_regularized(const ExperimentConfig& cfg, bool& pass) {
  if (cfg.p0.dim() != 1) {
    throw std::invalid_argument("vanilla_vs_regularized: 1D reference required");
  }
  const std::vector<int> ns = {500, 2000, 8000};
  const double T = cfg.sched.terminal_time;
  const double t = cfg.fit_time_frac * T;
  const double tau = T - t;
  const double nu = cfg.contamination_freq;
  const DoobOracle oracle(cfg.p0, cfg.sched, cfg.weight);
  const WeightBounds clamp = resolve_clamp(cfg.weight, 1);
  const GaussianMixture marg = marginal_at(cfg.p0, tau);
  const double bw = cfg.bandwidth_override > 0.0 ? cfg.bandwidth_override : 0.15;
  json rows = json::array();
  std::vector<std::vector<double>> van_grad(ns.size()), reg_grad(ns.size()),
      van_val(ns.size()), reg_val(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const int n = ns[i];
    for (auto seed : cfg.seeds) {
      const std::uint64_t key =
          rng::mix_keys({seed, static_cast<std::uint64_t>(n), 0x6f736369ULL});
      const PairBatch pairs = sample_x0_xt_pairs(cfg.p0, tau, n, key);
      Eigen::VectorXd y(n);
      for (int r = 0; r < n; ++r) {
        y(r) = eval_weight(cfg.weight, pairs.x0.row(r).transpose()) +
               std::sin(nu * pairs.xt(r, 0)) / nu;
      }
      FeatureMap fm = build_features(pairs.xt, default_m(n), key);
      fm.bandwidth = bw;
      const HEstimator van =
          fit_with_responses(pairs.xt, y, fm, 0.0, cfg.ridge, clamp, t);
      const double lam = cfg.lambda >= 0.0 ? cfg.lambda : auto_lambda(n, 1);
      const HEstimator reg =
          fit_with_responses(pairs.xt, y, fm, lam, cfg.ridge, clamp, t);
      const Eigen::MatrixXd eval =
          sample_mixture(marg, 2000, rng::mix_keys({seed, 0x6576616cULL}));
      const H1Error ev = h1_error(van, oracle, t, eval);
      const H1Error er = h1_error(reg, oracle, t, eval);
      van_grad[i].push_back(ev.grad_l2);
      reg_grad[i].push_back(er.grad_l2);
      van_val[i].push_back(ev.l2);
      reg_val[i].push_back(er.l2);
      rows.push_back({{"n", n},
                      {"seed", seed},
                      {"vanilla_grad_l2", ev.grad_l2},
                      {"regularized_grad_l2", er.grad_l2},
                      {"vanilla_l2", ev.l2},
                      {"regularized_l2", er.l2}});
    }
  }
  const std::size_t last = ns.size() - 1;
  const double mvg = median(van_grad[last]);
  const double mrg = median(reg_grad[last]);
  const double value_gate = 0.05 * clamp.upper;
  pass = mrg <= mvg && median(van_val[last]) < value_gate &&
         median(reg_val[last]) < value_gate;
  return {{"rows", rows},
          {"n_values", ns},
          {"median_vanilla_grad_l2", mvg},
          {"median_regularized_grad_l2", mrg},
          {"value_gate", value_gate}};
}

json run_lowdim(const ExperimentConfig& cfg, bool& pass) {
  const int d = cfg.ambient_dim;
  const GaussianMixture latent = cfg.p0;
  const std::uint64_t seed = cfg.seeds.front();
  const Eigen::MatrixXd P = random_orthonormal(d, latent.dim(), seed);
  const SubspaceEmbedding emb(P, latent);
  const GaussianMixture ambient = embed(emb);
  // Pure exponential tilt: conjugate for the rank-deficient ambient mixture.
  ExpQuadReward w;
  w.Q = Eigen::MatrixXd::Zero(d, d);
  w.b = Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
  const DoobOracle oracle(ambient, cfg.sched, w);
  const double t = cfg.fit_time_frac * cfg.sched.terminal_time;
  const Eigen::MatrixXd proj_perp =
      Eigen::MatrixXd::Identity(d, d) - P * P.transpose();
  rng::CounterStream stream(rng::mix_keys({seed, 0x6c6f7764ULL}));
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs, neg_pairs;
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x1 = 2.0 * stream.normal_vector(d);
    const Eigen::VectorXd v = proj_perp * stream.normal_vector(d);
    pairs.emplace_back(x1, x1 + v);
  }
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x1 = 2.0 * stream.normal_vector(d);
    const Eigen::VectorXd v =
        P * (0.5 * stream.normal_vector(latent.dim()).array() + 0.5).matrix();
    neg_pairs.emplace_back(x1, x1 + v);
  }
  const double dev = check_lowdim_representation(oracle, t, pairs);
  const double neg_dev = check_lowdim_representation(oracle, t, neg_pairs);
  pass = dev < 1e-8 && neg_dev > 1e-6;
  return {{"max_deviation", dev},
          {"negative_control_deviation", neg_dev},
          {"ambient_dim", d},
          {"intrinsic_dim", latent.dim()}};
}

json run_discretization(const ExperimentConfig& cfg, bool& pass) {
  const GaussianMixture target = tilted_target(cfg.p0, cfg.weight);
  const double T0 = cfg.sched.early_stop;
  auto run_case = [&](double T, int K, double eps_ref,
                      std::uint64_t seed) {
    const VpSchedule sched(T, T0, K);
    const DoobOracle oracle(cfg.p0, sched, cfg.weight);
    SamplerConfig scfg{sched};
    scfg.n_particles = cfg.n_particles;
    scfg.seed = seed;
    scfg.threads = cfg.threads;
    scfg.postprocess_enabled = true;
    scfg.truncation_radius = default_truncation_radius(sched, cfg.p0.dim(), 1e-4);
    if (eps_ref > 0.0) {
      scfg.score_mode = ScoreMode::kNoisy;
      scfg.eps_ref = eps_ref;
    }
    const SampleBatch b = guided_sample(cfg.p0, scfg, oracle);
    const Eigen::MatrixXd tgt = sample_mixture(
        target, cfg.n_particles, rng::mix_keys({seed, 0x74677432ULL}));
    return w2_squared(b.points, tgt, cfg.n_proj, seed);
  };
  const double base_T = cfg.sched.terminal_time;
  const int base_K = cfg.sched.steps;
  json details;
  pass = true;
  // (a) reference-score noise: medians non-decreasing in eps_ref.
  {
    const std::vector<double> eps = {0.0, 0.1, 0.5};
    std::vector<double> meds;
    for (double e : eps) {
      std::vector<double> vals;
      for (auto s : cfg.seeds) vals.push_back(run_case(base_T, base_K, e, s));
      meds.push_back(median(vals));
    }
    // knob improves right-to-left; non-increasing as eps shrinks
    std::vector<double> rev(meds.rbegin(), meds.rend());
    const bool ok = non_increasing(rev);
    pass = pass && ok;
    details["eps_ref"] = {{"values", to_json(eps)},
                          {"median_w2sq", to_json(meds)},
                          {"monotone", ok}};
  }
  // (b) step count: medians non-increasing in K.
  {
    const std::vector<int> ks = {8, 32, 128};
    std::vector<double> meds;
    for (int k : ks) {
      std::vector<double> vals;
      for (auto s : cfg.seeds) vals.push_back(run_case(base_T, k, 0.0, s));
      meds.push_back(median(vals));
    }
    const bool ok = non_increasing(meds);
    pass = pass && ok;
    details["steps"] = {{"values", ks},
                        {"median_w2sq", to_json(meds)},
                        {"monotone", ok}};
  }
  // (c) terminal time: medians non-increasing in T. Step size h is held
  // fixed (K scales with T) so only the initialization term moves.
  {
    const std::vector<double> ts = {2.0, 4.0, 8.0};
    std::vector<double> meds;
    for (double T : ts) {
      const int K = std::max(1, static_cast<int>(std::lround(
                                    base_K * (T - T0) / (base_T - T0))));
      std::vector<double> vals;
      for (auto s : cfg.seeds) vals.push_back(run_case(T, K, 0.0, s));
      meds.push_back(median(vals));
    }
    const bool ok = non_increasing(meds);
    pass = pass && ok;
    details["terminal_time"] = {{"values", to_json(ts)},
                                {"median_w2sq", to_json(meds)},
                                {"monotone", ok}};
  }
  return details;
}

void write_artifacts(const ExperimentConfig& cfg, const ExperimentReport& rep) {
  if (cfg.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.out_dir);
  json out = {{"suite", rep.suite},
              {"pass", rep.pass},
              {"details", rep.details},
              {"config", rep.resolved_config},
              {"config_hash", config_hash(rep.resolved_config)}};
  write_json_file(out, cfg.out_dir + "/report.json");
  // Optional plots for the sweep-style suites.
  try {
    if (rep.suite == "rate_sweep_n") {
      PlotSeries s{"median guidance L2 error", {}, {}};
      for (const auto& v : rep.details.at("n_values")) s.x.push_back(v);
      for (const auto& v : rep.details.at("median_errors")) s.y.push_back(v);
      write_svg_plot(cfg.out_dir + "/rate_sweep_n.svg",
                     "Guidance error vs n (log-log)", {s}, true, true);
    } else if (rep.suite == "regularization_gap") {
      PlotSeries a{"L2 gap", {}, {}}, b{"gradient gap", {}, {}};
      for (const auto& v : rep.details.at("lambdas")) {
        a.x.push_back(v);
        b.x.push_back(v);
      }
      for (const auto& v : rep.details.at("l2_gap")) a.y.push_back(v);
      for (const auto& v : rep.details.at("grad_gap")) b.y.push_back(v);
      write_svg_plot(cfg.out_dir + "/regularization_gap.svg",
                     "Regularization gap vs lambda (log-log)", {a, b}, true,
                     true);
    }
  } catch (const std::exception&) {
    // plots never gate a suite
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.suite = j.at("suite");
  if (j.contains("p0")) cfg.p0 = mixture_from_json(j.at("p0"));
  if (j.contains("weight")) cfg.weight = weight_from_json(j.at("weight"));
  if (j.contains("schedule")) cfg.sched = schedule_from_json(j.at("schedule"));
  if (j.contains("estimator")) {
    const json& e = j.at("estimator");
    cfg.m_features = e.value("M", 0);
    if (e.contains("lambda")) {
      if (e.at("lambda").is_string()) {
        if (e.at("lambda") != "auto") {
          throw std::invalid_argument("estimator.lambda: number or \"auto\"");
        }
        cfg.lambda = -1.0;
      } else {
        cfg.lambda = e.at("lambda");
      }
    }
    cfg.ridge = e.value("ridge", cfg.ridge);
    cfg.n_train = e.value("n_train", cfg.n_train);
    cfg.anchors = e.value("anchors", cfg.anchors);
    cfg.bandwidth_override = e.value("bandwidth", 0.0);
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    cfg.n_particles = s.value("n_particles", cfg.n_particles);
    cfg.eps_ref = s.value("eps_ref", 0.0);
    cfg.threads = s.value("threads", cfg.threads);
  }
  if (j.contains("metric")) {
    const json& m = j.at("metric");
    cfg.n_proj = m.value("n_proj", cfg.n_proj);
    cfg.base_threshold = m.value("base_threshold", cfg.base_threshold);
  }
  cfg.fit_time_frac = j.value("fit_time_frac", cfg.fit_time_frac);
  cfg.contamination_freq = j.value("contamination_freq", cfg.contamination_freq);
  cfg.ambient_dim = j.value("ambient_dim", cfg.ambient_dim);
  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j.at("seeds")) {
      cfg.seeds.push_back(s.get<std::uint64_t>());
    }
    if (cfg.seeds.empty()) {
      throw std::invalid_argument("seeds: at least one required");
    }
  }
  cfg.out_dir = j.value("out", std::string{});
  cfg.resolved = j;
  cfg.resolved["resolved_defaults"] = {
      {"m_features", cfg.m_features},    {"lambda", cfg.lambda},
      {"ridge", cfg.ridge},              {"n_train", cfg.n_train},
      {"anchors", cfg.anchors},          {"n_particles", cfg.n_particles},
      {"n_proj", cfg.n_proj},            {"fit_time_frac", cfg.fit_time_frac},
      {"schedule", schedule_to_json(cfg.sched)}};
  return cfg;
}

ExperimentReport run_suite(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.suite = cfg.suite;
  rep.resolved_config = cfg.resolved.is_null() ? json::object() : cfg.resolved;
  if (cfg.suite == "identity_check") {
    rep.details = run_identity(cfg, rep.pass);
  } else if (cfg.suite == "posterior_gaussian") {
    rep.details = run_posterior_gaussian(cfg, rep.pass);
  } else if (cfg.suite == "rate_sweep_n") {
    rep.details = run_rate_sweep_n(cfg, rep.pass);
  } else if (cfg.suite == "regularization_gap") {
    rep.details = run_regularization_gap(cfg, rep.pass);
  } else if (cfg.suite == "vanilla_vs_regularized") {
    rep.details = run_vanilla_vs_regularized(cfg, rep.pass);
  } else if (cfg.suite == "lowdim_adaptivity") {
    rep.details = run_lowdim(cfg, rep.pass);
  } else if (cfg.suite == "discretization_sweep") {
    rep.details = run_discretization(cfg, rep.pass);
  } else {
    throw std::invalid_argument("run_suite: unknown suite '" + cfg.suite + "'");
  }
  write_artifacts(cfg, rep);
  return rep;
}

}  // namespace doob
