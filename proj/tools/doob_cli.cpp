#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "doob/doob_oracle.hpp"
#include "doob/experiments.hpp"
#include "doob/metrics.hpp"
#include "doob/persist.hpp"
#include "doob/sampler.hpp"

namespace {

using nlohmann::json;

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("DOOB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::string out_file(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  std::filesystem::create_directories(dir);
  return dir + "/" + name;
}

struct CommonOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "JSON config file");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "seed override")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads,
                  "worker threads (default: DOOB_THREADS or 1)");
  cmd->add_option("--format", o.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
}

int cmd_sample(const CommonOpts& o) {
  const json cfg = doob::load_json_file(o.config);
  const doob::GaussianMixture p0 = doob::mixture_from_json(cfg.at("p0"));
  doob::SamplerConfig scfg =
      doob::sampler_config_from_json(cfg.at("sampler"), p0);
  if (o.seed_set) scfg.seed = o.seed;
  scfg.threads = resolve_threads(o.threads > 0 ? o.threads : scfg.threads);
  doob::SampleBatch batch;
  if (scfg.guidance_mode == doob::GuidanceMode::kNone) {
    batch = doob::reference_sample(p0, scfg);
  } else if (scfg.guidance_mode == doob::GuidanceMode::kOracle) {
    const doob::WeightSpec w = doob::weight_from_json(cfg.at("weight"));
    const doob::DoobOracle oracle(p0, scfg.sched, w);
    batch = doob::guided_sample(p0, scfg, oracle);
  } else {
    const auto ests =
        doob::load_estimators(cfg.at("estimators_path").get<std::string>());
    batch = doob::guided_sample(p0, scfg, ests);
  }
  const std::string path = out_file(o.out, "batch.csv");
  doob::write_batch_csv(batch, path);
  std::cout << "wrote " << batch.points.rows() << " particles to " << path
            << "\n";
  return 0;
}

int cmd_fit_h(const CommonOpts& o) {
  const json cfg = doob::load_json_file(o.config);
  const doob::GaussianMixture p0 = doob::mixture_from_json(cfg.at("p0"));
  const doob::WeightSpec w = doob::weight_from_json(cfg.at("weight"));
  const doob::VpSchedule sched = doob::schedule_from_json(cfg.at("schedule"));
  const json est = cfg.value("estimator", json::object());
  const int n_train = est.value("n_train", 10000);
  double lambda = -1.0;
  if (est.contains("lambda") && !est.at("lambda").is_string()) {
    lambda = est.at("lambda");
  }
  doob::WeightBounds clamp{est.value("clamp_lo", 1e-6),
                           est.value("clamp_hi", 1e6)};
  if (auto b = doob::bounds_on_support(w, est.value("support_radius", 6.0))) {
    if (!est.contains("clamp_lo")) clamp = *b;
  }
  const std::uint64_t seed = o.seed_set ? o.seed : cfg.value("seed", 0ULL);
  const auto ests = doob::fit_anchor_estimators(
      p0, sched, w, n_train, est.value("M", 0), lambda,
      est.value("ridge", 1e-8), clamp, seed, est.value("anchors", 16),
      est.value("bandwidth", 0.0), resolve_threads(o.threads));
  const std::string path = out_file(o.out, "estimators.json");
  doob::save_estimators(ests, path);
  std::cout << "wrote " << ests.size() << " estimators to " << path << "\n";
  return 0;
}

int cmd_oracle(const CommonOpts& o) {
  const json cfg = doob::load_json_file(o.config);
  const doob::GaussianMixture p0 = doob::mixture_from_json(cfg.at("p0"));
  const doob::WeightSpec w = doob::weight_from_json(cfg.at("weight"));
  const doob::VpSchedule sched = doob::schedule_from_json(cfg.at("schedule"));
  const doob::DoobOracle oracle(p0, sched, w);
  const double t = cfg.at("t");
  std::vector<Eigen::VectorXd> grid;
  if (cfg.contains("grid")) {
    for (const auto& row : cfg.at("grid")) {
      Eigen::VectorXd x(row.size());
      for (std::size_t i = 0; i < row.size(); ++i) {
        x(static_cast<int>(i)) = row[i];
      }
      grid.push_back(x);
    }
  } else {
    const double lo = cfg.value("grid_min", -4.0);
    const double hi = cfg.value("grid_max", 4.0);
    const int count = cfg.value("grid_count", 101);
    for (int i = 0; i < count; ++i) {
      Eigen::VectorXd x(1);
      x(0) = lo + (hi - lo) * i / std::max(1, count - 1);
      grid.push_back(x);
    }
  }
  const int d = p0.dim();
  Eigen::MatrixXd table(grid.size(), d + 1 + d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& x = grid[i];
    table.block(static_cast<int>(i), 0, 1, d) = x.transpose();
    table(static_cast<int>(i), d) = oracle.h_star(t, x);
    table.block(static_cast<int>(i), d + 1, 1, d) =
        oracle.guidance(t, x).transpose();
  }
  std::vector<std::string> cols;
  for (int k = 0; k < d; ++k) cols.push_back("x" + std::to_string(k));
  cols.push_back("h_star");
  for (int k = 0; k < d; ++k) cols.push_back("guidance" + std::to_string(k));
  const std::string path = out_file(o.out, "oracle.csv");
  doob::write_matrix_csv(table, cols, path);
  std::cout << "wrote " << grid.size() << " oracle rows to " << path << "\n";
  return 0;
}

int cmd_metric(const CommonOpts& o, const std::string& file_a,
               const std::string& file_b, const std::string& metric,
               int n_proj) {
  const doob::SampleBatch a = doob::read_batch_csv(file_a);
  const doob::SampleBatch b = doob::read_batch_csv(file_b);
  doob::MetricReport rep;
  rep.name = metric;
  rep.seed = o.seed;
  rep.n_a = static_cast<int>(a.points.rows());
  rep.n_b = static_cast<int>(b.points.rows());
  if (metric == "w2-1d") {
    if (a.points.cols() != 1 || b.points.cols() != 1) {
      throw std::invalid_argument("w2-1d requires 1D batches");
    }
    rep.value = doob::w2_1d(a.points.col(0), b.points.col(0));
  } else if (metric == "sliced-w2") {
    const auto sw = doob::sliced_w2(a.points, b.points, n_proj, o.seed);
    rep.value = sw.value;
    rep.standard_error = sw.standard_error;
  } else {
    throw std::invalid_argument("unknown metric '" + metric + "'");
  }
  std::cout << doob::metric_report_to_json(rep).dump(2) << "\n";
  if (!o.out.empty()) {
    doob::write_json_file(doob::metric_report_to_json(rep),
                          out_file(o.out, "metric.json"));
  }
  return 0;
}

int cmd_experiment(const CommonOpts& o, bool check) {
  json cfg_json = doob::load_json_file(o.config);
  if (!o.out.empty()) cfg_json["out"] = o.out;
  if (o.seed_set) cfg_json["seeds"] = {o.seed};
  doob::ExperimentConfig cfg = doob::experiment_config_from_json(cfg_json);
  cfg.threads = resolve_threads(o.threads > 0 ? o.threads : cfg.threads);
  const doob::ExperimentReport rep = doob::run_suite(cfg);
  std::cout << "suite " << rep.suite << (rep.pass ? " PASS" : " FAIL") << "\n"
            << rep.details.dump(2) << "\n";
  return check && !rep.pass ? 2 : 0;
}

int cmd_plot(const std::string& input, const std::string& output, int x_col,
             std::vector<int> y_cols, bool log_x, bool log_y) {
  const Eigen::MatrixXd m = doob::read_matrix_csv(input);
  if (y_cols.empty()) {
    for (int k = 0; k < m.cols(); ++k) {
      if (k != x_col) y_cols.push_back(k);
    }
  }
  std::vector<doob::PlotSeries> series;
  for (int yc : y_cols) {
    doob::PlotSeries s;
    s.label = "col" + std::to_string(yc);
    for (int i = 0; i < m.rows(); ++i) {
      s.x.push_back(m(i, x_col));
      s.y.push_back(m(i, yc));
    }
    series.push_back(std::move(s));
  }
  doob::write_svg_plot(output, std::filesystem::path(input).filename().string(),
                       series, log_x, log_y);
  std::cout << "wrote " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"doob: guided diffusion sampling via Doob h-matching"};
  app.require_subcommand(1);

  CommonOpts sample_o, fit_o, oracle_o, metric_o, exp_o;
  auto* sample = app.add_subcommand("sample", "run a sampler config");
  add_common(sample, sample_o);
  auto* fit = app.add_subcommand("fit-h", "fit and serialize h-estimators");
  add_common(fit, fit_o);
  auto* oracle = app.add_subcommand("oracle", "evaluate h*/guidance on a grid");
  add_common(oracle, oracle_o);

  auto* metric = app.add_subcommand("metric", "compare two batch files");
  std::string file_a, file_b, metric_name = "sliced-w2";
  int n_proj = 64;
  metric->add_option("a", file_a, "first batch CSV")->required();
  metric->add_option("b", file_b, "second batch CSV")->required();
  metric->add_option("--metric", metric_name, "w2-1d|sliced-w2");
  metric->add_option("--n-proj", n_proj, "projection count");
  add_common(metric, metric_o, /*config_required=*/false);

  auto* experiment = app.add_subcommand("experiment", "run an experiment suite");
  bool check = false;
  add_common(experiment, exp_o);
  experiment->add_flag("--check", check, "exit 2 when the suite fails");

  auto* plot = app.add_subcommand("plot", "render a CSV to SVG");
  std::string plot_in, plot_out = "plot.svg";
  int x_col = 0;
  std::vector<int> y_cols;
  bool log_x = false, log_y = false;
  plot->add_option("input", plot_in, "CSV input")->required();
  plot->add_option("--out", plot_out, "SVG output path");
  plot->add_option("--x-col", x_col, "x column index");
  plot->add_option("--y-col", y_cols, "y column indices");
  plot->add_flag("--log-x", log_x, "log-scale x");
  plot->add_flag("--log-y", log_y, "log-scale y");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed()) return cmd_sample(sample_o);
    if (fit->parsed()) return cmd_fit_h(fit_o);
    if (oracle->parsed()) return cmd_oracle(oracle_o);
    if (metric->parsed()) {
      return cmd_metric(metric_o, file_a, file_b, metric_name, n_proj);
    }
    if (experiment->parsed()) return cmd_experiment(exp_o, check);
    if (plot->parsed()) return cmd_plot(plot_in, plot_out, x_col, y_cols,
                                        log_x, log_y);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
