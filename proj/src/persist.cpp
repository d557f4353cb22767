#include "doob/persist.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace doob {

namespace {

using nlohmann::json;

std::string meta_path(const std::string& path) { return path + ".meta.json"; }

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i];
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows == 0 ? 0 : j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) {
      throw std::invalid_argument("matrix_from_json: ragged rows");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<int>(i), static_cast<int>(k)) = j[i][k];
    }
  }
  return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  return f;
}

}  // namespace

void write_batch_csv(const SampleBatch& batch, const std::string& path) {
  auto f = open_out(path);
  f << std::setprecision(17);
  const int d = static_cast<int>(batch.points.cols());
  for (int k = 0; k < d; ++k) f << (k ? ",x" : "x") << k;
  f << "\n";
  for (int i = 0; i < batch.points.rows(); ++i) {
    for (int k = 0; k < d; ++k) {
      if (k) f << ",";
      f << batch.points(i, k);
    }
    f << "\n";
  }
  json meta = {{"seed", batch.seed},
               {"guidance_mode", batch.guidance_mode},
               {"truncated_count", batch.truncated_count},
               {"wall_time_seconds", batch.wall_time_seconds},
               {"n", batch.points.rows()},
               {"d", d}};
  write_json_file(meta, meta_path(path));
}

SampleBatch read_batch_csv(const std::string& path) {
  SampleBatch batch;
  batch.points = read_matrix_csv(path);
  std::ifstream mf(meta_path(path));
  if (mf) {
    json meta;
    mf >> meta;
    batch.seed = meta.value("seed", std::uint64_t{0});
    batch.guidance_mode = meta.value("guidance_mode", std::string{});
    batch.truncated_count = meta.value("truncated_count", 0);
    batch.wall_time_seconds = meta.value("wall_time_seconds", 0.0);
  }
  return batch;
}

void write_matrix_csv(const Eigen::MatrixXd& m,
                      const std::vector<std::string>& columns,
                      const std::string& path) {
  if (static_cast<int>(columns.size()) != m.cols()) {
    throw std::invalid_argument("write_matrix_csv: column count mismatch");
  }
  auto f = open_out(path);
  f << std::setprecision(17);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (k) f << ",";
    f << columns[k];
  }
  f << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int k = 0; k < m.cols(); ++k) {
      if (k) f << ",";
      f << m(i, k);
    }
    f << "\n";
  }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) {
    throw std::runtime_error("read_matrix_csv: empty file " + path);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("read_matrix_csv: ragged rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<int>(i), static_cast<int>(k)) = rows[i][k];
    }
  }
  return m;
}

json estimator_to_json(const HEstimator& est) {
  return {{"centers", matrix_to_json(est.features.centers)},
          {"bandwidth", est.features.bandwidth},
          {"include_constant", est.features.include_constant},
          {"theta", vector_to_json(est.coeffs)},
          {"lambda", est.lambda},
          {"clamp", {est.clamp_lo, est.clamp_hi}},
          {"t", est.t}};
}

HEstimator estimator_from_json(const json& j) {
  HEstimator est;
  est.features.centers = matrix_from_json(j.at("centers"));
  est.features.bandwidth = j.at("bandwidth");
  est.features.include_constant = j.value("include_constant", true);
  est.coeffs = vector_from_json(j.at("theta"));
  est.lambda = j.at("lambda");
  est.clamp_lo = j.at("clamp")[0];
  est.clamp_hi = j.at("clamp")[1];
  est.t = j.at("t");
  if (est.coeffs.size() != est.features.size()) {
    throw std::invalid_argument("estimator_from_json: theta/centers mismatch");
  }
  return est;
}

void save_estimators(const std::vector<HEstimator>& ests,
                     const std::string& path) {
  json j = json::array();
  for (const auto& e : ests) j.push_back(estimator_to_json(e));
  write_json_file(j, path);
}

std::vector<HEstimator> load_estimators(const std::string& path) {
  const json j = load_json_file(path);
  std::vector<HEstimator> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(estimator_from_json(e));
  return out;
}

json metric_report_to_json(const MetricReport& rep) {
  return {{"name", rep.name},
          {"value", rep.value},
          {"standard_error", rep.standard_error},
          {"n_a", rep.n_a},
          {"n_b", rep.n_b},
          {"seed", rep.seed}};
}

json regularity_report_to_json(const RegularityReport& rep) {
  return {{"value_bounds_hold", rep.value_bounds_hold},
          {"grad_bound_holds", rep.grad_bound_holds},
          {"hessian_bound_holds", rep.hessian_bound_holds},
          {"max_value_ratio_hi", rep.max_value_ratio_hi},
          {"min_value_ratio_lo", rep.min_value_ratio_lo},
          {"max_grad_ratio", rep.max_grad_ratio},
          {"max_hessian_ratio", rep.max_hessian_ratio},
          {"grad_bound", rep.grad_bound},
          {"hessian_bound", rep.hessian_bound}};
}

GaussianMixture mixture_from_json(const json& j) {
  GaussianMixture mix;
  if (j.contains("standard")) {
    return GaussianMixture::standard(j.at("standard").get<int>());
  }
  const json& comps = j.at("components");
  if (comps.empty()) {
    throw std::invalid_argument("mixture: at least one component");
  }
  mix.weights.resize(static_cast<int>(comps.size()));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    mix.weights(static_cast<int>(i)) = comps[i].at("weight");
    mix.means.push_back(vector_from_json(comps[i].at("mean")));
    mix.covs.push_back(matrix_from_json(comps[i].at("cov")));
  }
  mix.validate();
  return mix;
}

json mixture_to_json(const GaussianMixture& mix) {
  json comps = json::array();
  for (int i = 0; i < mix.components(); ++i) {
    comps.push_back({{"weight", mix.weights(i)},
                     {"mean", vector_to_json(mix.means[static_cast<std::size_t>(i)])},
                     {"cov", matrix_to_json(mix.covs[static_cast<std::size_t>(i)])}});
  }
  return {{"components", comps}};
}

WeightSpec weight_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "constant") {
    return ConstantWeight{j.value("c", 1.0)};
  }
  if (kind == "gaussian_likelihood") {
    GaussianLikelihood w;
    w.A = matrix_from_json(j.at("A"));
    w.y = vector_from_json(j.at("y"));
    w.sigma_noise = j.at("sigma_noise");
    w.floor = j.value("floor", 1e-3);
    return w;
  }
  if (kind == "exp_quad_reward") {
    ExpQuadReward w;
    w.b = vector_from_json(j.at("b"));
    if (j.contains("Q")) {
      w.Q = matrix_from_json(j.at("Q"));
    } else {
      w.Q = Eigen::MatrixXd::Zero(w.b.size(), w.b.size());
    }
    w.c = j.value("c", 0.0);
    w.alpha = j.value("alpha", 1.0);
    return w;
  }
  if (kind == "density_ratio") {
    return DensityRatio(mixture_from_json(j.at("target")),
                        mixture_from_json(j.at("reference")));
  }
  throw std::invalid_argument("weight: unknown kind '" + kind + "'");
}

json weight_to_json(const WeightSpec& spec) {
  return std::visit(
      [](const auto& w) -> json {
        using W = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<W, ConstantWeight>) {
          return {{"kind", "constant"}, {"c", w.c}};
        } else if constexpr (std::is_same_v<W, GaussianLikelihood>) {
          return {{"kind", "gaussian_likelihood"},
                  {"A", matrix_to_json(w.A)},
                  {"y", vector_to_json(w.y)},
                  {"sigma_noise", w.sigma_noise},
                  {"floor", w.floor}};
        } else if constexpr (std::is_same_v<W, ExpQuadReward>) {
          return {{"kind", "exp_quad_reward"},
                  {"Q", matrix_to_json(w.Q)},
                  {"b", vector_to_json(w.b)},
                  {"c", w.c},
                  {"alpha", w.alpha}};
        } else {
          return {{"kind", "density_ratio"},
                  {"target", mixture_to_json(w.target)},
                  {"reference", mixture_to_json(w.reference)}};
        }
      },
      spec);
}

VpSchedule schedule_from_json(const json& j) {
  return VpSchedule(j.at("T"), j.value("T0", 0.01), j.at("K"));
}

json schedule_to_json(const VpSchedule& sched) {
  return {{"T", sched.terminal_time},
          {"T0", sched.early_stop},
          {"K", sched.steps}};
}

SamplerConfig sampler_config_from_json(const json& j,
                                       const GaussianMixture& p0) {
  SamplerConfig cfg{schedule_from_json(j.at("schedule"))};
  cfg.n_particles = j.value("n_particles", 1000);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.threads = j.value("threads", 1);
  const std::string gm = j.value("guidance_mode", "none");
  if (gm == "none") {
    cfg.guidance_mode = GuidanceMode::kNone;
  } else if (gm == "oracle") {
    cfg.guidance_mode = GuidanceMode::kOracle;
  } else if (gm == "estimator") {
    cfg.guidance_mode = GuidanceMode::kEstimator;
  } else {
    throw std::invalid_argument("sampler: unknown guidance_mode '" + gm + "'");
  }
  const std::string sm = j.value("score_mode", "exact");
  if (sm == "noisy") {
    cfg.score_mode = ScoreMode::kNoisy;
    cfg.eps_ref = j.value("eps_ref", 0.1);
  } else if (sm != "exact") {
    throw std::invalid_argument("sampler: unknown score_mode '" + sm + "'");
  }
  if (j.contains("postprocess")) {
    const json& pp = j.at("postprocess");
    cfg.postprocess_enabled = pp.value("enabled", false);
    if (pp.contains("R")) {
      cfg.truncation_radius = pp.at("R");
    } else if (cfg.postprocess_enabled) {
      cfg.truncation_radius = default_truncation_radius(
          cfg.sched, p0.dim(), pp.value("eps_target", 1e-3));
    }
  } else if (cfg.guidance_mode != GuidanceMode::kNone) {
    // Post-processing defaults on for guided runs only.
    cfg.postprocess_enabled = true;
    cfg.truncation_radius =
        default_truncation_radius(cfg.sched, p0.dim(), 1e-3);
  }
  return cfg;
}

json load_json_file(const std::string& path) {
  auto f = open_in(path);
  json j;
  f >> j;
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  auto f = open_out(path);
  f << j.dump(2) << "\n";
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();  // nlohmann keeps object keys sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace doob
