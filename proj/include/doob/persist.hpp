#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "doob/doob_oracle.hpp"
#include "doob/gaussian_mixture.hpp"
#include "doob/h_matching.hpp"
#include "doob/metrics.hpp"
#include "doob/sampler.hpp"
#include "doob/weights.hpp"

namespace doob {

// Batch CSV (one particle per row, full precision) with a sidecar
// <path>.meta.json carrying seed / mode / counts / wall time.
void write_batch_csv(const SampleBatch& batch, const std::string& path);
SampleBatch read_batch_csv(const std::string& path);

// Plain numeric matrix CSV with a header row.
void write_matrix_csv(const Eigen::MatrixXd& m,
                      const std::vector<std::string>& columns,
                      const std::string& path);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Estimator blob: {centers, bandwidth, theta, lambda, clamp, t}.
nlohmann::json estimator_to_json(const HEstimator& est);
HEstimator estimator_from_json(const nlohmann::json& j);
void save_estimators(const std::vector<HEstimator>& ests,
                     const std::string& path);
std::vector<HEstimator> load_estimators(const std::string& path);

nlohmann::json metric_report_to_json(const MetricReport& rep);
nlohmann::json regularity_report_to_json(const RegularityReport& rep);

// Config parsing. Throws std::invalid_argument with a field-naming message
// on malformed input.
GaussianMixture mixture_from_json(const nlohmann::json& j);
nlohmann::json mixture_to_json(const GaussianMixture& mix);
WeightSpec weight_from_json(const nlohmann::json& j);
nlohmann::json weight_to_json(const WeightSpec& spec);
VpSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json schedule_to_json(const VpSchedule& sched);
SamplerConfig sampler_config_from_json(const nlohmann::json& j,
                                       const GaussianMixture& p0);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

// FNV-1a over the canonical (sorted-key) serialization.
std::string config_hash(const nlohmann::json& j);

}  // namespace doob
