#include "doob/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doob/rng.hpp"

namespace doob {

double w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  if (n == 0 || m == 0) throw std::invalid_argument("w2_1d: empty input");
  std::vector<double> sa(a.data(), a.data() + n);
  std::vector<double> sb(b.data(), b.data() + m);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  // Integrate (Fa^{-1}(u) - Fb^{-1}(u))^2 du over the merged breakpoints of
  // the two piecewise-constant quantile functions.
  double acc = 0.0;
  double u = 0.0;
  int i = 0, j = 0;
  while (i < n && j < m) {
    const double ua = static_cast<double>(i + 1) / n;
    const double ub = static_cast<double>(j + 1) / m;
    const double next = std::min(ua, ub);
    const double diff = sa[static_cast<std::size_t>(i)] -
                        sb[static_cast<std::size_t>(j)];
    acc += (next - u) * diff * diff;
    u = next;
    if (ua <= next + 1e-18) ++i;
    if (ub <= next + 1e-18) ++j;
  }
  return std::sqrt(std::max(acc, 0.0));
}

SlicedW2 sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                   int n_proj, std::uint64_t seed) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("sliced_w2: dimension mismatch");
  }
  const int d = static_cast<int>(a.cols());
  if (n_proj < 1) throw std::invalid_argument("sliced_w2: n_proj >= 1");
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n_proj; ++k) {
    rng::CounterStream stream(
        rng::mix_keys({seed, static_cast<std::uint64_t>(k), 0x736c6963ULL}));
    Eigen::VectorXd u = stream.normal_vector(d);
    const double norm = u.norm();
    u = norm > 0.0 ? Eigen::VectorXd(u / norm) : Eigen::VectorXd::Unit(d, 0);
    const double w = w2_1d(a * u, b * u);
    sum += w;
    sum2 += w * w;
  }
  const double mean = sum / n_proj;
  const double var = std::max(0.0, sum2 / n_proj - mean * mean);
  const double se = n_proj > 1 ? std::sqrt(var / (n_proj - 1)) : 0.0;
  return {mean, se};
}

namespace {

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument("gaussian_w2: covariance not PSD");
  }
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

double gaussian_w2(const Eigen::VectorXd& m1, const Eigen::MatrixXd& c1,
                   const Eigen::VectorXd& m2, const Eigen::MatrixXd& c2) {
  const Eigen::MatrixXd s2 = spd_sqrt(c2);
  const Eigen::MatrixXd cross = spd_sqrt(s2 * c1 * s2);
  const double tr = (c1 + c2 - 2.0 * cross).trace();
  return std::sqrt(std::max(0.0, (m1 - m2).squaredNorm() + tr));
}

double same_distribution_threshold(
    int n, int n_proj, std::uint64_t seed,
    const std::function<Eigen::MatrixXd(int, std::uint64_t)>& sampler,
    int n_resample) {
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(n_resample));
  for (int r = 0; r < n_resample; ++r) {
    const std::uint64_t s1 =
        rng::mix_keys({seed, static_cast<std::uint64_t>(2 * r), 0x74687231ULL});
    const std::uint64_t s2 = rng::mix_keys(
        {seed, static_cast<std::uint64_t>(2 * r + 1), 0x74687232ULL});
    const Eigen::MatrixXd a = sampler(n, s1);
    const Eigen::MatrixXd b = sampler(n, s2);
    vals.push_back(sliced_w2(a, b, n_proj,
                             rng::mix_keys({seed, static_cast<std::uint64_t>(r)}))
                       .value);
  }
  std::sort(vals.begin(), vals.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::min<double>(std::ceil(0.95 * n_resample) - 1, n_resample - 1));
  return vals[idx];
}

}  // namespace doob
