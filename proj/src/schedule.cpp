#include "doob/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace doob {

VpSchedule::VpSchedule(double T, double T0, int K)
    : terminal_time(T), early_stop(T0), steps(K) {
  if (!(T0 >= 0.0) || !(T0 < T)) {
    throw std::invalid_argument("VpSchedule: requires 0 <= T0 < T");
  }
  if (K < 1) throw std::invalid_argument("VpSchedule: requires K >= 1");
}

std::vector<double> VpSchedule::time_grid() const {
  const double h = step_size();
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) grid[static_cast<std::size_t>(k)] = k * h;
  return grid;
}

std::pair<double, double> mu_sigma(double t) {
  if (t < 0.0) throw std::domain_error("mu_sigma: t must be nonnegative");
  return {std::exp(-t), -std::expm1(-2.0 * t)};
}

double mu_of(double t) { return mu_sigma(t).first; }

double sigma2_of(double t) { return mu_sigma(t).second; }

double phi(double z) {
  if (z < 0.0) throw std::domain_error("phi: z must be nonnegative");
  return std::sqrt(std::expm1(z));
}

}  // namespace doob
