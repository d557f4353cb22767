#pragma once

#include <utility>
#include <vector>

namespace doob {

// Variance-preserving time parameterization of the forward noising process.
// All times are stored in forward-time units; the reverse process indexes the
// marginal at T - t internally.
struct VpSchedule {
  double terminal_time;  // T
  double early_stop;     // T0, 0 < T0 < T
  int steps;             // K >= 1

  VpSchedule(double T, double T0, int K);

  double step_size() const { return (terminal_time - early_stop) / steps; }

  // t_k = k*h for k = 0..K; the endpoint is k*h by multiplication, so the
  // last point equals T - T0 without accumulation drift.
  std::vector<double> time_grid() const;
};

// (mu, sigma^2) = (exp(-t), 1 - exp(-2t)); mu^2 + sigma^2 = 1.
std::pair<double, double> mu_sigma(double t);

double mu_of(double t);
double sigma2_of(double t);

// phi(z) = sqrt(exp(z) - 1), the exponential-integrator coefficient.
double phi(double z);

}  // namespace doob
