#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "doob/gaussian_mixture.hpp"
#include "doob/weights.hpp"

namespace doob {

// Ground-truth h-function h*(t, x) = E[w(X0) | X_{T-t} = x], its gradient and
// the exact guidance grad(log h*). Closed form for conjugate specs, Monte
// Carlo from the exact conditional mixture otherwise. Public APIs take
// reverse time t in (0, T).
class DoobOracle {
 public:
  enum class Mode { kClosedForm, kMonteCarlo };

  DoobOracle(GaussianMixture p0, VpSchedule sched, WeightSpec spec,
             Mode mode = Mode::kClosedForm, int n_mc = 100000,
             std::uint64_t seed = 0);

  struct Estimate {
    double value;
    double standard_error;  // 0 in closed form
  };

  double h_star(double t, const Eigen::VectorXd& x) const;
  Estimate h_star_with_se(double t, const Eigen::VectorXd& x) const;
  Eigen::VectorXd grad_h_star(double t, const Eigen::VectorXd& x) const;
  Eigen::VectorXd guidance(double t, const Eigen::VectorXd& x) const;

  const GaussianMixture& reference() const { return p0_; }
  const VpSchedule& schedule() const { return sched_; }
  const WeightSpec& weight() const { return spec_; }
  Mode mode() const { return mode_; }

 private:
  struct Moments {
    double h;                // E[w | x]
    double se;               // MC standard error of h (0 closed form)
    Eigen::VectorXd x0_w;    // E[X0 w | x]
    Eigen::VectorXd x0;      // E[X0 | x]
  };
  Moments conditional_moments(double forward_t, const Eigen::VectorXd& x) const;

  GaussianMixture p0_;
  VpSchedule sched_;
  WeightSpec spec_;
  Mode mode_;
  int n_mc_;
  std::uint64_t seed_;
};

struct RegularityReport {
  bool value_bounds_hold;
  bool grad_bound_holds;
  bool hessian_bound_holds;
  // max over the grid of quantity / bound (<= 1 means the bound holds)
  double max_value_ratio_hi;
  double min_value_ratio_lo;  // min h / B_lo, >= 1 when (i) holds
  double max_grad_ratio;
  double max_hessian_ratio;
  double grad_bound;
  double hessian_bound;
};

// Checks the three regularity bounds at reverse time t on the given grid:
//   (i)  B_lo <= h* <= B_hi,
//   (ii) max_k |D_k h*| <= 2 sigma_{T-t}^{-2} B_hi,
//   (iii) max |D^2_{kl} h*| <= 6 sigma_{T-t}^{-4} B_hi,
// with (iii) via nested central differences of grad_h_star (step 1e-4).
RegularityReport verify_regularity(const DoobOracle& oracle, double t,
                                   const std::vector<Eigen::VectorXd>& grid,
                                   const WeightBounds& bounds);

// For pairs (x1, x2): max |h*(t, x1) - h*(t, x2)|. The representation result
// predicts 0 whenever P^T x1 = P^T x2.
double check_lowdim_representation(
    const DoobOracle& oracle, double t,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs);

}  // namespace doob
