#pragma once

#include <Eigen/Core>
#include <vector>

namespace asadi {

enum class ScheduleFamily { Power, PowerLog };

// Deterministic step-size schedules alpha(n), n >= 1.
//
//   power:      alpha(n) = n^{-p},                      p in (0.5, 1]
//   power-log:  alpha(n) = n^{-p} * max(ln n, 1)^{-q},  q >= 0
//
// Both families are positive, monotone non-increasing and have divergent
// partial sums; for power-log with p = 1 this forces q <= 1. The usual
// square-summability of the noise condition holds for any p > 0.5.
class Schedule {
 public:
  static Schedule power(double p);
  static Schedule power_log(double p, double q);

  double eval(long long n) const;

  ScheduleFamily family() const { return family_; }
  double exponent() const { return p_; }
  double log_exponent() const { return q_; }

 private:
  Schedule(ScheduleFamily family, double p, double q);

  ScheduleFamily family_;
  double p_;
  double q_;
};

// Per-component update counts nu_n(i).
struct CounterVector {
  std::vector<long long> counts;

  explicit CounterVector(int k) : counts(static_cast<std::size_t>(k), 0) {}
  int size() const { return static_cast<int>(counts.size()); }
  void increment(const std::vector<int>& update_set);
  long long total() const;
};

// bar_alpha_n = max_{i in update set} alpha(nu_n(i)) and the relative step
// sizes mu_n(i) = alpha(nu_n(i)) / bar_alpha_n on the update set, 0 elsewhere.
struct AsyncStepRecord {
  double bar_alpha = 0.0;
  Eigen::VectorXd mu;
};

// Counters must already include the current iteration's increments.
AsyncStepRecord async_step(const Schedule& schedule, const CounterVector& counters,
                           const std::vector<int>& update_set);

// Empirical sup of alpha([x n]) / alpha(n) over 2 <= n <= n_max, with
// [x n] = max(1, floor(x n)) to keep the schedule 1-indexed. A finite-horizon
// estimate of the ratio bound A_x, reported with the n achieving it.
struct RatioBound {
  double value = 0.0;
  long long at_n = 0;
};
RatioBound ratio_bound(const Schedule& schedule, double x, long long n_max);

// eta / A_eta: the empirical lower bound on the relative-step floor epsilon
// obtained from a minimum update proportion estimate eta. Diagnostic only.
double epsilon_lower_bound(const Schedule& schedule, double eta, long long n_max);

}  // namespace asadi
