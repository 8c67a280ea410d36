#pragma once

#include <Eigen/Core>
#include <functional>
#include <ostream>
#include <vector>

#include "asadi/engine.hpp"

namespace asadi {

// One element of the combined family: the slow components (x side) and fast
// components (y side) updated together at an iteration. Both parts are
// non-empty so the asynchronous step sizes are defined every iteration.
struct JointElement {
  std::vector<int> slow;
  std::vector<int> fast;
};

struct JointFamily {
  int num_slow = 0;
  int num_fast = 0;
  std::vector<JointElement> elements;

  static JointFamily make(int num_slow, int num_fast, std::vector<JointElement> elements);

  int size() const { return static_cast<int>(elements.size()); }
  // The same family viewed over the combined component space (slow components
  // first, fast components offset by num_slow), for scheduler analytics.
  UpdateFamily combined() const;
};

struct CoupledConfig {
  SetValuedField slow_field;  // F(x, y), evaluated at z = (x; y), values in R^{dim x}
  SetValuedField fast_field;  // G(x, y), values in R^{dim y}
  Schedule slow_schedule = Schedule::power(1.0);
  Schedule fast_schedule = Schedule::power(0.6);
  JointFamily family;
  TransitionKernel kernel;  // over joint element indices, evaluated at z
  NoiseModel slow_noise, fast_noise;
  BiasModel slow_bias = BiasModel::zero();
  BiasModel fast_bias = BiasModel::zero();
  Box slow_box, fast_box;
  std::vector<std::vector<int>> slow_blocks, fast_blocks;  // empty = singletons
  TiePolicy tie_policy = TiePolicy::LowestIndex;
  int initial_element = 0;
  long long log_thin = 1;
};

// Rejects schedule pairs whose deterministic ratio alpha(n)/gamma(n) does not
// vanish, per (B2)(c). For the built-in families this is an exponent ordering.
void check_schedule_pairing(const Schedule& slow, const Schedule& fast);

// The coupled asynchronous process: per iteration one joint element is drawn;
// the slow iterate updates on its slow part with alpha(nu), the fast iterate
// on its fast part with gamma(phi). Both halves keep full transition logs on
// their own clocks, plus the step-size ratio bar_alpha_n / bar_gamma_n.
class CoupledEngine {
 public:
  CoupledEngine(CoupledConfig config, const Eigen::VectorXd& x0,
                const Eigen::VectorXd& y0, const Rng& root);

  void iterate();  // throws AssumptionError("(B1)(a)") when a box is left
  void run(long long steps);

  long long n() const { return n_; }
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  const CounterVector& slow_counters() const { return nu_; }
  const CounterVector& fast_counters() const { return phi_; }
  double tau_bar() const { return tau_bar_; }
  double rho_bar() const { return rho_bar_; }

  const TrajectoryLog& slow_log() const { return slow_log_; }
  const TrajectoryLog& fast_log() const { return fast_log_; }
  const std::vector<double>& step_ratio_log() const { return ratio_log_; }

 private:
  Eigen::VectorXd joint() const;

  CoupledConfig cfg_;
  long long n_ = 0;
  Eigen::VectorXd x_, y_;
  CounterVector nu_, phi_;
  int current_element_ = 0;
  double tau_bar_ = 0.0, rho_bar_ = 0.0;
  TrajectoryLog slow_log_, fast_log_;
  std::vector<double> ratio_log_;
  Rng scheduler_rng_, slow_noise_rng_, fast_noise_rng_, tie_rng_;
};

// A known fast-timescale limit map Lambda(x) used for tracking diagnostics.
struct FastLimitOracle {
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x)> lambda;
  double tolerance = 0.0;
};

// ||y - Lambda(x)||_inf.
double tracking_error(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const FastLimitOracle& oracle);

// CSV with header n,tau_bar,rho_bar,x_1..,y_1..,ratio.
void write_coupled_csv(const TrajectoryLog& slow, const TrajectoryLog& fast,
                       const std::vector<double>& ratio, std::ostream& out);

}  // namespace asadi
