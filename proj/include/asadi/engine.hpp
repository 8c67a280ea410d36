#pragma once

#include <Eigen/Core>
#include <functional>
#include <ostream>
#include <vector>

#include "asadi/mean_field.hpp"
#include "asadi/rng.hpp"
#include "asadi/scheduler.hpp"
#include "asadi/stepsize.hpp"

namespace asadi {

// Martingale noise V_n: zero-mean draws, independent across components unless
// configured otherwise. Gaussian noise may be truncated at a multiple of sigma.
struct NoiseModel {
  enum class Kind { Zero, Gaussian, BoundedUniform };

  Kind kind = Kind::Zero;
  double sigma = 0.0;             // gaussian standard deviation
  double bound = 0.0;             // uniform on [-bound, bound]
  double truncate_sigmas = 0.0;   // 0 = untruncated
  bool independent_components = true;

  static NoiseModel zero();
  static NoiseModel gaussian(double sigma, double truncate_sigmas = 0.0);
  static NoiseModel bounded_uniform(double bound);

  double draw_scalar(Rng& rng) const;
  Eigen::VectorXd draw(int k, Rng& rng) const;
};

// Bias d_n: a deterministic sequence, bounded and converging to zero.
struct BiasModel {
  std::function<Eigen::VectorXd(long long n, int k)> value;  // null = zero
  double envelope = 0.0;  // declared sup bound, used by diagnostics

  static BiasModel zero();
  static BiasModel decay(double c, double rate);  // c * n^{-rate} on every coordinate

  Eigen::VectorXd eval(long long n, int k) const;
};

// The compact set C of (A1)(a), as per-coordinate bounds.
struct Box {
  Eigen::VectorXd lo, hi;

  static Box cube(int k, double half_width);
  bool contains(const Eigen::VectorXd& x) const;
};

// One logged transition. Row k (k >= 1) holds the state after k transitions
// together with the step quantities of transition k: the updated components,
// bar_alpha_k, mu_k, the noise V_k and bias d_k, and the mean-field selection
// f_{k-1} made at the previous state that this transition realized. Row 0 is
// the initial state.
struct TransitionRecord {
  long long n = 0;
  double tau_bar = 0.0;
  Eigen::VectorXd x;
  std::vector<int> update_set;
  double alpha_bar = 0.0;
  Eigen::VectorXd mu;     // per component
  Eigen::VectorXd f;      // per coordinate
  Eigen::VectorXd noise;  // per coordinate
  Eigen::VectorXd bias;   // per coordinate
};

struct TrajectoryLog {
  std::vector<std::vector<int>> blocks;  // component -> coordinates
  std::vector<int> component_of;         // coordinate -> component
  std::vector<TransitionRecord> rows;

  int num_components() const { return static_cast<int>(blocks.size()); }
  int dimension() const { return static_cast<int>(component_of.size()); }
  bool is_dense() const;  // rows at every iteration index
};

struct EngineState {
  long long n = 0;
  Eigen::VectorXd x;
  CounterVector counters;
  int current_subset = 0;
  double tau_bar = 0.0;

  explicit EngineState(int num_components) : counters(num_components) {}
};

struct EngineConfig {
  SetValuedField field;
  Schedule schedule = Schedule::power(1.0);
  UpdateFamily family;
  TransitionKernel kernel;
  NoiseModel noise;
  BiasModel bias = BiasModel::zero();
  Box box;
  // Component -> coordinates owned by it; empty means one coordinate per
  // component. A component's coordinates share its counter and step size.
  std::vector<std::vector<int>> blocks;
  TiePolicy tie_policy = TiePolicy::LowestIndex;
  int initial_subset = 0;
  long long log_thin = 1;
};

// The asynchronous stochastic approximation iteration
//   x_{n+1}(i) = x_n(i) + alpha(nu_{n+1}(i)) 1{i in I_{n+1}} [f_n(i) + V_{n+1}(i) + d_{n+1}(i)]
// with the update set drawn from the controlled Markov scheduler.
class Engine {
 public:
  Engine(EngineConfig config, const Eigen::VectorXd& x0, const Rng& root);

  // One transition. Throws AssumptionError("(A1)(a)") if the iterate leaves the box.
  void iterate();
  void run(long long steps);

  const EngineState& state() const { return state_; }
  const TrajectoryLog& log() const { return log_; }

 private:
  EngineConfig cfg_;
  EngineState state_;
  TrajectoryLog log_;
  Rng scheduler_rng_, noise_rng_, tie_rng_;
};

// Piecewise-linear interpolation of the logged trajectory on the tau_bar clock:
//   x_bar(tau_k + s) = x_k + s (x_{k+1} - x_k) / bar_alpha_{k+1}.
Eigen::VectorXd interpolate(const TrajectoryLog& log, double t);

// m_bar(t): the largest logged iteration index k with tau_bar_k <= t.
long long m_bar(const TrajectoryLog& log, double t);

// CSV with header n,tau_bar,x_1..x_D,upd_1..upd_C,alpha_bar.
void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out);

}  // namespace asadi
