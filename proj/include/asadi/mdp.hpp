#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "asadi/engine.hpp"
#include "asadi/mean_field.hpp"
#include "asadi/scheduler.hpp"
#include "asadi/two_timescale.hpp"

#include <json.hpp>

namespace asadi {

// Finite discounted MDP with a uniform action count per state. Transitions are
// stored per action: p[a](s, s'). Rewards are observed with zero-mean noise.
struct MdpModel {
  int num_states = 0;
  int num_actions = 0;
  double beta = 0.0;
  std::vector<Eigen::MatrixXd> p;  // one K x K row-stochastic matrix per action
  Eigen::MatrixXd rewards;         // K x A
  NoiseModel reward_noise = NoiseModel::gaussian(0.5, 4.0);

  // Checks row sums, beta in (0, 1), and that the state chain under any
  // epsilon-floored policy is aperiodic, irreducible and positive recurrent.
  void validate() const;

  double max_abs_reward() const;
  int pair_index(int s, int a) const { return s * num_actions + a; }

  static MdpModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static MdpModel load(const std::string& path);

  // Dense random model with strictly positive transition rows.
  static MdpModel random(int num_states, int num_actions, double beta,
                         double reward_lo, double reward_hi, std::uint64_t seed);
};

// A strategy pi over all states, stored pre-flooring; the behavior policy is
// its epsilon-greedy version.
struct Policy {
  Eigen::MatrixXd pi;  // K x A, row stochastic
  double epsilon_floor = 0.0;

  void validate(const MdpModel& model) const;
  Eigen::MatrixXd floored() const;  // rows pushed through epsilon_greedy

  static Policy uniform(const MdpModel& model, double epsilon_floor);
};

using QTable = Eigen::MatrixXd;  // K x A

// Exact policy evaluation: solves V = r_pi + beta P_pi V directly.
Eigen::VectorXd value_function(const MdpModel& model, const Policy& policy);

// Q^pi(s,a) = r(s,a) + beta sum_{s'} p[a](s,s') V^pi(s').
QTable q_values(const MdpModel& model, const Policy& policy);

// h(pi, Q)(s,a) = r(s,a) + beta sum_{s'} p[a](s,s') V(s'), V(s) = sum_a pi(s,a) Q(s,a).
// A beta-contraction in Q with fixed point Q^pi.
QTable bellman_h(const MdpModel& model, const Eigen::MatrixXd& pi, const QTable& q);

// Argmax action set within tie_tol of the row maximum; never empty.
std::vector<int> best_response(const Eigen::VectorXd& q_row, double tie_tol = 1e-9);

// pi(s,a) (1 - A eps) + eps. Requires eps in (0, 1/A).
Eigen::VectorXd epsilon_greedy(const Eigen::VectorXd& policy_row, double eps);

struct ValueIterationResult {
  Eigen::VectorXd v_star;
  QTable q_star;
  std::vector<std::vector<int>> optimal_actions;  // per state, tie tol 1e-9
  long long iterations = 0;
};
ValueIterationResult value_iteration(const MdpModel& model, double tol);

// K_{s,a}(pi) = Q^pi(s,a) - V^pi(s); policy-weighted row sums vanish.
Eigen::MatrixXd advantage(const MdpModel& model, const Policy& policy);

// W(pi) = sum_s [V*(s) - V^pi(s)], nonnegative, zero exactly at optima.
double lyapunov_W(const MdpModel& model, const Policy& policy,
                  const Eigen::VectorXd& v_star);

// d(sum_s V^pi(s)) / d pi(s,a) = c_s Q^pi(s,a) with c = (I - beta P_pi)^{-T} 1.
// The gradient of W is the negative of this, flattened state-major.
Eigen::MatrixXd policy_value_gradient(const MdpModel& model, const Policy& policy);

// Exact maximum over per-state omega_s in {eta, 1} and best-response vertices
// of <grad W(pi), omega (pi~ - pi)>; nonpositive when W is a valid Lyapunov
// function for the best-response inclusion.
double lyapunov_inner_product_max(const MdpModel& model, const Policy& policy,
                                  double eta);

// --- bindings to the generic machinery ---------------------------------------

// Drift field over flattened strategies: per state, (best-response vertex - pi_s).
// Vertices enumerate per-state argmax combinations (capped).
SetValuedField best_response_drift_field(const MdpModel& model);

// Single-valued field over flattened Q tables with a frozen pi: h(pi, Q) - Q.
SetValuedField q_tracking_field(const MdpModel& model, const Eigen::MatrixXd& pi);

// One block of A coordinates per state, matching the per-state update pattern.
std::vector<std::vector<int>> state_blocks(const MdpModel& model);

// Joint update chain over (s, a) pairs: the element for (s, a) updates the
// strategy at s (slow) and the Q entry (s, a) (fast).
JointFamily mdp_joint_family(const MdpModel& model);

// The same chain as an update family over K + K*A combined components, with
// kernel rows P((s,a) -> (s',a')) = p[a](s,s') pi^eps(s',a'), pi read from the
// flattened strategy passed as the kernel's iterate argument.
UpdateFamily mdp_combined_family(const MdpModel& model);
TransitionKernel mdp_joint_kernel(const MdpModel& model, double epsilon_floor);

// Oracle limit map for the fast timescale: flattened Q^pi as a function of pi.
FastLimitOracle q_value_oracle(const MdpModel& model);

Eigen::VectorXd flatten(const Eigen::MatrixXd& m);
Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int rows, int cols);

// --- the coupled learning algorithm ------------------------------------------

struct LearnerOptions {
  Schedule fast_schedule = Schedule::power(0.6);  // gamma, Q updates
  Schedule slow_schedule = Schedule::power(1.0);  // mu-hat, strategy updates
  double epsilon_floor = 0.05;
  bool freeze_policy = false;
  double tie_tol = 1e-9;
  TiePolicy tie_policy = TiePolicy::LowestIndex;
  double q_box_slack = 1.0;  // box is [-r_max/(1-beta) - slack, +...+ slack]
};

// Actor-critic learning on the MDP itself: at each iteration the chain visits
// one (s, a) pair; the Q entry updates toward R + beta V_n(s_next) with step
// gamma(phi(s,a)); the strategy row at s moves toward a best-response vertex
// of Q_n with step mu-hat(nu(s)). Actions are drawn epsilon-greedily.
class MdpLearner {
 public:
  MdpLearner(MdpModel model, Policy initial, LearnerOptions options, const Rng& root);

  void step();
  void run(long long steps);

  long long n() const { return n_; }
  const MdpModel& model() const { return model_; }
  const QTable& q() const { return q_; }
  const Policy& policy() const { return policy_; }
  const std::vector<long long>& state_counts() const { return nu_; }     // by state
  const std::vector<long long>& pair_counts() const { return phi_; }     // by pair index

  // min over (s, a) of phi_n(s,a) / n.
  double min_pair_fraction() const;
  // bar_alpha_n / bar_gamma_n of the latest transition (0 while frozen or at n = 0).
  double last_step_ratio() const { return last_ratio_; }
  long long clamp_events() const { return clamp_events_; }
  long long renormalizations() const { return renormalizations_; }
  int current_state() const { return s_cur_; }

 private:
  int draw_action(int s) const;
  int draw_next_state(int s, int a) const;

  MdpModel model_;
  Policy policy_;
  LearnerOptions opt_;
  QTable q_;
  std::vector<long long> nu_, phi_;
  long long n_ = 0;
  int s_cur_ = 0, a_cur_ = 0, s_next_ = 0;
  double q_lo_ = 0.0, q_hi_ = 0.0;
  double last_ratio_ = 0.0;
  long long clamp_events_ = 0;
  long long renormalizations_ = 0;
  mutable Rng env_rng_, reward_rng_, tie_rng_;
};

}  // namespace asadi
