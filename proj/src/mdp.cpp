#include "asadi/mdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "asadi/errors.hpp"

namespace asadi {

using nlohmann::json;

void MdpModel::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("mdp model: empty state or action set");
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("mdp model: discount must lie strictly in (0, 1)");
  if (static_cast<int>(p.size()) != num_actions)
    throw std::invalid_argument("mdp model: one transition matrix per action required");
  if (rewards.rows() != num_states || rewards.cols() != num_actions)
    throw std::invalid_argument("mdp model: reward table shape mismatch");

  for (int a = 0; a < num_actions; ++a) {
    const auto& m = p[static_cast<std::size_t>(a)];
    if (m.rows() != num_states || m.cols() != num_states)
      throw std::invalid_argument("mdp model: transition matrix shape mismatch");
    for (int s = 0; s < num_states; ++s) {
      if (m.row(s).minCoeff() < 0.0)
        throw std::invalid_argument("mdp model: negative transition probability");
      if (std::abs(m.row(s).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("mdp model: transition row does not sum to 1");
    }
  }

  // Under any epsilon-floored policy every action fires with positive
  // probability, so the state chain's support is the union over actions.
  Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(num_states, num_states);
  for (const auto& m : p) mix += m / static_cast<double>(num_actions);
  try {
    validate_chain(TransitionKernel::constant(mix), UpdateFamily::singletons(num_states),
                   Eigen::VectorXd::Zero(1));
  } catch (const AssumptionError& e) {
    throw AssumptionError("(B4)(b)",
                          std::string("mdp state chain under epsilon-floored "
                                      "policies: ") +
                              e.what());
  }
}

double MdpModel::max_abs_reward() const { return rewards.cwiseAbs().maxCoeff(); }

MdpModel MdpModel::from_json(const json& j) {
  MdpModel m;
  m.num_states = j.at("states").get<int>();
  m.num_actions = j.at("actions").get<int>();
  m.beta = j.at("beta").get<double>();

  const auto& tr = j.at("transitions");
  if (static_cast<int>(tr.size()) != m.num_states)
    throw std::invalid_argument("mdp json: transitions must be indexed [s][a][s']");
  m.p.assign(static_cast<std::size_t>(m.num_actions),
             Eigen::MatrixXd::Zero(m.num_states, m.num_states));
  for (int s = 0; s < m.num_states; ++s) {
    const auto& row_s = tr.at(static_cast<std::size_t>(s));
    if (static_cast<int>(row_s.size()) != m.num_actions)
      throw std::invalid_argument("mdp json: transitions must be indexed [s][a][s']");
    for (int a = 0; a < m.num_actions; ++a) {
      const auto& row = row_s.at(static_cast<std::size_t>(a));
      if (static_cast<int>(row.size()) != m.num_states)
        throw std::invalid_argument("mdp json: transition row length mismatch");
      for (int s2 = 0; s2 < m.num_states; ++s2)
        m.p[static_cast<std::size_t>(a)](s, s2) =
            row.at(static_cast<std::size_t>(s2)).get<double>();
    }
  }

  const auto& rw = j.at("rewards");
  m.rewards = Eigen::MatrixXd::Zero(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      m.rewards(s, a) = rw.at(static_cast<std::size_t>(s))
                            .at(static_cast<std::size_t>(a))
                            .get<double>();

  if (j.contains("reward_noise")) {
    const auto& nz = j.at("reward_noise");
    const std::string kind = nz.value("kind", "gaussian");
    if (kind == "zero")
      m.reward_noise = NoiseModel::zero();
    else if (kind == "gaussian")
      m.reward_noise = NoiseModel::gaussian(nz.value("sigma", 0.5),
                                            nz.value("truncate_sigmas", 4.0));
    else if (kind == "bounded-uniform")
      m.reward_noise = NoiseModel::bounded_uniform(nz.value("bound", 0.5));
    else
      throw std::invalid_argument("mdp json: unknown reward noise kind " + kind);
  }
  m.validate();
  return m;
}

json MdpModel::to_json() const {
  json tr = json::array();
  for (int s = 0; s < num_states; ++s) {
    json by_action = json::array();
    for (int a = 0; a < num_actions; ++a) {
      json row = json::array();
      for (int s2 = 0; s2 < num_states; ++s2)
        row.push_back(p[static_cast<std::size_t>(a)](s, s2));
      by_action.push_back(std::move(row));
    }
    tr.push_back(std::move(by_action));
  }
  json rw = json::array();
  for (int s = 0; s < num_states; ++s) {
    json row = json::array();
    for (int a = 0; a < num_actions; ++a) row.push_back(rewards(s, a));
    rw.push_back(std::move(row));
  }
  json nz;
  switch (reward_noise.kind) {
    case NoiseModel::Kind::Zero:
      nz = {{"kind", "zero"}};
      break;
    case NoiseModel::Kind::Gaussian:
      nz = {{"kind", "gaussian"},
            {"sigma", reward_noise.sigma},
            {"truncate_sigmas", reward_noise.truncate_sigmas}};
      break;
    case NoiseModel::Kind::BoundedUniform:
      nz = {{"kind", "bounded-uniform"}, {"bound", reward_noise.bound}};
      break;
  }
  return json{{"states", num_states}, {"actions", num_actions}, {"beta", beta},
              {"transitions", tr},    {"rewards", rw},          {"reward_noise", nz}};
}

MdpModel MdpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mdp model file: " + path);
  json j;
  in >> j;
  return from_json(j);
}

MdpModel MdpModel::random(int num_states, int num_actions, double beta,
                          double reward_lo, double reward_hi, std::uint64_t seed) {
  if (reward_hi < reward_lo)
    throw std::invalid_argument("mdp random: empty reward range");
  Rng rng = Rng(seed).stream("model");
  MdpModel m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.beta = beta;
  m.p.assign(static_cast<std::size_t>(num_actions),
             Eigen::MatrixXd::Zero(num_states, num_states));
  for (int a = 0; a < num_actions; ++a)
    for (int s = 0; s < num_states; ++s) {
      Eigen::VectorXd row(num_states);
      for (int s2 = 0; s2 < num_states; ++s2) row[s2] = 0.05 + rng.uniform();
      m.p[static_cast<std::size_t>(a)].row(s) = (row / row.sum()).transpose();
    }
  m.rewards = Eigen::MatrixXd::Zero(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a)
      m.rewards(s, a) = rng.uniform(reward_lo, reward_hi);
  m.validate();
  return m;
}

void Policy::validate(const MdpModel& model) const {
  if (pi.rows() != model.num_states || pi.cols() != model.num_actions)
    throw std::invalid_argument("policy: shape mismatch");
  for (int s = 0; s < pi.rows(); ++s) {
    if (pi.row(s).minCoeff() < -1e-12)
      throw std::invalid_argument("policy: negative action probability");
    if (std::abs(pi.row(s).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("policy: row does not sum to 1");
  }
  if (epsilon_floor != 0.0) {
    const double limit = 1.0 / static_cast<double>(model.num_actions);
    if (!(epsilon_floor > 0.0 && epsilon_floor < limit))
      throw std::invalid_argument("policy: epsilon floor must lie in (0, 1/A)");
  }
}

Eigen::MatrixXd Policy::floored() const {
  Eigen::MatrixXd out = pi;
  if (epsilon_floor == 0.0) return out;
  for (int s = 0; s < pi.rows(); ++s)
    out.row(s) = epsilon_greedy(pi.row(s), epsilon_floor).transpose();
  return out;
}

Policy Policy::uniform(const MdpModel& model, double epsilon_floor) {
  Policy pol;
  pol.pi = Eigen::MatrixXd::Constant(model.num_states, model.num_actions,
                                     1.0 / model.num_actions);
  pol.epsilon_floor = epsilon_floor;
  return pol;
}

namespace {

Eigen::MatrixXd policy_transition(const MdpModel& model, const Eigen::MatrixXd& pi) {
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(model.num_states, model.num_states);
  for (int a = 0; a < model.num_actions; ++a)
    p_pi += pi.col(a).asDiagonal() * model.p[static_cast<std::size_t>(a)];
  return p_pi;
}

}  // namespace

Eigen::VectorXd value_function(const MdpModel& model, const Policy& policy) {
  policy.validate(model);
  const Eigen::MatrixXd p_pi = policy_transition(model, policy.pi);
  const Eigen::VectorXd r_pi = policy.pi.cwiseProduct(model.rewards).rowwise().sum();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(model.num_states, model.num_states) - model.beta * p_pi;
  const Eigen::VectorXd v = a.partialPivLu().solve(r_pi);
  const double residual = (v - r_pi - model.beta * p_pi * v).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10)
    throw std::runtime_error("policy evaluation solve failed: residual " +
                             std::to_string(residual));
  return v;
}

QTable q_values(const MdpModel& model, const Policy& policy) {
  const Eigen::VectorXd v = value_function(model, policy);
  QTable q(model.num_states, model.num_actions);
  for (int a = 0; a < model.num_actions; ++a)
    q.col(a) = model.rewards.col(a) + model.beta * model.p[static_cast<std::size_t>(a)] * v;
  return q;
}

QTable bellman_h(const MdpModel& model, const Eigen::MatrixXd& pi, const QTable& q) {
  const Eigen::VectorXd v = pi.cwiseProduct(q).rowwise().sum();
  QTable h(model.num_states, model.num_actions);
  for (int a = 0; a < model.num_actions; ++a)
    h.col(a) = model.rewards.col(a) + model.beta * model.p[static_cast<std::size_t>(a)] * v;
  return h;
}

std::vector<int> best_response(const Eigen::VectorXd& q_row, double tie_tol) {
  if (q_row.size() == 0) throw std::invalid_argument("best_response: empty row");
  if (!q_row.allFinite())
    throw std::invalid_argument("best_response: non-finite action values");
  const double top = q_row.maxCoeff();
  std::vector<int> out;
  for (int a = 0; a < q_row.size(); ++a)
    if (q_row[a] >= top - tie_tol) out.push_back(a);
  return out;
}

Eigen::VectorXd epsilon_greedy(const Eigen::VectorXd& policy_row, double eps) {
  const int a_count = static_cast<int>(policy_row.size());
  if (a_count == 0) throw std::invalid_argument("epsilon_greedy: empty row");
  if (!(eps > 0.0 && eps < 1.0 / a_count))
    throw std::invalid_argument("epsilon_greedy: eps must lie in (0, 1/A)");
  if (std::abs(policy_row.sum() - 1.0) > 1e-9 || policy_row.minCoeff() < -1e-12)
    throw std::invalid_argument("epsilon_greedy: row is not a distribution");
  return policy_row * (1.0 - a_count * eps) + Eigen::VectorXd::Constant(a_count, eps);
}

ValueIterationResult value_iteration(const MdpModel& model, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("value_iteration: tol must be positive");
  ValueIterationResult res;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(model.num_states);
  QTable q(model.num_states, model.num_actions);
  for (long long it = 0;; ++it) {
    for (int a = 0; a < model.num_actions; ++a)
      q.col(a) =
          model.rewards.col(a) + model.beta * model.p[static_cast<std::size_t>(a)] * v;
    const Eigen::VectorXd tv = q.rowwise().maxCoeff();
    const double residual = (tv - v).lpNorm<Eigen::Infinity>();
    v = tv;
    if (residual <= tol) {
      res.iterations = it + 1;
      break;
    }
    if (it > 100000000)
      throw std::runtime_error("value_iteration failed to contract");
  }
  res.v_star = v;
  for (int a = 0; a < model.num_actions; ++a)
    q.col(a) =
        model.rewards.col(a) + model.beta * model.p[static_cast<std::size_t>(a)] * v;
  res.q_star = q;
  for (int s = 0; s < model.num_states; ++s)
    res.optimal_actions.push_back(best_response(q.row(s), 1e-9));
  return res;
}

Eigen::MatrixXd advantage(const MdpModel& model, const Policy& policy) {
  const Eigen::VectorXd v = value_function(model, policy);
  QTable q = q_values(model, policy);
  q.colwise() -= v;
  return q;
}

double lyapunov_W(const MdpModel& model, const Policy& policy,
                  const Eigen::VectorXd& v_star) {
  if (v_star.size() != model.num_states)
    throw std::invalid_argument("lyapunov_W: reference value dimension mismatch");
  return (v_star - value_function(model, policy)).sum();
}

Eigen::MatrixXd policy_value_gradient(const MdpModel& model, const Policy& policy) {
  const QTable q = q_values(model, policy);
  const Eigen::MatrixXd p_pi = policy_transition(model, policy.pi);
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(model.num_states, model.num_states) - model.beta * p_pi;
  const Eigen::VectorXd c =
      a.transpose().partialPivLu().solve(Eigen::VectorXd::Ones(model.num_states));
  return c.asDiagonal() * q;
}

double lyapunov_inner_product_max(const MdpModel& model, const Policy& policy,
                                  double eta) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::invalid_argument("lyapunov_inner_product_max: eta must lie in (0, 1]");
  const QTable q = q_values(model, policy);
  const Eigen::MatrixXd grad_v_sum = policy_value_gradient(model, policy);

  // Per state: <grad W_s, e_a* - pi_s> is the same for every argmax vertex and
  // linear in the per-state omega, so the corner maximum is exact.
  double total = 0.0;
  for (int s = 0; s < model.num_states; ++s) {
    const int a_star = best_response(q.row(s), 1e-9).front();
    double inner = -grad_v_sum(s, a_star);
    for (int a = 0; a < model.num_actions; ++a)
      inner += policy.pi(s, a) * grad_v_sum(s, a);
    total += inner < 0.0 ? eta * inner : inner;
  }
  return total;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.rows() * m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v[r * m.cols() + c] = m(r, c);
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int rows, int cols) {
  if (v.size() != rows * cols) throw std::invalid_argument("unflatten: size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
  return m;
}

SetValuedField best_response_drift_field(const MdpModel& model) {
  const int k = model.num_states;
  const int a_count = model.num_actions;
  MdpModel m = model;

  SetValuedField field;
  field.dimension = k * a_count;
  field.growth_constant = std::sqrt(2.0 * k) + 2.0;
  field.select_fn = [m, k, a_count](const Eigen::VectorXd& x, TiePolicy policy,
                                    Rng* rng) -> Eigen::VectorXd {
    Policy pol;
    pol.pi = unflatten(x, k, a_count);
    const QTable q = q_values(m, pol);
    Eigen::MatrixXd drift = -pol.pi;
    for (int s = 0; s < k; ++s) {
      const auto br = best_response(q.row(s), 1e-9);
      const int pick = policy == TiePolicy::RandomVertex && br.size() > 1
                           ? br[static_cast<std::size_t>(
                                 rng->uniform_int(static_cast<long long>(br.size())))]
                           : br.front();
      drift(s, pick) += 1.0;
    }
    return flatten(drift);
  };
  field.vertices_fn = [m, k, a_count](const Eigen::VectorXd& x) {
    Policy pol;
    pol.pi = unflatten(x, k, a_count);
    const QTable q = q_values(m, pol);
    std::vector<std::vector<int>> br;
    std::size_t combos = 1;
    for (int s = 0; s < k; ++s) {
      br.push_back(best_response(q.row(s), 1e-9));
      combos *= br.back().size();
    }
    combos = std::min<std::size_t>(combos, 256);
    std::vector<Eigen::VectorXd> verts;
    for (std::size_t idx = 0; idx < combos; ++idx) {
      Eigen::MatrixXd drift = -pol.pi;
      std::size_t rest = idx;
      for (int s = 0; s < k; ++s) {
        const auto& choices = br[static_cast<std::size_t>(s)];
        drift(s, choices[rest % choices.size()]) += 1.0;
        rest /= choices.size();
      }
      verts.push_back(flatten(drift));
    }
    return verts;
  };
  return field;
}

SetValuedField q_tracking_field(const MdpModel& model, const Eigen::MatrixXd& pi) {
  const int k = model.num_states;
  const int a_count = model.num_actions;
  MdpModel m = model;
  Eigen::MatrixXd pi_fixed = pi;

  SetValuedField field;
  field.dimension = k * a_count;
  field.growth_constant =
      std::sqrt(static_cast<double>(k * a_count)) * (model.max_abs_reward() + 2.0);
  field.select_fn = [m, pi_fixed, k, a_count](const Eigen::VectorXd& x, TiePolicy,
                                              Rng*) {
    const QTable q = unflatten(x, k, a_count);
    return Eigen::VectorXd(flatten(bellman_h(m, pi_fixed, q) - q));
  };
  field.vertices_fn = [m, pi_fixed, k, a_count](const Eigen::VectorXd& x) {
    const QTable q = unflatten(x, k, a_count);
    return std::vector<Eigen::VectorXd>{flatten(bellman_h(m, pi_fixed, q) - q)};
  };
  return field;
}

std::vector<std::vector<int>> state_blocks(const MdpModel& model) {
  std::vector<std::vector<int>> blocks;
  for (int s = 0; s < model.num_states; ++s) {
    std::vector<int> block;
    for (int a = 0; a < model.num_actions; ++a) block.push_back(model.pair_index(s, a));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

JointFamily mdp_joint_family(const MdpModel& model) {
  std::vector<JointElement> elements;
  for (int s = 0; s < model.num_states; ++s)
    for (int a = 0; a < model.num_actions; ++a)
      elements.push_back({{s}, {model.pair_index(s, a)}});
  return JointFamily::make(model.num_states, model.num_states * model.num_actions,
                           std::move(elements));
}

UpdateFamily mdp_combined_family(const MdpModel& model) {
  return mdp_joint_family(model).combined();
}

TransitionKernel mdp_joint_kernel(const MdpModel& model, double epsilon_floor) {
  const int k = model.num_states;
  const int a_count = model.num_actions;
  if (!(epsilon_floor > 0.0 && epsilon_floor < 1.0 / a_count))
    throw std::invalid_argument("mdp joint kernel: epsilon floor must lie in (0, 1/A)");
  MdpModel m = model;

  TransitionKernel kernel;
  // The iterate argument carries the flattened strategy in its leading K*A
  // coordinates (a coupled iterate may append the Q table after them).
  kernel.probability_of = [m, k, a_count, epsilon_floor](
                              int current, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (x.size() < k * a_count)
      throw std::invalid_argument("mdp joint kernel: iterate too short");
    const Eigen::MatrixXd pi = unflatten(x.head(k * a_count), k, a_count);
    const int s = current / a_count;
    const int a = current % a_count;
    Eigen::VectorXd row(k * a_count);
    for (int s2 = 0; s2 < k; ++s2) {
      const Eigen::VectorXd greedy = epsilon_greedy(pi.row(s2), epsilon_floor);
      for (int a2 = 0; a2 < a_count; ++a2)
        row[s2 * a_count + a2] = m.p[static_cast<std::size_t>(a)](s, s2) * greedy[a2];
    }
    return row;
  };
  return kernel;
}

FastLimitOracle q_value_oracle(const MdpModel& model) {
  const int k = model.num_states;
  const int a_count = model.num_actions;
  MdpModel m = model;
  FastLimitOracle oracle;
  oracle.lambda = [m, k, a_count](const Eigen::VectorXd& x) {
    Policy pol;
    pol.pi = unflatten(x.head(k * a_count), k, a_count);
    return Eigen::VectorXd(flatten(q_values(m, pol)));
  };
  return oracle;
}

MdpLearner::MdpLearner(MdpModel model, Policy initial, LearnerOptions options,
                       const Rng& root)
    : model_(std::move(model)),
      policy_(std::move(initial)),
      opt_(options),
      env_rng_(root.stream("env")),
      reward_rng_(root.stream("reward")),
      tie_rng_(root.stream("tie")) {
  model_.validate();
  policy_.epsilon_floor = opt_.epsilon_floor;
  policy_.validate(model_);
  if (!opt_.freeze_policy)
    check_schedule_pairing(opt_.slow_schedule, opt_.fast_schedule);

  q_ = QTable::Zero(model_.num_states, model_.num_actions);
  nu_.assign(static_cast<std::size_t>(model_.num_states), 0);
  phi_.assign(static_cast<std::size_t>(model_.num_states * model_.num_actions), 0);
  q_hi_ = model_.max_abs_reward() / (1.0 - model_.beta) + opt_.q_box_slack;
  q_lo_ = -q_hi_;

  s_cur_ = static_cast<int>(env_rng_.uniform_int(model_.num_states));
  a_cur_ = draw_action(s_cur_);
  s_next_ = draw_next_state(s_cur_, a_cur_);
}

int MdpLearner::draw_action(int s) const {
  const Eigen::VectorXd row = epsilon_greedy(policy_.pi.row(s), opt_.epsilon_floor);
  const double u = env_rng_.uniform();
  double acc = 0.0;
  for (int a = 0; a < row.size(); ++a) {
    acc += row[a];
    if (u < acc) return a;
  }
  return static_cast<int>(row.size()) - 1;
}

int MdpLearner::draw_next_state(int s, int a) const {
  const auto& row = model_.p[static_cast<std::size_t>(a)];
  const double u = env_rng_.uniform();
  double acc = 0.0;
  for (int s2 = 0; s2 < model_.num_states; ++s2) {
    acc += row(s, s2);
    if (u < acc) return s2;
  }
  return model_.num_states - 1;
}

void MdpLearner::step() {
  const int s = s_cur_;
  const int a = a_cur_;
  const int pair = model_.pair_index(s, a);

  ++nu_[static_cast<std::size_t>(s)];
  ++phi_[static_cast<std::size_t>(pair)];

  const double reward =
      model_.rewards(s, a) + model_.reward_noise.draw_scalar(reward_rng_);
  // V_n(s_{n+2}) under the pre-update strategy and table.
  const double v_next = policy_.pi.row(s_next_).dot(q_.row(s_next_));
  const Eigen::VectorXd q_row_before = q_.row(s);

  const double gamma =
      opt_.fast_schedule.eval(phi_[static_cast<std::size_t>(pair)]);
  q_(s, a) += gamma * (reward + model_.beta * v_next - q_(s, a));
  if (q_(s, a) < q_lo_ || q_(s, a) > q_hi_) {
    q_(s, a) = std::clamp(q_(s, a), q_lo_, q_hi_);
    ++clamp_events_;
  }

  if (!opt_.freeze_policy) {
    const auto br = best_response(q_row_before, opt_.tie_tol);
    const int target = opt_.tie_policy == TiePolicy::RandomVertex && br.size() > 1
                           ? br[static_cast<std::size_t>(tie_rng_.uniform_int(
                                 static_cast<long long>(br.size())))]
                           : br.front();
    const double mu = opt_.slow_schedule.eval(nu_[static_cast<std::size_t>(s)]);
    Eigen::VectorXd row = policy_.pi.row(s);
    row *= 1.0 - mu;
    row[target] += mu;
    const double sum = row.sum();
    if (std::abs(sum - 1.0) > 1e-9) {
      row /= sum;
      ++renormalizations_;
    }
    policy_.pi.row(s) = row.transpose();
    last_ratio_ = mu / gamma;
  } else {
    last_ratio_ = 0.0;
  }

  // The next pair is drawn from the post-update strategy.
  const int a2 = draw_action(s_next_);
  const int s3 = draw_next_state(s_next_, a2);
  s_cur_ = s_next_;
  a_cur_ = a2;
  s_next_ = s3;
  ++n_;
}

void MdpLearner::run(long long steps) {
  for (long long k = 0; k < steps; ++k) step();
}

double MdpLearner::min_pair_fraction() const {
  if (n_ == 0) return 0.0;
  long long lowest = phi_.front();
  for (long long c : phi_) lowest = std::min(lowest, c);
  return static_cast<double>(lowest) / static_cast<double>(n_);
}

}  // namespace asadi
