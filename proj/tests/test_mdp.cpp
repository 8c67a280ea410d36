#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "asadi/errors.hpp"
#include "asadi/inclusion.hpp"
#include "asadi/mdp.hpp"

using namespace asadi;

namespace {

// 1 state, A actions, rewards r, discount beta.
MdpModel single_state(const std::vector<double>& r, double beta) {
  MdpModel m;
  m.num_states = 1;
  m.num_actions = static_cast<int>(r.size());
  m.beta = beta;
  m.p.assign(r.size(), Eigen::MatrixXd::Ones(1, 1));
  m.rewards = Eigen::MatrixXd::Zero(1, m.num_actions);
  for (int a = 0; a < m.num_actions; ++a) m.rewards(0, a) = r[static_cast<std::size_t>(a)];
  m.reward_noise = NoiseModel::zero();
  return m;
}

// Two states cycling deterministically, one action. The state chain is
// periodic, so this model is built directly; discounted evaluation is still
// perfectly defined.
MdpModel two_state_cycle() {
  MdpModel m;
  m.num_states = 2;
  m.num_actions = 1;
  m.beta = 0.9;
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  m.p = {p};
  m.rewards = Eigen::MatrixXd::Zero(2, 1);
  m.rewards(0, 0) = 1.0;
  m.reward_noise = NoiseModel::zero();
  return m;
}

Eigen::MatrixXd random_strategy(const MdpModel& m, Rng& rng) {
  Eigen::MatrixXd pi(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s) {
    Eigen::VectorXd row(m.num_actions);
    for (int a = 0; a < m.num_actions; ++a) row[a] = -std::log(1.0 - rng.uniform());
    pi.row(s) = (row / row.sum()).transpose();
  }
  return pi;
}

// Independent evaluation oracle used for gradient checks: solves the linear
// system for arbitrary (not necessarily stochastic) pi without validation.
Eigen::VectorXd value_oracle(const MdpModel& m, const Eigen::MatrixXd& pi) {
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(m.num_states, m.num_states);
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(m.num_states);
  for (int a = 0; a < m.num_actions; ++a) {
    p_pi += pi.col(a).asDiagonal() * m.p[static_cast<std::size_t>(a)];
    r_pi += pi.col(a).cwiseProduct(m.rewards.col(a));
  }
  const Eigen::MatrixXd sys =
      Eigen::MatrixXd::Identity(m.num_states, m.num_states) - m.beta * p_pi;
  return sys.partialPivLu().solve(r_pi);
}

}  // namespace

TEST_CASE("value function closed forms and residual contract") {
  const MdpModel tiny = single_state({1.0}, 0.5);
  const Policy pol = Policy::uniform(tiny, 0.0);
  CHECK(value_function(tiny, pol)[0] == doctest::Approx(2.0));

  const MdpModel cycle = two_state_cycle();
  const Eigen::VectorXd v = value_function(cycle, Policy::uniform(cycle, 0.0));
  CHECK(v[0] == doctest::Approx(1.0 / 0.19));
  CHECK(v[1] == doctest::Approx(0.9 / 0.19));

  Rng rng(1);
  for (int trial = 0; trial < 25; ++trial) {
    const MdpModel m = MdpModel::random(2 + trial % 4, 2 + trial % 2, 0.5 + 0.4 * rng.uniform(),
                                        0.0, 1.0, 1000 + trial);
    Policy pol_r = Policy::uniform(m, 0.0);
    pol_r.pi = random_strategy(m, rng);
    const Eigen::VectorXd vr = value_function(m, pol_r);
    // Bellman residual re-derived by hand.
    for (int s = 0; s < m.num_states; ++s) {
      double rhs = 0.0;
      for (int a = 0; a < m.num_actions; ++a)
        rhs += pol_r.pi(s, a) *
               (m.rewards(s, a) + m.beta * m.p[static_cast<std::size_t>(a)].row(s).dot(vr));
      CHECK(std::abs(vr[s] - rhs) <= 1e-10);
    }
  }
}

TEST_CASE("action values are consistent with the value function") {
  const MdpModel tiny = single_state({1.0}, 0.5);
  CHECK(q_values(tiny, Policy::uniform(tiny, 0.0))(0, 0) == doctest::Approx(2.0));

  // Mirrored actions give identical Q columns.
  MdpModel twin = single_state({0.7, 0.7}, 0.5);
  const QTable q_twin = q_values(twin, Policy::uniform(twin, 0.0));
  CHECK(q_twin(0, 0) == doctest::Approx(q_twin(0, 1)));

  Rng rng(2);
  const MdpModel m = MdpModel::random(3, 2, 0.85, 0.0, 1.0, 7);
  Policy pol = Policy::uniform(m, 0.0);
  pol.pi = random_strategy(m, rng);
  const Eigen::VectorXd v = value_function(m, pol);
  const QTable q = q_values(m, pol);
  for (int s = 0; s < m.num_states; ++s)
    CHECK(std::abs(pol.pi.row(s).dot(q.row(s)) - v[s]) <= 1e-9);

  // Q^pi is the fixed point of h(pi, .).
  const QTable hq = bellman_h(m, pol.pi, q);
  CHECK((hq - q).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("bellman operator is a beta-contraction in Q") {
  Rng rng(3);
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd pi = random_strategy(m, rng);
    QTable qa(3, 2), qb(3, 2);
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) {
        qa(s, a) = rng.uniform(-10.0, 10.0);
        qb(s, a) = rng.uniform(-10.0, 10.0);
      }
    const double lhs = (bellman_h(m, pi, qa) - bellman_h(m, pi, qb)).cwiseAbs().maxCoeff();
    CHECK(lhs <= m.beta * (qa - qb).cwiseAbs().maxCoeff() + 1e-12);
  }
}

TEST_CASE("best response sets") {
  Eigen::VectorXd row(3);
  row << 1.0, 3.0, 2.0;
  CHECK(best_response(row) == std::vector<int>{1});

  Eigen::VectorXd tie(2);
  tie << 5.0, 5.0;
  CHECK(best_response(tie) == (std::vector<int>{0, 1}));

  Eigen::VectorXd close(3);
  close << 1.0, 1.0 + 1e-12, 0.0;
  CHECK(best_response(close) == (std::vector<int>{0, 1}));

  // Adding a constant to the row never changes the argmax set.
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd q(4);
    for (int a = 0; a < 4; ++a) q[a] = rng.uniform(-5.0, 5.0);
    const double shift = rng.uniform(-100.0, 100.0);
    CHECK(best_response(q) == best_response(q.array() + shift));
  }
}

TEST_CASE("epsilon-greedy flooring") {
  Eigen::VectorXd pure(2);
  pure << 1.0, 0.0;
  Eigen::VectorXd floored = epsilon_greedy(pure, 0.1);
  CHECK(floored[0] == doctest::Approx(0.9));
  CHECK(floored[1] == doctest::Approx(0.1));

  Eigen::VectorXd uniform(2);
  uniform << 0.5, 0.5;
  floored = epsilon_greedy(uniform, 0.2);
  CHECK(floored[0] == doctest::Approx(0.5));
  CHECK(floored[1] == doctest::Approx(0.5));

  Eigen::VectorXd skew(2);
  skew << 0.2, 0.8;
  floored = epsilon_greedy(skew, 0.05);
  CHECK(floored[0] == doctest::Approx(0.23));
  CHECK(floored[1] == doctest::Approx(0.77));

  CHECK_THROWS_AS(epsilon_greedy(uniform, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_greedy(uniform, 0.0), std::invalid_argument);

  // Row stochasticity is preserved to machine precision.
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd row(5);
    for (int a = 0; a < 5; ++a) row[a] = -std::log(1.0 - rng.uniform());
    row /= row.sum();
    const Eigen::VectorXd out = epsilon_greedy(row, 0.01 + 0.15 * rng.uniform());
    CHECK(std::abs(out.sum() - 1.0) <= 1e-12);
    CHECK(out.minCoeff() >= 0.01);
  }
}

TEST_CASE("value iteration finds optima") {
  const MdpModel m = single_state({1.0, 0.0}, 0.5);
  const ValueIterationResult vi = value_iteration(m, 1e-10);
  CHECK(vi.v_star[0] == doctest::Approx(2.0));
  CHECK(vi.optimal_actions[0] == std::vector<int>{0});

  const MdpModel twin = single_state({0.3, 0.3}, 0.5);
  CHECK(value_iteration(twin, 1e-10).optimal_actions[0] == (std::vector<int>{0, 1}));

  const MdpModel r3 = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 17);
  const ValueIterationResult vi3 = value_iteration(r3, 1e-10);
  Policy greedy = Policy::uniform(r3, 0.0);
  greedy.pi.setZero();
  for (int s = 0; s < 3; ++s) greedy.pi(s, vi3.optimal_actions[s].front()) = 1.0;
  CHECK((value_function(r3, greedy) - vi3.v_star).lpNorm<Eigen::Infinity>() <= 1e-9);

  CHECK_THROWS_AS(value_iteration(r3, 0.0), std::invalid_argument);
}

TEST_CASE("advantages") {
  // Uniform strategy on the 1-state 2-action example: V = 1, K = (0.5, -0.5).
  const MdpModel m = single_state({1.0, 0.0}, 0.5);
  const Policy uniform = Policy::uniform(m, 0.0);
  const Eigen::MatrixXd k = advantage(m, uniform);
  CHECK(k(0, 0) == doctest::Approx(0.5));
  CHECK(k(0, 1) == doctest::Approx(-0.5));

  Rng rng(6);
  const MdpModel r3 = MdpModel::random(3, 3, 0.85, 0.0, 1.0, 23);
  Policy pol = Policy::uniform(r3, 0.0);
  pol.pi = random_strategy(r3, rng);
  const Eigen::MatrixXd kr = advantage(r3, pol);
  for (int s = 0; s < 3; ++s)
    CHECK(std::abs(pol.pi.row(s).dot(kr.row(s))) <= 1e-9);

  // At an optimal strategy no action has positive advantage.
  const ValueIterationResult vi = value_iteration(r3, 1e-12);
  Policy opt = Policy::uniform(r3, 0.0);
  opt.pi.setZero();
  for (int s = 0; s < 3; ++s) opt.pi(s, vi.optimal_actions[s].front()) = 1.0;
  CHECK(advantage(r3, opt).maxCoeff() <= 1e-9);
}

TEST_CASE("lyapunov W and its invariance to the chosen optimum") {
  const MdpModel m = single_state({1.0, 0.0}, 0.5);
  const ValueIterationResult vi = value_iteration(m, 1e-10);
  CHECK(lyapunov_W(m, Policy::uniform(m, 0.0), vi.v_star) == doctest::Approx(1.0));

  Policy opt = Policy::uniform(m, 0.0);
  opt.pi << 1.0, 0.0;
  CHECK(lyapunov_W(m, opt, vi.v_star) <= 1e-6);

  // With duplicated optimal actions every greedy selection evaluates to V*.
  const MdpModel twin = single_state({0.4, 0.4}, 0.6);
  const ValueIterationResult vit = value_iteration(twin, 1e-10);
  Policy g1 = Policy::uniform(twin, 0.0), g2 = Policy::uniform(twin, 0.0);
  g1.pi << 1.0, 0.0;
  g2.pi << 0.0, 1.0;
  const Policy probe = Policy::uniform(twin, 0.0);
  CHECK(lyapunov_W(twin, probe, vit.v_star) ==
        doctest::Approx(lyapunov_W(twin, probe, value_function(twin, g1))));
  CHECK(lyapunov_W(twin, probe, value_function(twin, g2)) ==
        doctest::Approx(lyapunov_W(twin, probe, vit.v_star)));
}

TEST_CASE("policy value gradient matches central differences") {
  Rng rng(7);
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 29);
  for (int trial = 0; trial < 100; ++trial) {
    Policy pol = Policy::uniform(m, 0.0);
    pol.pi = random_strategy(m, rng);
    const Eigen::MatrixXd grad = policy_value_gradient(m, pol);
    const double h = 1e-6;
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a) {
        Eigen::MatrixXd up = pol.pi, down = pol.pi;
        up(s, a) += h;
        down(s, a) -= h;
        const double fd =
            (value_oracle(m, up).sum() - value_oracle(m, down).sum()) / (2.0 * h);
        const double scale = std::max(1.0, std::abs(grad(s, a)));
        CHECK(std::abs(grad(s, a) - fd) / scale <= 1e-4);
      }
  }
}

TEST_CASE("best-response dynamics never increase W") {
  Rng rng(8);
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 31);
  const double eta = 0.05;
  for (int trial = 0; trial < 200; ++trial) {
    Policy pol = Policy::uniform(m, 0.0);
    pol.pi = random_strategy(m, rng);

    // Per-state sign property of the advantage against the drift.
    const QTable q = q_values(m, pol);
    const Eigen::MatrixXd k = advantage(m, pol);
    for (int s = 0; s < m.num_states; ++s) {
      const double omega = rng.uniform(eta, 1.0);
      for (int a_star : best_response(q.row(s))) {
        Eigen::VectorXd drift = -pol.pi.row(s).transpose();
        drift[a_star] += 1.0;
        CHECK(omega * drift.dot(k.row(s)) >= -1e-9);
      }
    }

    CHECK(lyapunov_inner_product_max(m, pol, eta) <= 1e-8);
  }
}

TEST_CASE("best-response drift field and blocks") {
  const MdpModel m = MdpModel::random(2, 2, 0.8, 0.0, 1.0, 37);
  const SetValuedField field = best_response_drift_field(m);
  CHECK(field.dimension == 4);

  Policy pol = Policy::uniform(m, 0.0);
  const Eigen::VectorXd x = flatten(pol.pi);
  const Eigen::VectorXd drift = select(field, x);
  const auto verts = field.vertices_fn(x);
  CHECK(hull_membership_residual(verts, drift) <= 1e-9);
  // Each state's drift row sums to zero: simplex flows stay on the simplex.
  const Eigen::MatrixXd d = unflatten(drift, 2, 2);
  CHECK(std::abs(d.row(0).sum()) <= 1e-12);
  CHECK(std::abs(d.row(1).sum()) <= 1e-12);

  const auto blocks = state_blocks(m);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == (std::vector<int>{0, 1}));
  CHECK(blocks[1] == (std::vector<int>{2, 3}));
}

TEST_CASE("joint pair chain kernel rows") {
  const MdpModel m = MdpModel::random(2, 2, 0.8, 0.0, 1.0, 41);
  const TransitionKernel kernel = mdp_joint_kernel(m, 0.05);
  const UpdateFamily fam = mdp_combined_family(m);
  CHECK(fam.num_components == 2 + 4);
  CHECK(fam.size() == 4);

  Policy pol = Policy::uniform(m, 0.0);
  const Eigen::VectorXd x = flatten(pol.pi);
  const Eigen::VectorXd row = kernel_row(kernel, m.pair_index(0, 1), x, fam.size());
  // Row entries are P(0 -> s' | a = 1) * pi^eps(s', a').
  const Eigen::VectorXd greedy = epsilon_greedy(pol.pi.row(0), 0.05);
  CHECK(row[m.pair_index(0, 0)] ==
        doctest::Approx(m.p[1](0, 0) * greedy[0]));
  CHECK(row.sum() == doctest::Approx(1.0));

  const FastLimitOracle oracle = q_value_oracle(m);
  CHECK((oracle.lambda(x) - flatten(q_values(m, pol))).norm() <= 1e-12);
}

TEST_CASE("model json round trip and validation") {
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 43);
  const MdpModel back = MdpModel::from_json(m.to_json());
  CHECK(back.num_states == 3);
  CHECK(back.beta == doctest::Approx(0.8));
  for (int a = 0; a < 2; ++a)
    CHECK((back.p[a] - m.p[a]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.rewards - m.rewards).cwiseAbs().maxCoeff() == 0.0);

  MdpModel bad = m;
  bad.beta = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = m;
  bad.p[0](0, 0) += 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  // The periodic cycle model fails the chain requirement.
  CHECK_THROWS_AS(two_state_cycle().validate(), AssumptionError);
}

TEST_CASE("learner: zero rewards move strategies to the lowest-index action") {
  MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 0.0, 47);
  m.reward_noise = NoiseModel::zero();
  LearnerOptions opt;
  opt.epsilon_floor = 0.05;
  MdpLearner learner(m, Policy::uniform(m, 0.05), opt, Rng(100));
  learner.run(2000);
  CHECK(learner.q().cwiseAbs().maxCoeff() == 0.0);
  for (int s = 0; s < 3; ++s) CHECK(learner.policy().pi(s, 0) == doctest::Approx(1.0));
}

TEST_CASE("learner: scalar recursion converges monotonically to r/(1-beta)") {
  MdpModel m = single_state({1.0}, 0.5);
  LearnerOptions opt;
  opt.fast_schedule = Schedule::power(1.0);
  opt.freeze_policy = true;  // single action, nothing to learn on the slow side
  opt.epsilon_floor = 0.5;
  MdpLearner learner(m, Policy::uniform(m, 0.5), opt, Rng(101));

  double prev = 0.0;
  for (int k = 0; k < 10000; ++k) {
    learner.step();
    const double q = learner.q()(0, 0);
    CHECK(q >= prev - 1e-12);
    CHECK(q <= 2.0 + 1e-12);
    prev = q;
  }
  CHECK(std::abs(prev - 2.0) <= 0.1);
}

TEST_CASE("learner: the first visit overwrites Q when gamma(1) = 1") {
  MdpModel m = single_state({5.0}, 0.5);
  LearnerOptions opt;
  opt.fast_schedule = Schedule::power(1.0);
  opt.freeze_policy = true;
  opt.epsilon_floor = 0.5;
  MdpLearner learner(m, Policy::uniform(m, 0.5), opt, Rng(102));
  learner.step();
  CHECK(learner.q()(0, 0) == doctest::Approx(5.0));  // R + beta * 0
}

TEST_CASE("learner: counters, simplex and determinism") {
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 53);
  LearnerOptions opt;
  MdpLearner a(m, Policy::uniform(m, 0.05), opt, Rng(103));
  MdpLearner b(m, Policy::uniform(m, 0.05), opt, Rng(103));
  a.run(5000);
  b.run(5000);
  CHECK((a.q() - b.q()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.policy().pi - b.policy().pi).cwiseAbs().maxCoeff() == 0.0);

  long long nu_total = 0, phi_total = 0;
  for (int s = 0; s < 3; ++s) {
    long long by_pairs = 0;
    for (int act = 0; act < 2; ++act) by_pairs += a.pair_counts()[m.pair_index(s, act)];
    CHECK(a.state_counts()[s] == by_pairs);
    nu_total += a.state_counts()[s];
    phi_total += by_pairs;
  }
  CHECK(nu_total == 5000);
  CHECK(phi_total == 5000);

  for (int s = 0; s < 3; ++s) {
    CHECK(std::abs(a.policy().pi.row(s).sum() - 1.0) <= 1e-12);
    CHECK(a.policy().pi.row(s).minCoeff() >= 0.0);
  }
  CHECK(a.min_pair_fraction() > 0.0);
}

TEST_CASE("learner: frozen strategy tracks the evaluation oracle") {
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 59);
  LearnerOptions opt;
  opt.freeze_policy = true;
  const Policy frozen = Policy::uniform(m, 0.05);
  MdpLearner learner(m, frozen, opt, Rng(104));
  learner.run(30000);
  const QTable target = q_values(m, learner.policy());
  CHECK((learner.q() - target).cwiseAbs().maxCoeff() <= 0.15);
}

TEST_CASE("generic lyapunov check accepts W on the best-response inclusion") {
  const MdpModel m = MdpModel::random(2, 2, 0.8, 0.0, 1.0, 61);
  const ValueIterationResult vi = value_iteration(m, 1e-10);

  FlowSampler sampler;
  sampler.field.base = best_response_drift_field(m);
  sampler.field.box = OmegaBox::with_blocks(0.1, 4, state_blocks(m));
  sampler.dt = 0.01;
  sampler.horizon = 2.0;

  const auto w_fn = [m, vi](const Eigen::VectorXd& x) {
    Policy pol;
    pol.pi = unflatten(x, 2, 2);
    return lyapunov_W(m, pol, vi.v_star);
  };
  LyapunovSpec spec;
  spec.w = w_fn;
  spec.in_target = [w_fn](const Eigen::VectorXd& x) { return w_fn(x) <= 1e-6; };
  spec.gradient = [m](const Eigen::VectorXd& x) {
    Policy pol;
    pol.pi = unflatten(x, 2, 2);
    return Eigen::VectorXd(-flatten(policy_value_gradient(m, pol)));
  };

  Rng rng(62);
  std::vector<Eigen::VectorXd> probes;
  for (int k = 0; k < 40; ++k) probes.push_back(flatten(random_strategy(m, rng)));
  const LyapunovReport rep = lyapunov_check(spec, sampler, probes, rng);
  CHECK(rep.all_pass);
  CHECK(rep.max_inner_overall <= 1e-8);
}

TEST_CASE("learner: windowed tracking medians shrink over the run") {
  const MdpModel m = MdpModel::random(3, 2, 0.8, 0.0, 1.0, 67);
  LearnerOptions opt;
  MdpLearner learner(m, Policy::uniform(m, 0.05), opt, Rng(106));

  std::vector<double> early, late;
  for (int k = 1; k <= 100; ++k) {
    learner.run(1000);
    const double err =
        (learner.q() - q_values(m, learner.policy())).cwiseAbs().maxCoeff();
    if (k >= 5 && k <= 10) early.push_back(err);
    if (k >= 50) late.push_back(err);
  }
  std::sort(early.begin(), early.end());
  std::sort(late.begin(), late.end());
  CHECK(late[late.size() / 2] < early[early.size() / 2]);
  CHECK(late[late.size() / 2] <= 0.1);
}

TEST_CASE("learner: q clamps are counted") {
  MdpModel m = single_state({1.0}, 0.5);
  m.reward_noise = NoiseModel::gaussian(20.0, 4.0);
  LearnerOptions opt;
  opt.fast_schedule = Schedule::power(1.0);
  opt.freeze_policy = true;
  opt.epsilon_floor = 0.5;
  opt.q_box_slack = 0.5;
  MdpLearner learner(m, Policy::uniform(m, 0.5), opt, Rng(105));
  learner.run(200);
  CHECK(learner.clamp_events() > 0);
  CHECK(std::abs(learner.q()(0, 0)) <= 1.0 / 0.5 + 0.5 + 1e-12);
}
