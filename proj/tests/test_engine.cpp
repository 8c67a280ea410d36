#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "asadi/engine.hpp"
#include "asadi/errors.hpp"

using namespace asadi;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

EngineConfig base_config(int dim) {
  EngineConfig cfg;
  cfg.field = neg_identity_field(dim);
  cfg.schedule = Schedule::power(1.0);
  cfg.family = UpdateFamily::singletons(dim);
  cfg.kernel = TransitionKernel::constant(
      Eigen::MatrixXd::Constant(dim, dim, 1.0 / dim));
  cfg.box = Box::cube(dim, 100.0);
  return cfg;
}

}  // namespace

TEST_CASE("first iteration with a pinned update set") {
  EngineConfig cfg = base_config(2);
  Eigen::MatrixXd rows(2, 2);
  rows << 1.0, 0.0, 0.0, 1.0;  // stays on the initial singleton
  cfg.kernel = TransitionKernel::constant(rows);

  Engine engine(cfg, vec2(1.0, 1.0), Rng(1));
  engine.iterate();
  CHECK(engine.state().x[0] == doctest::Approx(0.0));  // 1 + 1 * (-1)
  CHECK(engine.state().x[1] == doctest::Approx(1.0));  // untouched
  CHECK(engine.state().counters.counts[0] == 1);
  CHECK(engine.state().counters.counts[1] == 0);
}

TEST_CASE("all-components updates reduce to the synchronous recursion") {
  EngineConfig cfg = base_config(2);
  cfg.family = UpdateFamily::all_at_once(2);
  cfg.kernel = TransitionKernel::constant(Eigen::MatrixXd::Ones(1, 1));

  Engine engine(cfg, vec2(1.0, -0.5), Rng(2));
  Eigen::VectorXd oracle = vec2(1.0, -0.5);
  for (long long n = 1; n <= 10000; ++n) {
    engine.iterate();
    oracle += cfg.schedule.eval(n) * (-oracle);
    CHECK((engine.state().x - oracle).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("alternating singleton updates match the per-component recursion") {
  EngineConfig cfg = base_config(2);
  Eigen::MatrixXd rows(2, 2);
  rows << 0.0, 1.0, 1.0, 0.0;  // deterministic alternation
  cfg.kernel = TransitionKernel::constant(rows);

  Engine engine(cfg, vec2(1.0, 1.0), Rng(3));
  // Independent scalar recursions, one per component, driven by own counters.
  double oracle[2] = {1.0, 1.0};
  long long counts[2] = {0, 0};
  int cur = 0;
  for (long long n = 0; n < 10000; ++n) {
    const int next = 1 - cur;  // row is degenerate
    ++counts[next];
    oracle[next] += cfg.schedule.eval(counts[next]) * (-oracle[next]);
    engine.iterate();
    cur = next;
    CHECK(engine.state().x[0] == doctest::Approx(oracle[0]).epsilon(1e-14));
    CHECK(engine.state().x[1] == doctest::Approx(oracle[1]).epsilon(1e-14));
  }
  CHECK(engine.state().x.norm() <= 1e-2);
}

TEST_CASE("counter, clock and decomposition consistency from logs") {
  EngineConfig cfg = base_config(3);
  cfg.noise = NoiseModel::gaussian(0.5);
  cfg.bias = BiasModel::decay(0.3, 1.0);
  cfg.family = UpdateFamily::make(3, {{0, 1}, {1, 2}, {0}, {2}});
  cfg.kernel = TransitionKernel::constant(Eigen::MatrixXd::Constant(4, 4, 0.25));

  Engine engine(cfg, Eigen::VectorXd::Ones(3), Rng(4));
  engine.run(2000);
  const TrajectoryLog& log = engine.log();
  REQUIRE(log.rows.size() == 2001);

  // Counter consistency: total counts equal the summed update-set sizes.
  long long total = 0;
  CounterVector replay(3);
  double tau = 0.0;
  for (std::size_t k = 1; k < log.rows.size(); ++k) {
    const auto& row = log.rows[k];
    total += static_cast<long long>(row.update_set.size());
    replay.increment(row.update_set);

    // bar_alpha equals the max schedule value over the replayed counters.
    double bar = 0.0;
    for (int i : row.update_set)
      bar = std::max(bar, cfg.schedule.eval(replay.counts[i]));
    CHECK(row.alpha_bar == doctest::Approx(bar).epsilon(1e-15));

    tau += row.alpha_bar;
    CHECK(row.tau_bar == doctest::Approx(tau).epsilon(1e-12));

    // x_{k} - x_{k-1} = bar_alpha_k M_k (f_{k-1} + V_k + d_k) per coordinate.
    const auto& prev = log.rows[k - 1];
    for (int c = 0; c < 3; ++c) {
      const double mu = row.mu[log.component_of[c]];
      const double predicted =
          row.alpha_bar * mu * (row.f[c] + row.noise[c] + row.bias[c]);
      CHECK(std::abs(row.x[c] - prev.x[c] - predicted) <= 1e-12);
    }
  }
  CHECK(replay.total() == total);
  CHECK(engine.state().counters.total() == total);
}

TEST_CASE("interpolation hits knots, midpoints and stays continuous") {
  EngineConfig cfg = base_config(2);
  cfg.noise = NoiseModel::gaussian(0.2);
  Engine engine(cfg, vec2(1.0, 1.0), Rng(5));
  engine.run(200);
  const TrajectoryLog& log = engine.log();

  for (std::size_t k : {std::size_t(0), std::size_t(5), std::size_t(200)}) {
    const Eigen::VectorXd at_knot = interpolate(log, log.rows[k].tau_bar);
    CHECK((at_knot - log.rows[k].x).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  const auto& a = log.rows[10];
  const auto& b = log.rows[11];
  const Eigen::VectorXd mid = interpolate(log, a.tau_bar + 0.5 * b.alpha_bar);
  CHECK((mid - 0.5 * (a.x + b.x)).lpNorm<Eigen::Infinity>() <= 1e-9);

  // Continuity: consecutive fine samples never jump more than a knot gap.
  double max_knot_gap = 0.0;
  for (std::size_t k = 1; k < log.rows.size(); ++k)
    max_knot_gap =
        std::max(max_knot_gap, (log.rows[k].x - log.rows[k - 1].x).norm());
  const double t_end = log.rows.back().tau_bar;
  Eigen::VectorXd prev = interpolate(log, 0.0);
  for (int k = 1; k <= 3000; ++k) {
    const Eigen::VectorXd here = interpolate(log, t_end * k / 3000.0);
    CHECK((here - prev).norm() <= max_knot_gap + 1e-12);
    prev = here;
  }

  CHECK_THROWS_AS(interpolate(log, t_end + 1.0), std::invalid_argument);
  CHECK_THROWS_AS(interpolate(log, -0.5), std::invalid_argument);
}

TEST_CASE("m_bar boundaries") {
  EngineConfig cfg = base_config(2);
  Engine engine(cfg, vec2(1.0, 1.0), Rng(6));
  engine.run(50);
  const TrajectoryLog& log = engine.log();

  CHECK(m_bar(log, 0.0) == 0);
  CHECK(m_bar(log, log.rows[5].tau_bar) == 5);
  CHECK(m_bar(log, log.rows[5].tau_bar - 1e-12) == 4);
  CHECK(m_bar(log, log.rows.back().tau_bar + 100.0) == 50);
}

TEST_CASE("leaving the box halts with the boundedness assumption") {
  EngineConfig cfg = base_config(2);
  cfg.field = linear_field(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2));
  cfg.family = UpdateFamily::all_at_once(2);
  cfg.kernel = TransitionKernel::constant(Eigen::MatrixXd::Ones(1, 1));
  cfg.box = Box::cube(2, 1.5);

  Engine engine(cfg, vec2(1.0, 1.0), Rng(7));
  try {
    engine.run(10);
    FAIL("expected a boundedness violation");
  } catch (const AssumptionError& e) {
    CHECK(e.assumption() == "(A1)(a)");
  }
}

TEST_CASE("seeded determinism of full trajectories") {
  EngineConfig cfg = base_config(2);
  cfg.noise = NoiseModel::gaussian(1.0);

  Engine a(cfg, vec2(1.0, -1.0), Rng(321));
  Engine b(cfg, vec2(1.0, -1.0), Rng(321));
  a.run(3000);
  b.run(3000);
  for (std::size_t k = 0; k < a.log().rows.size(); ++k)
    CHECK(a.log().rows[k].x == b.log().rows[k].x);

  std::ostringstream csv_a, csv_b;
  write_trajectory_csv(a.log(), csv_a);
  write_trajectory_csv(b.log(), csv_b);
  CHECK(csv_a.str() == csv_b.str());
  CHECK(csv_a.str().substr(0, 39) == "n,tau_bar,x_1,x_2,upd_1,upd_2,alpha_bar");
}

TEST_CASE("noise models: moments, bounds and truncation") {
  Rng rng(8);
  const NoiseModel g = NoiseModel::gaussian(1.0);
  double sum = 0.0;
  const int m = 100000;
  for (int k = 0; k < m; ++k) sum += g.draw_scalar(rng);
  CHECK(std::abs(sum / m) <= 4.0 / std::sqrt(static_cast<double>(m)));

  const NoiseModel trunc = NoiseModel::gaussian(0.5, 4.0);
  for (int k = 0; k < 20000; ++k) CHECK(std::abs(trunc.draw_scalar(rng)) <= 2.0);

  const NoiseModel u = NoiseModel::bounded_uniform(0.3);
  for (int k = 0; k < 20000; ++k) CHECK(std::abs(u.draw_scalar(rng)) <= 0.3);

  const NoiseModel z = NoiseModel::zero();
  CHECK(z.draw(4, rng).norm() == 0.0);

  NoiseModel tied = NoiseModel::gaussian(1.0);
  tied.independent_components = false;
  const Eigen::VectorXd v = tied.draw(4, rng);
  CHECK(v[0] == v[1]);
  CHECK(v[0] == v[3]);
}

TEST_CASE("thinned logs refuse interpolation") {
  EngineConfig cfg = base_config(2);
  cfg.log_thin = 10;
  Engine engine(cfg, vec2(1.0, 1.0), Rng(9));
  engine.run(100);
  CHECK(engine.log().rows.size() == 11);  // initial row + every 10th
  CHECK_THROWS_AS(interpolate(engine.log(), 0.1), std::invalid_argument);
}
