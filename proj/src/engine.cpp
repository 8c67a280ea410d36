#include "asadi/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "asadi/errors.hpp"

namespace asadi {

NoiseModel NoiseModel::zero() { return NoiseModel{}; }

NoiseModel NoiseModel::gaussian(double sigma, double truncate_sigmas) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian noise: sigma must be >= 0");
  NoiseModel m;
  m.kind = Kind::Gaussian;
  m.sigma = sigma;
  m.truncate_sigmas = truncate_sigmas;
  return m;
}

NoiseModel NoiseModel::bounded_uniform(double bound) {
  if (bound < 0.0) throw std::invalid_argument("uniform noise: bound must be >= 0");
  NoiseModel m;
  m.kind = Kind::BoundedUniform;
  m.bound = bound;
  return m;
}

double NoiseModel::draw_scalar(Rng& rng) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Gaussian:
      return sigma * (truncate_sigmas > 0.0 ? rng.gaussian_truncated(truncate_sigmas)
                                            : rng.gaussian());
    case Kind::BoundedUniform:
      return rng.uniform(-bound, bound);
  }
  return 0.0;
}

Eigen::VectorXd NoiseModel::draw(int k, Rng& rng) const {
  Eigen::VectorXd v(k);
  if (independent_components) {
    for (int c = 0; c < k; ++c) v[c] = draw_scalar(rng);
  } else {
    v.setConstant(draw_scalar(rng));
  }
  return v;
}

BiasModel BiasModel::zero() { return BiasModel{}; }

BiasModel BiasModel::decay(double c, double rate) {
  if (c < 0.0 || rate <= 0.0)
    throw std::invalid_argument("bias decay: need c >= 0 and rate > 0");
  BiasModel m;
  m.envelope = c;
  m.value = [c, rate](long long n, int k) {
    return Eigen::VectorXd::Constant(k, c * std::pow(static_cast<double>(n), -rate));
  };
  return m;
}

Eigen::VectorXd BiasModel::eval(long long n, int k) const {
  if (!value) return Eigen::VectorXd::Zero(k);
  Eigen::VectorXd d = value(n, k);
  if (d.size() != k) throw std::runtime_error("bias model returned wrong dimension");
  return d;
}

Box Box::cube(int k, double half_width) {
  Box b;
  b.lo = Eigen::VectorXd::Constant(k, -half_width);
  b.hi = Eigen::VectorXd::Constant(k, half_width);
  return b;
}

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lo.size()) return false;
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

bool TrajectoryLog::is_dense() const {
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (rows[k].n != static_cast<long long>(k)) return false;
  return !rows.empty();
}

namespace {

std::vector<std::vector<int>> default_blocks(int k) {
  std::vector<std::vector<int>> blocks;
  for (int c = 0; c < k; ++c) blocks.push_back({c});
  return blocks;
}

std::vector<int> component_of_map(const std::vector<std::vector<int>>& blocks, int dim) {
  std::vector<int> owner(static_cast<std::size_t>(dim), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].empty()) throw std::invalid_argument("engine blocks: empty block");
    for (int c : blocks[b]) {
      if (c < 0 || c >= dim)
        throw std::invalid_argument("engine blocks: coordinate out of range");
      if (owner[static_cast<std::size_t>(c)] >= 0)
        throw std::invalid_argument("engine blocks: coordinate owned twice");
      owner[static_cast<std::size_t>(c)] = static_cast<int>(b);
    }
  }
  for (int c = 0; c < dim; ++c)
    if (owner[static_cast<std::size_t>(c)] < 0)
      throw std::invalid_argument("engine blocks: coordinate not owned");
  return owner;
}

}  // namespace

Engine::Engine(EngineConfig config, const Eigen::VectorXd& x0, const Rng& root)
    : cfg_(std::move(config)),
      state_(cfg_.family.num_components),
      scheduler_rng_(root.stream("scheduler")),
      noise_rng_(root.stream("noise")),
      tie_rng_(root.stream("tie")) {
  const int dim = static_cast<int>(x0.size());
  if (cfg_.field.dimension != dim)
    throw std::invalid_argument("engine: field dimension does not match x0");
  if (cfg_.blocks.empty()) cfg_.blocks = default_blocks(dim);
  if (static_cast<int>(cfg_.blocks.size()) != cfg_.family.num_components)
    throw std::invalid_argument("engine: one block per scheduler component required");
  if (cfg_.box.lo.size() != dim || cfg_.box.hi.size() != dim)
    throw std::invalid_argument("engine: box dimension mismatch");
  if (cfg_.initial_subset < 0 || cfg_.initial_subset >= cfg_.family.size())
    throw std::invalid_argument("engine: initial subset out of range");
  if (cfg_.log_thin < 1) throw std::invalid_argument("engine: log_thin must be >= 1");
  if (!cfg_.box.contains(x0))
    throw AssumptionError("(A1)(a)", "initial iterate outside the configured box");

  log_.blocks = cfg_.blocks;
  log_.component_of = component_of_map(cfg_.blocks, dim);

  state_.x = x0;
  state_.current_subset = cfg_.initial_subset;

  TransitionRecord row;
  row.n = 0;
  row.tau_bar = 0.0;
  row.x = x0;
  row.mu = Eigen::VectorXd::Zero(cfg_.family.num_components);
  row.f = Eigen::VectorXd::Zero(dim);
  row.noise = Eigen::VectorXd::Zero(dim);
  row.bias = Eigen::VectorXd::Zero(dim);
  log_.rows.push_back(std::move(row));
}

void Engine::iterate() {
  const int dim = static_cast<int>(state_.x.size());

  const int next_subset =
      step(cfg_.kernel, cfg_.family, state_.current_subset, state_.x, scheduler_rng_);
  const std::vector<int>& comps = cfg_.family.subsets[static_cast<std::size_t>(next_subset)];
  state_.counters.increment(comps);

  const Eigen::VectorXd f = select(cfg_.field, state_.x, cfg_.tie_policy, &tie_rng_);
  const Eigen::VectorXd v = cfg_.noise.draw(dim, noise_rng_);
  const Eigen::VectorXd d = cfg_.bias.eval(state_.n + 1, dim);
  const AsyncStepRecord rec = async_step(cfg_.schedule, state_.counters, comps);

  for (int comp : comps) {
    const double a =
        cfg_.schedule.eval(state_.counters.counts[static_cast<std::size_t>(comp)]);
    for (int c : cfg_.blocks[static_cast<std::size_t>(comp)])
      state_.x[c] += a * (f[c] + v[c] + d[c]);
  }

  state_.n += 1;
  state_.current_subset = next_subset;
  state_.tau_bar += rec.bar_alpha;

  if (state_.n % cfg_.log_thin == 0) {
    TransitionRecord row;
    row.n = state_.n;
    row.tau_bar = state_.tau_bar;
    row.x = state_.x;
    row.update_set = comps;
    row.alpha_bar = rec.bar_alpha;
    row.mu = rec.mu;
    row.f = f;
    row.noise = v;
    row.bias = d;
    log_.rows.push_back(std::move(row));
  }

  if (!cfg_.box.contains(state_.x))
    throw AssumptionError("(A1)(a)", "iterate left the configured compact box at n = " +
                                         std::to_string(state_.n));
}

void Engine::run(long long steps) {
  for (long long k = 0; k < steps; ++k) iterate();
}

namespace {

// Index of the last row with tau_bar <= t.
std::size_t knot_index(const TrajectoryLog& log, double t) {
  const auto& rows = log.rows;
  std::size_t lo = 0, hi = rows.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    if (rows[mid].tau_bar <= t)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

}  // namespace

Eigen::VectorXd interpolate(const TrajectoryLog& log, double t) {
  if (log.rows.empty()) throw std::invalid_argument("interpolate: empty log");
  if (!log.is_dense())
    throw std::invalid_argument("interpolate: thinned logs cannot be interpolated");
  if (t < 0.0) throw std::invalid_argument("interpolate: t must be >= 0");
  const double t_end = log.rows.back().tau_bar;
  if (t > t_end + 1e-12)
    throw std::invalid_argument("interpolate: t beyond the logged horizon");
  if (t >= t_end) return log.rows.back().x;

  const std::size_t k = knot_index(log, t);
  const auto& a = log.rows[k];
  const auto& b = log.rows[k + 1];
  const double s = t - a.tau_bar;
  return a.x + s * (b.x - a.x) / b.alpha_bar;
}

long long m_bar(const TrajectoryLog& log, double t) {
  if (log.rows.empty()) throw std::invalid_argument("m_bar: empty log");
  if (t < 0.0) throw std::invalid_argument("m_bar: t must be >= 0");
  return log.rows[knot_index(log, t)].n;
}

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
  const int dim = log.dimension();
  const int comps = log.num_components();

  out << "n,tau_bar";
  for (int c = 0; c < dim; ++c) out << ",x_" << c + 1;
  for (int i = 0; i < comps; ++i) out << ",upd_" << i + 1;
  out << ",alpha_bar\n";

  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& row : log.rows) {
    out << row.n;
    put(row.tau_bar);
    for (int c = 0; c < dim; ++c) put(row.x[c]);
    std::vector<int> upd(static_cast<std::size_t>(comps), 0);
    for (int i : row.update_set) upd[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < comps; ++i) out << ',' << upd[static_cast<std::size_t>(i)];
    put(row.alpha_bar);
    out << '\n';
  }
}

}  // namespace asadi
