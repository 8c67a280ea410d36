#include "asadi/two_timescale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "asadi/errors.hpp"

namespace asadi {

JointFamily JointFamily::make(int num_slow, int num_fast,
                              std::vector<JointElement> elements) {
  if (num_slow <= 0 || num_fast <= 0)
    throw std::invalid_argument("joint family: both sides need components");
  if (elements.empty()) throw std::invalid_argument("joint family: no elements");

  std::vector<bool> slow_seen(static_cast<std::size_t>(num_slow), false);
  std::vector<bool> fast_seen(static_cast<std::size_t>(num_fast), false);
  std::set<std::pair<std::vector<int>, std::vector<int>>> dedup;
  for (auto& e : elements) {
    if (e.slow.empty() || e.fast.empty())
      throw std::invalid_argument(
          "joint family: every element needs a slow part and a fast part");
    std::sort(e.slow.begin(), e.slow.end());
    std::sort(e.fast.begin(), e.fast.end());
    for (int i : e.slow) {
      if (i < 0 || i >= num_slow)
        throw std::invalid_argument("joint family: slow component out of range");
      slow_seen[static_cast<std::size_t>(i)] = true;
    }
    for (int j : e.fast) {
      if (j < 0 || j >= num_fast)
        throw std::invalid_argument("joint family: fast component out of range");
      fast_seen[static_cast<std::size_t>(j)] = true;
    }
    if (!dedup.insert({e.slow, e.fast}).second)
      throw std::invalid_argument("joint family: duplicate element");
  }
  for (int i = 0; i < num_slow; ++i)
    if (!slow_seen[static_cast<std::size_t>(i)])
      throw AssumptionError("(B4)(b)", "slow component " + std::to_string(i) +
                                           " appears in no joint element");
  for (int j = 0; j < num_fast; ++j)
    if (!fast_seen[static_cast<std::size_t>(j)])
      throw AssumptionError("(B4)(b)", "fast component " + std::to_string(j) +
                                           " appears in no joint element");

  JointFamily fam;
  fam.num_slow = num_slow;
  fam.num_fast = num_fast;
  fam.elements = std::move(elements);
  return fam;
}

UpdateFamily JointFamily::combined() const {
  std::vector<std::vector<int>> subsets;
  for (const auto& e : elements) {
    std::vector<int> s = e.slow;
    for (int j : e.fast) s.push_back(num_slow + j);
    subsets.push_back(std::move(s));
  }
  return UpdateFamily::make(num_slow + num_fast, std::move(subsets));
}

namespace {

// Effective decay order of alpha(n): alpha/gamma -> 0 iff the slow schedule
// decays strictly faster (larger power, or equal power and larger log power).
std::pair<double, double> decay_order(const Schedule& s) {
  return {s.exponent(),
          s.family() == ScheduleFamily::PowerLog ? s.log_exponent() : 0.0};
}

}  // namespace

void check_schedule_pairing(const Schedule& slow, const Schedule& fast) {
  const auto a = decay_order(slow);
  const auto g = decay_order(fast);
  if (a.first > g.first) return;
  if (a.first == g.first && a.second > g.second) return;
  throw std::invalid_argument(
      "(B2)(c) requires alpha(n)/gamma(n) -> 0: the slow schedule must decay "
      "strictly faster than the fast one");
}

namespace {

std::vector<std::vector<int>> singleton_blocks(int k) {
  std::vector<std::vector<int>> blocks;
  for (int c = 0; c < k; ++c) blocks.push_back({c});
  return blocks;
}

std::vector<int> owner_map(const std::vector<std::vector<int>>& blocks, int dim) {
  std::vector<int> owner(static_cast<std::size_t>(dim), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (int c : blocks[b]) {
      if (c < 0 || c >= dim || owner[static_cast<std::size_t>(c)] >= 0)
        throw std::invalid_argument("coupled engine: invalid block structure");
      owner[static_cast<std::size_t>(c)] = static_cast<int>(b);
    }
  for (int c = 0; c < dim; ++c)
    if (owner[static_cast<std::size_t>(c)] < 0)
      throw std::invalid_argument("coupled engine: coordinate not owned by a block");
  return owner;
}

TransitionRecord initial_row(const Eigen::VectorXd& x0, int num_components) {
  TransitionRecord row;
  row.n = 0;
  row.tau_bar = 0.0;
  row.x = x0;
  row.mu = Eigen::VectorXd::Zero(num_components);
  row.f = Eigen::VectorXd::Zero(x0.size());
  row.noise = Eigen::VectorXd::Zero(x0.size());
  row.bias = Eigen::VectorXd::Zero(x0.size());
  return row;
}

}  // namespace

CoupledEngine::CoupledEngine(CoupledConfig config, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& y0, const Rng& root)
    : cfg_(std::move(config)),
      x_(x0),
      y_(y0),
      nu_(cfg_.family.num_slow),
      phi_(cfg_.family.num_fast),
      scheduler_rng_(root.stream("scheduler")),
      slow_noise_rng_(root.stream("noise")),
      fast_noise_rng_(root.stream("noise_fast")),
      tie_rng_(root.stream("tie")) {
  check_schedule_pairing(cfg_.slow_schedule, cfg_.fast_schedule);

  const int dx = static_cast<int>(x0.size());
  const int dy = static_cast<int>(y0.size());
  if (cfg_.slow_field.dimension != dx + dy || cfg_.fast_field.dimension != dx + dy)
    throw std::invalid_argument("coupled engine: fields must take z = (x; y)");
  if (cfg_.slow_blocks.empty()) cfg_.slow_blocks = singleton_blocks(dx);
  if (cfg_.fast_blocks.empty()) cfg_.fast_blocks = singleton_blocks(dy);
  if (static_cast<int>(cfg_.slow_blocks.size()) != cfg_.family.num_slow ||
      static_cast<int>(cfg_.fast_blocks.size()) != cfg_.family.num_fast)
    throw std::invalid_argument("coupled engine: block count must match the family");
  if (cfg_.slow_box.lo.size() != dx || cfg_.fast_box.lo.size() != dy)
    throw std::invalid_argument("coupled engine: box dimension mismatch");
  if (cfg_.initial_element < 0 || cfg_.initial_element >= cfg_.family.size())
    throw std::invalid_argument("coupled engine: initial element out of range");
  if (!cfg_.slow_box.contains(x0) || !cfg_.fast_box.contains(y0))
    throw AssumptionError("(B1)(a)", "initial iterates outside the configured boxes");

  current_element_ = cfg_.initial_element;

  slow_log_.blocks = cfg_.slow_blocks;
  slow_log_.component_of = owner_map(cfg_.slow_blocks, dx);
  slow_log_.rows.push_back(initial_row(x0, cfg_.family.num_slow));
  fast_log_.blocks = cfg_.fast_blocks;
  fast_log_.component_of = owner_map(cfg_.fast_blocks, dy);
  fast_log_.rows.push_back(initial_row(y0, cfg_.family.num_fast));
}

Eigen::VectorXd CoupledEngine::joint() const {
  Eigen::VectorXd z(x_.size() + y_.size());
  z << x_, y_;
  return z;
}

void CoupledEngine::iterate() {
  const int dx = static_cast<int>(x_.size());
  const int dy = static_cast<int>(y_.size());
  const Eigen::VectorXd z = joint();

  const Eigen::VectorXd row =
      kernel_row(cfg_.kernel, current_element_, z, cfg_.family.size());
  const double u = scheduler_rng_.uniform();
  int next = cfg_.family.size() - 1;
  double acc = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    acc += row[j];
    if (u < acc) {
      next = j;
      break;
    }
  }
  const JointElement& elem = cfg_.family.elements[static_cast<std::size_t>(next)];

  nu_.increment(elem.slow);
  phi_.increment(elem.fast);

  const Eigen::VectorXd f_full = select(cfg_.slow_field, z, cfg_.tie_policy, &tie_rng_);
  const Eigen::VectorXd g_full = select(cfg_.fast_field, z, cfg_.tie_policy, &tie_rng_);
  if (f_full.size() != dx || g_full.size() != dy)
    throw std::invalid_argument(
        "coupled engine: field values must match the iterate dimensions");
  const Eigen::VectorXd v = cfg_.slow_noise.draw(dx, slow_noise_rng_);
  const Eigen::VectorXd uN = cfg_.fast_noise.draw(dy, fast_noise_rng_);
  const Eigen::VectorXd d = cfg_.slow_bias.eval(n_ + 1, dx);
  const Eigen::VectorXd e = cfg_.fast_bias.eval(n_ + 1, dy);

  const AsyncStepRecord slow_rec = async_step(cfg_.slow_schedule, nu_, elem.slow);
  const AsyncStepRecord fast_rec = async_step(cfg_.fast_schedule, phi_, elem.fast);

  for (int comp : elem.slow) {
    const double a = cfg_.slow_schedule.eval(nu_.counts[static_cast<std::size_t>(comp)]);
    for (int c : cfg_.slow_blocks[static_cast<std::size_t>(comp)])
      x_[c] += a * (f_full[c] + v[c] + d[c]);
  }
  for (int comp : elem.fast) {
    const double g = cfg_.fast_schedule.eval(phi_.counts[static_cast<std::size_t>(comp)]);
    for (int c : cfg_.fast_blocks[static_cast<std::size_t>(comp)])
      y_[c] += g * (g_full[c] + uN[c] + e[c]);
  }

  n_ += 1;
  current_element_ = next;
  tau_bar_ += slow_rec.bar_alpha;
  rho_bar_ += fast_rec.bar_alpha;
  ratio_log_.push_back(slow_rec.bar_alpha / fast_rec.bar_alpha);

  if (n_ % cfg_.log_thin == 0) {
    TransitionRecord srow;
    srow.n = n_;
    srow.tau_bar = tau_bar_;
    srow.x = x_;
    srow.update_set = elem.slow;
    srow.alpha_bar = slow_rec.bar_alpha;
    srow.mu = slow_rec.mu;
    srow.f = f_full;
    srow.noise = v;
    srow.bias = d;
    slow_log_.rows.push_back(std::move(srow));

    TransitionRecord frow;
    frow.n = n_;
    frow.tau_bar = rho_bar_;
    frow.x = y_;
    frow.update_set = elem.fast;
    frow.alpha_bar = fast_rec.bar_alpha;
    frow.mu = fast_rec.mu;
    frow.f = g_full;
    frow.noise = uN;
    frow.bias = e;
    fast_log_.rows.push_back(std::move(frow));
  }

  if (!cfg_.slow_box.contains(x_))
    throw AssumptionError("(B1)(a)", "slow iterate left its box at n = " +
                                         std::to_string(n_));
  if (!cfg_.fast_box.contains(y_))
    throw AssumptionError("(B1)(a)", "fast iterate left its box at n = " +
                                         std::to_string(n_));
}

void CoupledEngine::run(long long steps) {
  for (long long k = 0; k < steps; ++k) iterate();
}

double tracking_error(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const FastLimitOracle& oracle) {
  if (!oracle.lambda)
    throw std::invalid_argument("tracking_error: oracle has no limit map");
  const Eigen::VectorXd target = oracle.lambda(x);
  if (target.size() != y.size())
    throw std::invalid_argument("tracking_error: limit map dimension mismatch");
  return (y - target).lpNorm<Eigen::Infinity>();
}

void write_coupled_csv(const TrajectoryLog& slow, const TrajectoryLog& fast,
                       const std::vector<double>& ratio, std::ostream& out) {
  if (slow.rows.size() != fast.rows.size())
    throw std::invalid_argument("coupled csv: log length mismatch");
  const int dx = slow.dimension();
  const int dy = fast.dimension();

  out << "n,tau_bar,rho_bar";
  for (int c = 0; c < dx; ++c) out << ",x_" << c + 1;
  for (int c = 0; c < dy; ++c) out << ",y_" << c + 1;
  out << ",ratio\n";

  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (std::size_t k = 0; k < slow.rows.size(); ++k) {
    const auto& s = slow.rows[k];
    const auto& f = fast.rows[k];
    out << s.n;
    put(s.tau_bar);
    put(f.tau_bar);
    for (int c = 0; c < dx; ++c) put(s.x[c]);
    for (int c = 0; c < dy; ++c) put(f.x[c]);
    put(k == 0 ? 0.0 : ratio.at(static_cast<std::size_t>(s.n) - 1));
    out << '\n';
  }
}

}  // namespace asadi
