#include "asadi/stepsize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asadi {

Schedule::Schedule(ScheduleFamily family, double p, double q)
    : family_(family), p_(p), q_(q) {}

Schedule Schedule::power(double p) {
  if (!(p > 0.5 && p <= 1.0))
    throw std::invalid_argument("power schedule: exponent must lie in (0.5, 1]");
  return Schedule(ScheduleFamily::Power, p, 0.0);
}

Schedule Schedule::power_log(double p, double q) {
  if (!(p > 0.5 && p <= 1.0))
    throw std::invalid_argument("power-log schedule: exponent must lie in (0.5, 1]");
  if (q < 0.0)
    throw std::invalid_argument("power-log schedule: log exponent must be >= 0");
  if (p == 1.0 && q > 1.0)
    throw std::invalid_argument(
        "power-log schedule: p = 1 with q > 1 has summable steps");
  return Schedule(ScheduleFamily::PowerLog, p, q);
}

double Schedule::eval(long long n) const {
  if (n < 1) throw std::invalid_argument("schedule is 1-indexed: n >= 1 required");
  const double nd = static_cast<double>(n);
  double a = std::pow(nd, -p_);
  if (family_ == ScheduleFamily::PowerLog && q_ > 0.0)
    a *= std::pow(std::max(std::log(nd), 1.0), -q_);
  return a;
}

void CounterVector::increment(const std::vector<int>& update_set) {
  for (int i : update_set) {
    if (i < 0 || i >= size())
      throw std::invalid_argument("counter increment: component out of range");
    ++counts[static_cast<std::size_t>(i)];
  }
}

long long CounterVector::total() const {
  long long s = 0;
  for (long long c : counts) s += c;
  return s;
}

AsyncStepRecord async_step(const Schedule& schedule, const CounterVector& counters,
                           const std::vector<int>& update_set) {
  if (update_set.empty())
    throw std::invalid_argument(
        "async_step: empty update set (the scheduler must update at least one "
        "component per iteration)");

  AsyncStepRecord rec;
  rec.mu = Eigen::VectorXd::Zero(counters.size());

  double bar = 0.0;
  for (int i : update_set) {
    if (i < 0 || i >= counters.size())
      throw std::invalid_argument("async_step: component out of range");
    const long long nu = counters.counts[static_cast<std::size_t>(i)];
    if (nu < 1)
      throw std::invalid_argument(
          "async_step: counters must include the current update (nu >= 1)");
    bar = std::max(bar, schedule.eval(nu));
  }
  rec.bar_alpha = bar;
  for (int i : update_set)
    rec.mu[i] = schedule.eval(counters.counts[static_cast<std::size_t>(i)]) / bar;
  return rec;
}

RatioBound ratio_bound(const Schedule& schedule, double x, long long n_max) {
  if (!(x > 0.0 && x < 1.0))
    throw std::invalid_argument("ratio_bound: x must lie in (0, 1)");
  if (n_max < 2) throw std::invalid_argument("ratio_bound: n_max >= 2 required");

  RatioBound best;
  for (long long n = 2; n <= n_max; ++n) {
    const auto xn = std::max<long long>(
        1, static_cast<long long>(std::floor(x * static_cast<double>(n))));
    const double r = schedule.eval(xn) / schedule.eval(n);
    if (r > best.value) {
      best.value = r;
      best.at_n = n;
    }
  }
  return best;
}

double epsilon_lower_bound(const Schedule& schedule, double eta, long long n_max) {
  if (!(eta > 0.0 && eta < 1.0))
    throw std::invalid_argument("epsilon_lower_bound: eta must lie in (0, 1)");
  return eta / ratio_bound(schedule, eta, n_max).value;
}

}  // namespace asadi
