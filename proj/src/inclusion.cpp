#include "asadi/inclusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace asadi {

namespace {

long long step_count(double horizon, double dt) {
  if (dt <= 0.0 || dt > 0.1)
    throw std::invalid_argument("flow sampler: dt must lie in (0, 0.1]");
  if (horizon < 0.0) throw std::invalid_argument("flow sampler: negative horizon");
  const auto steps = static_cast<long long>(std::llround(horizon / dt));
  if (std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9)
    throw std::invalid_argument("flow sampler: horizon must be a multiple of dt");
  return steps;
}

}  // namespace

FlowBundle euler_flow(const FlowSampler& sampler, const Eigen::VectorXd& x0,
                      int n_selections, Rng& rng) {
  if (n_selections <= 0)
    throw std::invalid_argument("euler_flow: need at least one selection");
  if (x0.size() != sampler.field.base.dimension)
    throw std::invalid_argument("euler_flow: dimension mismatch");

  const long long steps = step_count(sampler.horizon, sampler.dt);
  const OmegaBox& box = sampler.field.box;
  const double blow_radius =
      x0.norm() + 10.0 * sampler.field.base.growth_constant * (1.0 + x0.norm());
  const int corner_count = box.num_blocks() >= 63 ? -1 : 1 << box.num_blocks();

  FlowBundle bundle;
  for (int p = 0; p < n_selections; ++p) {
    Eigen::VectorXd omega;
    switch (sampler.policy) {
      case SelectionPolicy::FixedOmega:
        omega = sampler.fixed_omega.size() ? sampler.fixed_omega
                                           : Eigen::VectorXd::Ones(x0.size());
        break;
      case SelectionPolicy::CornerSweep:
        if (corner_count > 0 && p < corner_count)
          omega = box.corner(static_cast<std::uint64_t>(p));
        else
          omega = box.random_interior(rng);
        break;
      case SelectionPolicy::PerStepRandomOmega:
        omega = box.random_interior(rng);
        break;
    }

    FlowPath path;
    path.points.reserve(static_cast<std::size_t>(steps) + 1);
    Eigen::VectorXd x = x0;
    path.points.push_back(x);
    for (long long k = 0; k < steps; ++k) {
      const bool random_step = sampler.policy == SelectionPolicy::PerStepRandomOmega;
      if (random_step && k > 0) omega = box.random_interior(rng);
      const Eigen::VectorXd f =
          select(sampler.field.base, x,
                 random_step ? TiePolicy::RandomVertex : sampler.tie_policy, &rng);
      x += sampler.dt * scale(box, omega, f);
      path.points.push_back(x);
      if (x.norm() > blow_radius) {
        path.blew_up = true;
        break;
      }
    }
    bundle.push_back(std::move(path));
  }
  return bundle;
}

AptReport apt_distance(const TrajectoryLog& log, const FlowSampler& sampler,
                       const std::vector<double>& probe_times, double window,
                       int n_selections, Rng& rng) {
  if (log.rows.empty()) throw std::invalid_argument("apt_distance: empty log");
  const double t_end = log.rows.back().tau_bar;
  for (double t : probe_times)
    if (t < 0.0 || t + window > t_end + 1e-12)
      throw std::invalid_argument(
          "apt_distance: probe window extends beyond the logged horizon");

  FlowSampler local = sampler;
  local.horizon = window;
  const long long steps = step_count(window, local.dt);

  AptReport report;
  report.window = window;
  report.bundle_size = n_selections;
  for (double t : probe_times) {
    const Eigen::VectorXd start = interpolate(log, t);
    const FlowBundle bundle = euler_flow(local, start, n_selections, rng);

    double delta = 0.0;
    for (long long k = 0; k <= steps; ++k) {
      const Eigen::VectorXd here = interpolate(log, t + static_cast<double>(k) * local.dt);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& path : bundle) {
        if (static_cast<std::size_t>(k) >= path.points.size()) continue;
        best = std::min(best, (here - path.points[static_cast<std::size_t>(k)]).norm());
      }
      delta = std::max(delta, best);
    }
    report.probe_times.push_back(t);
    report.distances.push_back(delta);
  }
  return report;
}

NoiseSupReport kushner_clark_sup(const TrajectoryLog& log, double window,
                                 long long start_n, double epsilon_hat) {
  if (!log.is_dense())
    throw std::invalid_argument("kushner_clark_sup: needs an unthinned log");
  if (epsilon_hat < 0.0 || epsilon_hat > 1.0)
    throw std::invalid_argument("kushner_clark_sup: epsilon_hat must lie in [0, 1]");
  const long long last = log.rows.back().n;
  if (start_n < 0 || start_n >= last)
    throw std::invalid_argument("kushner_clark_sup: start iteration out of range");

  const double t_end = log.rows[static_cast<std::size_t>(start_n)].tau_bar + window;
  const long long k_end = std::min(last, m_bar(log, t_end));

  const int dim = log.dimension();
  Eigen::VectorXd noise_sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd gap_sum = Eigen::VectorXd::Zero(dim);

  NoiseSupReport report;
  report.k_end = k_end;
  // Row i+1 carries bar_alpha_{i+1}, mu_{i+1}, V_{i+1} and the selection f_i.
  for (long long i = start_n; i < k_end; ++i) {
    const auto& row = log.rows[static_cast<std::size_t>(i + 1)];
    for (int c = 0; c < dim; ++c) {
      const double mu = row.mu[log.component_of[static_cast<std::size_t>(c)]];
      noise_sum[c] += row.alpha_bar * mu * row.noise[c];
      gap_sum[c] += row.alpha_bar * (mu - std::max(mu, epsilon_hat)) * row.f[c];
    }
    report.noise_sup = std::max(report.noise_sup, noise_sum.norm());
    report.selection_gap_sup = std::max(report.selection_gap_sup, gap_sum.norm());
  }
  return report;
}

double relative_step_integral(const TrajectoryLog& log, int component, double t,
                              double v) {
  if (!log.is_dense())
    throw std::invalid_argument("relative_step_integral: needs an unthinned log");
  if (component < 0 || component >= log.num_components())
    throw std::invalid_argument("relative_step_integral: component out of range");
  if (t < 0.0 || v < 0.0 || t + v > log.rows.back().tau_bar + 1e-12)
    throw std::invalid_argument("relative_step_integral: window outside the horizon");

  // u_i is constant equal to mu_{n+1}(i) on [tau_n, tau_{n+1}).
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < log.rows.size(); ++k) {
    const double seg_lo = log.rows[k].tau_bar;
    const double seg_hi = log.rows[k + 1].tau_bar;
    const double overlap = std::min(seg_hi, t + v) - std::max(seg_lo, t);
    if (overlap <= 0.0) continue;
    integral += overlap * log.rows[k + 1].mu[component];
  }
  return integral;
}

LyapunovReport lyapunov_check(const LyapunovSpec& spec, const FlowSampler& sampler,
                              const std::vector<Eigen::VectorXd>& probes, Rng& rng,
                              int max_corner_samples, int flow_paths) {
  if (!spec.w) throw std::invalid_argument("lyapunov_check: missing W");
  if (!spec.in_target)
    throw std::invalid_argument("lyapunov_check: missing target-set test");

  const auto gradient = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (spec.gradient) return spec.gradient(x);
    const double h = 1e-6;
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (int c = 0; c < x.size(); ++c) {
      probe[c] = x[c] + h;
      const double up = spec.w(probe);
      probe[c] = x[c] - h;
      const double down = spec.w(probe);
      probe[c] = x[c];
      g[c] = (up - down) / (2.0 * h);
    }
    return g;
  };

  const OmegaBox& box = sampler.field.box;
  std::vector<Eigen::VectorXd> corners;
  if (box.num_blocks() < 63 &&
      (1LL << box.num_blocks()) <= static_cast<long long>(max_corner_samples)) {
    for (std::uint64_t mask = 0; mask < (1ULL << box.num_blocks()); ++mask)
      corners.push_back(box.corner(mask));
  } else {
    corners.push_back(box.corner(0));  // all ones
    corners.push_back(box.corner(~0ULL));  // all epsilon
    for (int k = 2; k < max_corner_samples; ++k) {
      std::uint64_t mask = rng.next_u64();
      corners.push_back(box.corner(mask));
    }
  }

  LyapunovReport report;
  for (const auto& x : probes) {
    LyapunovProbe probe;
    probe.x = x;
    probe.in_target = spec.in_target(x);
    if (probe.in_target) {
      report.probes.push_back(std::move(probe));
      continue;
    }

    const Eigen::VectorXd g = gradient(x);
    std::vector<Eigen::VectorXd> verts;
    if (sampler.field.base.has_vertices())
      verts = sampler.field.base.vertices_fn(x);
    else
      verts = {select(sampler.field.base, x, sampler.tie_policy, &rng)};

    double max_inner = -std::numeric_limits<double>::infinity();
    for (const auto& f : verts)
      for (const auto& omega : corners)
        max_inner = std::max(max_inner, g.dot(omega.cwiseProduct(f)));
    probe.max_inner = max_inner;

    const double w0 = spec.w(x);
    double min_dec = std::numeric_limits<double>::infinity();
    const FlowBundle bundle = euler_flow(sampler, x, flow_paths, rng);
    for (const auto& path : bundle)
      min_dec = std::min(min_dec, w0 - spec.w(path.points.back()));
    probe.min_flow_decrease = min_dec;

    probe.pass = probe.max_inner <= 1e-8 && probe.min_flow_decrease > 0.0;
    report.max_inner_overall = std::max(report.max_inner_overall, probe.max_inner);
    report.all_pass = report.all_pass && probe.pass;
    report.probes.push_back(std::move(probe));
  }
  return report;
}

}  // namespace asadi
