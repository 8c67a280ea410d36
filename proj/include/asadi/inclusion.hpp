#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "asadi/engine.hpp"
#include "asadi/mean_field.hpp"

namespace asadi {

// How the Euler sampler picks (omega, f) selections along a path.
//   FixedOmega:         every path uses the same configured omega.
//   PerStepRandomOmega: each path redraws omega (and random vertices) per step.
//   CornerSweep:        path j fixes the j-th corner of the omega box; paths
//                       beyond the corner count use random interior draws.
enum class SelectionPolicy { FixedOmega, PerStepRandomOmega, CornerSweep };

struct FlowSampler {
  ScaledField field;
  double dt = 0.01;
  double horizon = 10.0;
  SelectionPolicy policy = SelectionPolicy::CornerSweep;
  Eigen::VectorXd fixed_omega;  // FixedOmega only; empty = all ones
  TiePolicy tie_policy = TiePolicy::LowestIndex;
};

struct FlowPath {
  std::vector<Eigen::VectorXd> points;  // at times 0, dt, 2 dt, ...
  bool blew_up = false;
};
using FlowBundle = std::vector<FlowPath>;

// Forward Euler on x' = omega .* f, f in F(x): a finite sample of the flow.
// Paths whose norm exceeds 10 c (1 + ||x0||) stop with the blow-up flag set.
FlowBundle euler_flow(const FlowSampler& sampler, const Eigen::VectorXd& x0,
                      int n_selections, Rng& rng);

// Asymptotic pseudo-trajectory probe: for each probe time t,
//   delta(t) = max over the s-grid of the min over bundle paths of
//              || x_bar(t + s) - path(s) ||,
// with the bundle restarted from x_bar(t). Min-over-bundle makes this an
// optimistic surrogate of the distance to the true flow; the bundle size is
// reported so it can be tightened.
struct AptReport {
  double window = 0.0;
  std::vector<double> probe_times;
  std::vector<double> distances;
  int bundle_size = 0;
};
AptReport apt_distance(const TrajectoryLog& log, const FlowSampler& sampler,
                       const std::vector<double>& probe_times, double window,
                       int n_selections, Rng& rng);

// Windowed partial-sum sups from a logged run, over k in (n, m_bar(tau_n + T)]:
//   noise_sup:         sup_k || sum bar_alpha_{i+1} M_{i+1} V_{i+1} ||
//   selection_gap_sup: sup_k || sum bar_alpha_{i+1} (M_{i+1} - Mtilde_{i+1}) f_i ||
// where Mtilde floors the relative steps at epsilon_hat. A selection gap that
// fails to vanish as n grows flags a mis-chosen epsilon_hat.
struct NoiseSupReport {
  double noise_sup = 0.0;
  double selection_gap_sup = 0.0;
  long long k_end = 0;
};
NoiseSupReport kushner_clark_sup(const TrajectoryLog& log, double window,
                                 long long start_n, double epsilon_hat);

// Exact integral over [t, t + v] of the piecewise-constant relative step size
// u_i(s) = mu_{m_bar(s)+1}(i) of one component.
double relative_step_integral(const TrajectoryLog& log, int component, double t,
                              double v);

// Candidate Lyapunov function for the scaled inclusion x' in Omega . F(x).
struct LyapunovSpec {
  std::function<double(const Eigen::VectorXd&)> w;
  std::function<bool(const Eigen::VectorXd&)> in_target;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;  // null = central FD
};

struct LyapunovProbe {
  Eigen::VectorXd x;
  bool in_target = false;
  double max_inner = 0.0;          // max over omega corners and field vertices
  double min_flow_decrease = 0.0;  // min over bundle paths of W(x) - W(end)
  bool pass = true;
};
struct LyapunovReport {
  std::vector<LyapunovProbe> probes;
  double max_inner_overall = 0.0;
  bool all_pass = true;
};

// At every probe off the target set, checks the inner-product condition
// <grad W(x), omega .* f> <= 1e-8 over omega-box corners and field vertices,
// and that W decreases along sampled Euler paths.
LyapunovReport lyapunov_check(const LyapunovSpec& spec, const FlowSampler& sampler,
                              const std::vector<Eigen::VectorXd>& probes, Rng& rng,
                              int max_corner_samples = 64, int flow_paths = 4);

}  // namespace asadi
