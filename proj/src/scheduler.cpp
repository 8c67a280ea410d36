#include "asadi/scheduler.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <stdexcept>

#include "asadi/errors.hpp"

namespace asadi {

UpdateFamily UpdateFamily::make(int num_components, std::vector<std::vector<int>> subsets) {
  if (num_components <= 0)
    throw std::invalid_argument("update family: need at least one component");
  if (subsets.empty())
    throw std::invalid_argument("update family: need at least one subset");

  UpdateFamily fam;
  fam.num_components = num_components;
  std::set<std::vector<int>> seen;
  for (auto& s : subsets) {
    if (s.empty()) throw std::invalid_argument("update family: empty subset");
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (int i : s)
      if (i < 0 || i >= num_components)
        throw std::invalid_argument("update family: component out of range");
    if (!seen.insert(s).second)
      throw std::invalid_argument("update family: duplicate subset");
  }
  fam.subsets = std::move(subsets);

  fam.component_cover.assign(static_cast<std::size_t>(num_components), {});
  for (int j = 0; j < fam.size(); ++j)
    for (int i : fam.subsets[static_cast<std::size_t>(j)])
      fam.component_cover[static_cast<std::size_t>(i)].push_back(j);
  for (int i = 0; i < num_components; ++i)
    if (fam.component_cover[static_cast<std::size_t>(i)].empty())
      throw AssumptionError("(A4)(b)", "component " + std::to_string(i) +
                                           " is covered by no subset of the update family");
  return fam;
}

UpdateFamily UpdateFamily::singletons(int num_components) {
  std::vector<std::vector<int>> subs;
  for (int i = 0; i < num_components; ++i) subs.push_back({i});
  return make(num_components, std::move(subs));
}

UpdateFamily UpdateFamily::all_at_once(int num_components) {
  std::vector<int> all(static_cast<std::size_t>(num_components));
  std::iota(all.begin(), all.end(), 0);
  return make(num_components, {all});
}

TransitionKernel TransitionKernel::constant(const Eigen::MatrixXd& rows) {
  if (rows.rows() != rows.cols())
    throw std::invalid_argument("constant kernel: matrix must be square");
  TransitionKernel k;
  Eigen::MatrixXd m = rows;
  k.probability_of = [m](int current, const Eigen::VectorXd&) -> Eigen::VectorXd {
    return m.row(current).transpose();
  };
  return k;
}

Eigen::VectorXd kernel_row(const TransitionKernel& kernel, int current,
                           const Eigen::VectorXd& x, int family_size) {
  if (!kernel.probability_of)
    throw std::invalid_argument("transition kernel has no probability function");
  if (current < 0 || current >= family_size)
    throw std::invalid_argument("transition kernel: subset index out of range");

  Eigen::VectorXd row = kernel.probability_of(current, x);
  if (row.size() != family_size)
    throw std::runtime_error("transition kernel row has wrong length");
  double sum = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    if (row[j] < -1e-12 || !std::isfinite(row[j]))
      throw std::runtime_error("transition kernel row has an invalid entry");
    if (row[j] < 0.0) row[j] = 0.0;
    sum += row[j];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("transition kernel row does not sum to 1 (off by " +
                             std::to_string(sum - 1.0) + ")");
  return row;
}

int step(const TransitionKernel& kernel, const UpdateFamily& family, int current,
         const Eigen::VectorXd& x, Rng& rng) {
  const Eigen::VectorXd row = kernel_row(kernel, current, x, family.size());
  const double u = rng.uniform();
  double acc = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    acc += row[j];
    if (u < acc) return j;
  }
  return static_cast<int>(row.size()) - 1;
}

namespace {

std::vector<std::vector<int>> support_graph(const TransitionKernel& kernel,
                                            const UpdateFamily& family,
                                            const Eigen::VectorXd& x) {
  const int m = family.size();
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(m));
  for (int u = 0; u < m; ++u) {
    const Eigen::VectorXd row = kernel_row(kernel, u, x, m);
    for (int v = 0; v < m; ++v)
      if (row[v] > 0.0) adj[static_cast<std::size_t>(u)].push_back(v);
  }
  return adj;
}

std::vector<bool> reachable(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<bool> seen(adj.size(), false);
  std::deque<int> queue{start};
  seen[static_cast<std::size_t>(start)] = true;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<std::size_t>(u)])
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = true;
        queue.push_back(v);
      }
  }
  return seen;
}

}  // namespace

void validate_chain(const TransitionKernel& kernel, const UpdateFamily& family,
                    const Eigen::VectorXd& x) {
  const int m = family.size();
  const auto adj = support_graph(kernel, family, x);

  std::vector<std::vector<int>> radj(static_cast<std::size_t>(m));
  for (int u = 0; u < m; ++u)
    for (int v : adj[static_cast<std::size_t>(u)])
      radj[static_cast<std::size_t>(v)].push_back(u);

  const auto fwd = reachable(adj, 0);
  const auto bwd = reachable(radj, 0);
  for (int u = 0; u < m; ++u)
    if (!fwd[static_cast<std::size_t>(u)] || !bwd[static_cast<std::size_t>(u)])
      throw AssumptionError("(A4)(b)",
                            "update chain support graph is reducible (subset " +
                                std::to_string(u) + " not in the recurrent class)");

  // Period = gcd over edges (u,v) of level(u) + 1 - level(v), levels from a BFS
  // tree; exact for strongly connected graphs.
  std::vector<long long> level(static_cast<std::size_t>(m), -1);
  std::deque<int> queue{0};
  level[0] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<std::size_t>(u)])
      if (level[static_cast<std::size_t>(v)] < 0) {
        level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
        queue.push_back(v);
      }
  }
  long long g = 0;
  for (int u = 0; u < m; ++u)
    for (int v : adj[static_cast<std::size_t>(u)]) {
      const long long d = level[static_cast<std::size_t>(u)] + 1 -
                          level[static_cast<std::size_t>(v)];
      g = std::gcd(g, std::abs(d));
    }
  if (g != 1)
    throw AssumptionError("(A4)(b)", "update chain is periodic with period " +
                                         std::to_string(g));
}

Eigen::VectorXd stationary_distribution(const TransitionKernel& kernel,
                                        const UpdateFamily& family,
                                        const Eigen::VectorXd& x) {
  validate_chain(kernel, family, x);
  const int m = family.size();

  Eigen::MatrixXd P(m, m);
  for (int u = 0; u < m; ++u)
    P.row(u) = kernel_row(kernel, u, x, m).transpose();

  // Balance equations (P^T - I) pi = 0 with one row replaced by normalization.
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(m, m);
  A.row(m - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b[m - 1] = 1.0;

  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  pi /= pi.sum();

  const double residual = (P.transpose() * pi - pi).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10)
    throw std::runtime_error("stationary distribution solve failed: residual " +
                             std::to_string(residual));
  for (int j = 0; j < m; ++j)
    if (pi[j] <= 0.0)
      throw std::runtime_error(
          "stationary distribution has a non-positive entry; chain validation "
          "should have caught this");
  return pi;
}

double min_update_proportion(const TransitionKernel& kernel, const UpdateFamily& family,
                             const std::vector<Eigen::VectorXd>& x_grid) {
  if (x_grid.empty())
    throw std::invalid_argument("min_update_proportion: empty iterate grid");

  double eta = std::numeric_limits<double>::infinity();
  for (const auto& x : x_grid) {
    const Eigen::VectorXd pi = stationary_distribution(kernel, family, x);
    for (int i = 0; i < family.num_components; ++i) {
      double mass = 0.0;
      for (int j : family.component_cover[static_cast<std::size_t>(i)]) mass += pi[j];
      eta = std::min(eta, mass);
    }
  }
  return eta;
}

OccupancyRecord occupancy(const UpdateFamily& family, const std::vector<int>& subset_history) {
  if (subset_history.empty())
    throw std::invalid_argument("occupancy: run length must be >= 1");

  std::vector<long long> counts(static_cast<std::size_t>(family.size()), 0);
  for (int j : subset_history) {
    if (j < 0 || j >= family.size())
      throw std::invalid_argument("occupancy: subset index out of range");
    ++counts[static_cast<std::size_t>(j)];
  }

  const auto n = static_cast<double>(subset_history.size());
  OccupancyRecord rec;
  rec.w = Eigen::VectorXd::Zero(family.size());
  for (int j = 0; j < family.size(); ++j)
    rec.w[j] = static_cast<double>(counts[static_cast<std::size_t>(j)]) / n;

  rec.nu_fraction = Eigen::VectorXd::Zero(family.num_components);
  for (int i = 0; i < family.num_components; ++i) {
    long long nu = 0;
    for (int j : family.component_cover[static_cast<std::size_t>(i)])
      nu += counts[static_cast<std::size_t>(j)];
    rec.nu_fraction[i] = static_cast<double>(nu) / n;
  }
  return rec;
}

double lipschitz_probe(const TransitionKernel& kernel, const UpdateFamily& family,
                       const std::vector<Eigen::VectorXd>& x_grid) {
  if (x_grid.size() < 2)
    throw std::invalid_argument("lipschitz_probe: need at least two grid points");

  const int m = family.size();
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < x_grid.size(); ++k) {
    const double dx = (x_grid[k + 1] - x_grid[k]).norm();
    if (dx == 0.0) continue;
    double dp = 0.0;
    for (int u = 0; u < m; ++u) {
      const Eigen::VectorXd r0 = kernel_row(kernel, u, x_grid[k], m);
      const Eigen::VectorXd r1 = kernel_row(kernel, u, x_grid[k + 1], m);
      dp = std::max(dp, (r1 - r0).lpNorm<1>());
    }
    worst = std::max(worst, dp / dx);
  }
  return worst;
}

}  // namespace asadi
