#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "asadi/rng.hpp"

namespace asadi {

// The family of component subsets the update chain moves over, together with
// the cover I(i) = { J in the family : i in J }. Every component must appear
// in at least one subset.
struct UpdateFamily {
  int num_components = 0;
  std::vector<std::vector<int>> subsets;
  std::vector<std::vector<int>> component_cover;

  static UpdateFamily make(int num_components, std::vector<std::vector<int>> subsets);
  static UpdateFamily singletons(int num_components);
  static UpdateFamily all_at_once(int num_components);

  int size() const { return static_cast<int>(subsets.size()); }
};

// Controlled Markov kernel over subset indices. probability_of(current, x)
// must return a probability row for every probed iterate x.
struct TransitionKernel {
  std::function<Eigen::VectorXd(int current, const Eigen::VectorXd& x)> probability_of;
  double lipschitz_probe_step = 1e-3;

  static TransitionKernel constant(const Eigen::MatrixXd& rows);
};

// Fetches and validates one kernel row; rows off by more than 1e-9 from a
// probability vector abort with a kernel-validity error.
Eigen::VectorXd kernel_row(const TransitionKernel& kernel, int current,
                           const Eigen::VectorXd& x, int family_size);

// One chain transition, sampled by inverse CDF from the validated row.
int step(const TransitionKernel& kernel, const UpdateFamily& family, int current,
         const Eigen::VectorXd& x, Rng& rng);

// Support-graph validation at a fixed iterate: strong connectivity plus
// aperiodicity (gcd of cycle lengths via BFS levels). Throws
// AssumptionError("(A4)(b)") on failure.
void validate_chain(const TransitionKernel& kernel, const UpdateFamily& family,
                    const Eigen::VectorXd& x);

// Unique stationary distribution pi_x with pi_x P_x = pi_x, computed by a
// dense linear solve of the balance equations with normalization.
Eigen::VectorXd stationary_distribution(const TransitionKernel& kernel,
                                        const UpdateFamily& family,
                                        const Eigen::VectorXd& x);

// eta = min over grid points x and components i of the stationary mass of the
// subsets covering i. Strictly positive for valid chains.
double min_update_proportion(const TransitionKernel& kernel, const UpdateFamily& family,
                             const std::vector<Eigen::VectorXd>& x_grid);

// Empirical subset frequencies w_n and per-component visit fractions nu_n(i)/n
// for a realized subset-index history.
struct OccupancyRecord {
  Eigen::VectorXd w;
  Eigen::VectorXd nu_fraction;
};
OccupancyRecord occupancy(const UpdateFamily& family, const std::vector<int>& subset_history);

// Largest observed ||P(x) - P(x')||_inf / ||x - x'|| over consecutive grid
// pairs. Diagnostic only; says nothing about unprobed iterates.
double lipschitz_probe(const TransitionKernel& kernel, const UpdateFamily& family,
                       const std::vector<Eigen::VectorXd>& x_grid);

}  // namespace asadi
