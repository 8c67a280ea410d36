#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "asadi/rng.hpp"

namespace asadi {

enum class TiePolicy { LowestIndex, RandomVertex };

// A set-valued mean field F(x), represented by a measurable selection oracle
// plus, when the sets are polytopal, a finite vertex description. Every
// selection must satisfy the linear growth bound ||f|| <= c (1 + ||x||).
struct SetValuedField {
  int dimension = 0;
  double growth_constant = 1.0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x, TiePolicy, Rng*)> select_fn;
  std::function<std::vector<Eigen::VectorXd>(const Eigen::VectorXd& x)> vertices_fn;

  bool has_vertices() const { return static_cast<bool>(vertices_fn); }
};

Eigen::VectorXd select(const SetValuedField& field, const Eigen::VectorXd& x,
                       TiePolicy policy = TiePolicy::LowestIndex, Rng* rng = nullptr);

// Diagonal scaling box: matrices diag(omega) with omega_i in [epsilon, 1].
// Coordinates may be tied into blocks (one omega value per block), which is
// how per-group update patterns enter the scaled mean field.
struct OmegaBox {
  double epsilon = 1.0;
  int dimension = 0;
  std::vector<std::vector<int>> blocks;  // block -> coordinates; singletons by default

  static OmegaBox make(double epsilon, int dimension);
  static OmegaBox with_blocks(double epsilon, int dimension,
                              std::vector<std::vector<int>> blocks);

  int num_blocks() const { return static_cast<int>(blocks.size()); }
  // Corner of the box: block b gets epsilon if bit b of mask is set, else 1.
  Eigen::VectorXd corner(std::uint64_t mask) const;
  Eigen::VectorXd random_interior(Rng& rng) const;
};

// Componentwise omega .* f with omega validated against the box.
Eigen::VectorXd scale(const OmegaBox& box, const Eigen::VectorXd& omega_diag,
                      const Eigen::VectorXd& f);

// F-bar(x) = Omega box applied to F(x).
struct ScaledField {
  SetValuedField base;
  OmegaBox box;
};

// Distance from f to the convex hull of the given vertices (0 when inside, up
// to solver tolerance). Direct affine solve with a projected-gradient fallback.
double hull_membership_residual(const std::vector<Eigen::VectorXd>& vertices,
                                const Eigen::VectorXd& f);

// Stochastic-approximation-map probes: vertex hulls (compact convex values),
// growth bound, selection membership and an upper semi-continuity probe along
// consecutive probe pairs. Diagnostics only; violations are reported, not thrown.
struct SaMapProbe {
  Eigen::VectorXd x;
  double growth_ratio = 0.0;          // max vertex norm / (1 + ||x||)
  double membership_residual = 0.0;   // select(x) against the vertex hull
};
struct SaMapUscProbe {
  double dx = 0.0;         // ||x - x'||
  double hausdorff = 0.0;  // Hausdorff distance of the vertex hulls
};
struct SaMapReport {
  std::vector<SaMapProbe> probes;
  std::vector<SaMapUscProbe> usc;
  double max_growth_ratio = 0.0;
  double max_membership_residual = 0.0;
  bool growth_ok = true;      // max_growth_ratio <= growth_constant
  bool membership_ok = true;  // max_membership_residual <= 1e-9
};
SaMapReport check_sa_map(const SetValuedField& field,
                         const std::vector<Eigen::VectorXd>& probe_points);

// Built-in field library.
SetValuedField linear_field(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
SetValuedField neg_identity_field(int dimension);
// Componentwise -sign(x); the interval [-1, 1] at a kink, where the selection
// policy returns the hull midpoint 0.
SetValuedField neg_sign_field(int dimension, double kink_tol = 1e-9);
// Drift toward a box: f = clamp(x, lo, hi) - x.
SetValuedField projection_field(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

}  // namespace asadi
