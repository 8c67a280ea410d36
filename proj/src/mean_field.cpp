#include "asadi/mean_field.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asadi {

Eigen::VectorXd select(const SetValuedField& field, const Eigen::VectorXd& x,
                       TiePolicy policy, Rng* rng) {
  if (!field.select_fn)
    throw std::invalid_argument("set-valued field has no selection oracle");
  if (x.size() != field.dimension)
    throw std::invalid_argument("select: iterate dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("select: non-finite iterate");
  if (policy == TiePolicy::RandomVertex && rng == nullptr)
    throw std::invalid_argument("select: random tie policy needs an rng stream");
  return field.select_fn(x, policy, rng);
}

OmegaBox OmegaBox::make(double epsilon, int dimension) {
  std::vector<std::vector<int>> blocks;
  for (int c = 0; c < dimension; ++c) blocks.push_back({c});
  return with_blocks(epsilon, dimension, std::move(blocks));
}

OmegaBox OmegaBox::with_blocks(double epsilon, int dimension,
                               std::vector<std::vector<int>> blocks) {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("omega box: epsilon must lie in (0, 1]");
  if (dimension <= 0) throw std::invalid_argument("omega box: empty dimension");

  std::vector<int> owner(static_cast<std::size_t>(dimension), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].empty()) throw std::invalid_argument("omega box: empty block");
    for (int c : blocks[b]) {
      if (c < 0 || c >= dimension)
        throw std::invalid_argument("omega box: coordinate out of range");
      if (owner[static_cast<std::size_t>(c)] >= 0)
        throw std::invalid_argument("omega box: coordinate in two blocks");
      owner[static_cast<std::size_t>(c)] = static_cast<int>(b);
    }
  }
  for (int c = 0; c < dimension; ++c)
    if (owner[static_cast<std::size_t>(c)] < 0)
      throw std::invalid_argument("omega box: coordinate not covered by a block");

  OmegaBox box;
  box.epsilon = epsilon;
  box.dimension = dimension;
  box.blocks = std::move(blocks);
  return box;
}

Eigen::VectorXd OmegaBox::corner(std::uint64_t mask) const {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(dimension);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (mask >> b & 1ULL)
      for (int c : blocks[b]) w[c] = epsilon;
  return w;
}

Eigen::VectorXd OmegaBox::random_interior(Rng& rng) const {
  Eigen::VectorXd w(dimension);
  for (const auto& block : blocks) {
    const double v = rng.uniform(epsilon, 1.0);
    for (int c : block) w[c] = v;
  }
  return w;
}

Eigen::VectorXd scale(const OmegaBox& box, const Eigen::VectorXd& omega_diag,
                      const Eigen::VectorXd& f) {
  if (omega_diag.size() != box.dimension || f.size() != box.dimension)
    throw std::invalid_argument("scale: dimension mismatch");
  for (int c = 0; c < box.dimension; ++c)
    if (omega_diag[c] < box.epsilon - 1e-12 || omega_diag[c] > 1.0 + 1e-12)
      throw std::invalid_argument("scale: omega entry outside [epsilon, 1]");
  return omega_diag.cwiseProduct(f);
}

namespace {

// Projection of v onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const int m = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (int j = 0; j < m; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double t = (css - 1.0) / (j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) {
      rho = j + 1;
      theta = t;
    }
  }
  (void)rho;
  return (v.array() - theta).cwiseMax(0.0);
}

}  // namespace

double hull_membership_residual(const std::vector<Eigen::VectorXd>& vertices,
                                const Eigen::VectorXd& f) {
  if (vertices.empty())
    throw std::invalid_argument("hull membership: empty vertex list");
  const int d = static_cast<int>(f.size());
  const int m = static_cast<int>(vertices.size());
  if (m == 1) return (vertices[0] - f).norm();

  Eigen::MatrixXd v(d, m);
  for (int j = 0; j < m; ++j) v.col(j) = vertices[static_cast<std::size_t>(j)];

  // Affine solve; exact when the vertices are affinely independent (the case
  // for all built-in fields).
  Eigen::MatrixXd a(d + 1, m);
  a.topRows(d) = v;
  a.row(d).setOnes();
  Eigen::VectorXd rhs(d + 1);
  rhs.head(d) = f;
  rhs[d] = 1.0;
  Eigen::VectorXd lambda = a.colPivHouseholderQr().solve(rhs);
  if (lambda.minCoeff() >= -1e-9) {
    lambda = lambda.cwiseMax(0.0);
    const double s = lambda.sum();
    if (s > 0.0) lambda /= s;
    return (v * lambda - f).norm();
  }

  // Projected gradient on 0.5 ||V lambda - f||^2 over the simplex.
  const Eigen::MatrixXd g = v.transpose() * v;
  const Eigen::VectorXd c = v.transpose() * f;
  double lip = g.operatorNorm();
  if (lip <= 0.0) lip = 1.0;
  Eigen::VectorXd lam = Eigen::VectorXd::Constant(m, 1.0 / m);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50000; ++it) {
    const Eigen::VectorXd grad = g * lam - c;
    lam = project_simplex(lam - grad / lip);
    const double obj = (v * lam - f).squaredNorm();
    if (prev - obj < 1e-30 && it > 10) break;
    prev = obj;
  }
  return (v * lam - f).norm();
}

SaMapReport check_sa_map(const SetValuedField& field,
                         const std::vector<Eigen::VectorXd>& probe_points) {
  if (!field.has_vertices())
    throw std::invalid_argument(
        "check_sa_map needs a finite vertex description at the probe points");

  SaMapReport report;
  for (const auto& x : probe_points) {
    SaMapProbe probe;
    probe.x = x;
    const auto verts = field.vertices_fn(x);
    if (verts.empty())
      throw std::runtime_error("check_sa_map: field returned an empty vertex set");

    double vmax = 0.0;
    for (const auto& z : verts) vmax = std::max(vmax, z.norm());
    probe.growth_ratio = vmax / (1.0 + x.norm());
    probe.membership_residual =
        hull_membership_residual(verts, select(field, x, TiePolicy::LowestIndex));

    report.max_growth_ratio = std::max(report.max_growth_ratio, probe.growth_ratio);
    report.max_membership_residual =
        std::max(report.max_membership_residual, probe.membership_residual);
    report.probes.push_back(std::move(probe));
  }

  for (std::size_t k = 0; k + 1 < probe_points.size(); ++k) {
    const auto va = field.vertices_fn(probe_points[k]);
    const auto vb = field.vertices_fn(probe_points[k + 1]);
    SaMapUscProbe usc;
    usc.dx = (probe_points[k + 1] - probe_points[k]).norm();
    double h = 0.0;
    for (const auto& z : va) h = std::max(h, hull_membership_residual(vb, z));
    for (const auto& z : vb) h = std::max(h, hull_membership_residual(va, z));
    usc.hausdorff = h;
    report.usc.push_back(usc);
  }

  report.growth_ok = report.max_growth_ratio <= field.growth_constant + 1e-12;
  report.membership_ok = report.max_membership_residual <= 1e-9;
  return report;
}

// Rectangular matrices are allowed: the field then maps R^{cols} -> R^{rows},
// which is how the coupled process consumes fields of the joint iterate.
SetValuedField linear_field(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (a.rows() != b.size())
    throw std::invalid_argument("linear field: dimension mismatch");
  SetValuedField field;
  field.dimension = static_cast<int>(a.cols());
  field.growth_constant = std::max(a.operatorNorm(), b.norm()) + 1e-12;
  Eigen::MatrixXd am = a;
  Eigen::VectorXd bv = b;
  field.select_fn = [am, bv](const Eigen::VectorXd& x, TiePolicy, Rng*) {
    return Eigen::VectorXd(am * x + bv);
  };
  field.vertices_fn = [am, bv](const Eigen::VectorXd& x) {
    return std::vector<Eigen::VectorXd>{am * x + bv};
  };
  return field;
}

SetValuedField neg_identity_field(int dimension) {
  return linear_field(-Eigen::MatrixXd::Identity(dimension, dimension),
                      Eigen::VectorXd::Zero(dimension));
}

SetValuedField neg_sign_field(int dimension, double kink_tol) {
  SetValuedField field;
  field.dimension = dimension;
  field.growth_constant = std::sqrt(static_cast<double>(dimension));
  field.select_fn = [kink_tol](const Eigen::VectorXd& x, TiePolicy policy,
                               Rng* rng) -> Eigen::VectorXd {
    Eigen::VectorXd f(x.size());
    for (int c = 0; c < x.size(); ++c) {
      if (x[c] > kink_tol)
        f[c] = -1.0;
      else if (x[c] < -kink_tol)
        f[c] = 1.0;
      else if (policy == TiePolicy::RandomVertex)
        f[c] = rng->uniform(-1.0, 1.0);
      else
        f[c] = 0.0;  // hull midpoint at the kink
    }
    return f;
  };
  field.vertices_fn = [kink_tol](const Eigen::VectorXd& x) {
    std::vector<int> kinks;
    for (int c = 0; c < x.size(); ++c)
      if (std::abs(x[c]) <= kink_tol) kinks.push_back(c);
    if (kinks.size() > 16)
      throw std::runtime_error("neg_sign_field: too many simultaneous kinks");
    Eigen::VectorXd base(x.size());
    for (int c = 0; c < x.size(); ++c)
      base[c] = x[c] > kink_tol ? -1.0 : (x[c] < -kink_tol ? 1.0 : 0.0);
    std::vector<Eigen::VectorXd> verts;
    const std::uint64_t combos = 1ULL << kinks.size();
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
      Eigen::VectorXd z = base;
      for (std::size_t b = 0; b < kinks.size(); ++b)
        z[kinks[b]] = (mask >> b & 1ULL) ? 1.0 : -1.0;
      verts.push_back(std::move(z));
    }
    return verts;
  };
  return field;
}

SetValuedField projection_field(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size() || (hi - lo).minCoeff() < 0.0)
    throw std::invalid_argument("projection field: invalid box");
  SetValuedField field;
  field.dimension = static_cast<int>(lo.size());
  Eigen::VectorXd l = lo, h = hi;
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(lo.size()).cwiseMax(l).cwiseMin(h);
  field.growth_constant = std::max(1.0, origin.norm()) + 1e-12;
  field.select_fn = [l, h](const Eigen::VectorXd& x, TiePolicy, Rng*) {
    return Eigen::VectorXd(x.cwiseMax(l).cwiseMin(h) - x);
  };
  field.vertices_fn = [l, h](const Eigen::VectorXd& x) {
    return std::vector<Eigen::VectorXd>{x.cwiseMax(l).cwiseMin(h) - x};
  };
  return field;
}

}  // namespace asadi
