#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "conectl/errors.hpp"

namespace conectl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kTolGeom = 1e-9;

// Closed convex polyhedral cone with both representations supplied:
// generators (V) and inward unit facet normals (H). Membership tests use the
// H-representation; policy and sampling code uses the generators. The two
// representations are cross-checked at construction and the cone must have
// nonempty interior.
class Cone {
 public:
  Cone(int dim, std::vector<Vec> generators, std::vector<Vec> facet_normals,
       double tol = kTolGeom);

  int dim() const { return dim_; }
  const std::vector<Vec>& generators() const { return generators_; }
  const std::vector<Vec>& normals() const { return normals_; }

  // n.x >= -tol for every facet normal n
  bool contains(const Vec& x, double tol = kTolGeom) const;

  // signed distance proxy: min over normals of n.x (>0 strictly inside)
  double facet_margin(const Vec& x) const;

  // cached strictly interior unit vector found at construction
  const Vec& interior_point() const { return interior_; }

  // uniform sample of the cone near the unit ball, deterministic in (seed, i)
  Vec sample(std::uint64_t seed, std::uint64_t index) const;

  static Cone orthant(int dim);
  static Cone half_line() { return orthant(1); }

 private:
  int dim_;
  std::vector<Vec> generators_;
  std::vector<Vec> normals_;
  Vec interior_;
};

// The fixed direction data extracted from the cones: a unit u0 interior to
// both U = G*Y and X with y0 in Y mapping onto it, plus the uniform
// acuteness certificates (u1, y1, a0).
struct ConeVectors {
  Vec u0_hat;
  Vec y0_hat;
  Vec u1_hat;
  Vec y1_hat;
  double a0 = 0.0;
};

// Checks the standing assumptions for the data (X, Y, G) and returns the
// certificate vectors, with a0 maximized over a deterministic candidate set
// (normal sums, generator means and a seeded unit-sphere sample).
// Throws AssumptionViolated naming the failed condition.
ConeVectors validate_assumptions(const Cone& X, const Cone& Y, const Mat& G,
                                 int sphere_samples = 1000);

struct AlphaProjection {
  double alpha;  // max over normals n of (-xi.n)/(u0.n)
  Vec pi;        // xi + alpha*u0
};

// Projection onto the cone boundary along the interior direction u0.
// Requires n.u0 > 0 for every facet normal.
AlphaProjection alpha_projection(const Cone& X, const Vec& u0_hat, const Vec& xi);

// Lipschitz constant of xi -> alpha(xi): max over normals of 1/(u0.n).
double alpha_lipschitz(const Cone& X, const Vec& u0_hat);

// First scaling rho > 0 with (x + rho*v).u1 = r. Empty when v.u1 <= 0
// (the ray never reaches the truncation surface).
std::optional<double> gamma_r(const Vec& x, const Vec& v, double r, const Vec& u1_hat);

// Linear right inverse of G on the simplicial cone spanned by u_basis:
// rho(u) = sum_i alpha_i(u) y_i where u = sum_i alpha_i u_i, alpha_i >= 0.
class RhoMap {
 public:
  RhoMap(const Mat& G, std::vector<Vec> u_basis, std::vector<Vec> y_basis,
         double tol = kTolGeom);

  // throws NotInCone when the solved coordinates are negative beyond tol
  Vec apply(const Vec& u) const;

  double operator_norm() const { return op_norm_; }

 private:
  Mat basis_inv_;  // inverse of [u_1 ... u_k]
  Mat y_cols_;     // [y_1 ... y_k]
  double tol_;
  double op_norm_;
};

}  // namespace conectl
