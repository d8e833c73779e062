#include "conectl/cone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conectl/rng.hpp"

namespace conectl {

namespace {

// deterministic candidate directions on the unit sphere
std::vector<Vec> sphere_candidates(int dim, int n, std::uint64_t seed) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n) + 2 * dim);
  for (int i = 0; i < dim; ++i) {
    Vec e = Vec::Zero(dim);
    e[i] = 1.0;
    out.push_back(e);
    out.push_back(-e);
  }
  CounterRng rng(seed, 0);
  for (int i = 0; i < n; ++i) {
    Vec v(dim);
    for (int d = 0; d < dim; ++d) v[d] = rng.normal();
    const double nrm = v.norm();
    if (nrm > 1e-12) out.push_back(v / nrm);
  }
  return out;
}

Vec normalized_or_throw(const Vec& v, const char* what) {
  const double n = v.norm();
  if (!(n > 1e-14)) throw SpecError(std::string("zero vector supplied for ") + what);
  return v / n;
}

}  // namespace

Cone::Cone(int dim, std::vector<Vec> generators, std::vector<Vec> facet_normals,
           double tol)
    : dim_(dim), generators_(std::move(generators)), normals_(std::move(facet_normals)) {
  if (dim_ <= 0) throw SpecError("cone dimension must be positive");
  if (generators_.empty() || normals_.empty())
    throw SpecError("cone needs both generators and facet normals");
  for (auto& g : generators_)
    if (g.size() != dim_) throw SpecError("cone generator has wrong dimension");
  for (auto& n : normals_) {
    if (n.size() != dim_) throw SpecError("cone facet normal has wrong dimension");
    n = normalized_or_throw(n, "facet normal");
  }
  // V- and H-representations must agree on the generators
  for (const auto& g : generators_)
    for (const auto& n : normals_)
      if (n.dot(g) < -tol * (1.0 + g.norm()))
        throw SpecError("cone generator violates a facet normal: representations inconsistent");

  // nonempty interior: some direction clears every facet strictly
  double best = -1.0;
  Vec best_p = Vec::Zero(dim_);
  Vec mean = Vec::Zero(dim_);
  for (const auto& g : generators_) {
    const double n = g.norm();
    if (n > 1e-14) mean += g / n;
  }
  std::vector<Vec> cands = sphere_candidates(dim_, 512, 0x636f6e65ull);
  if (mean.norm() > 1e-14) cands.push_back(mean / mean.norm());
  for (const auto& p : cands) {
    const double m = facet_margin(p);
    if (m > best) {
      best = m;
      best_p = p;
    }
  }
  if (!(best > tol)) throw SpecError("cone has empty interior (degenerate input rejected)");
  interior_ = best_p;
}

bool Cone::contains(const Vec& x, double tol) const {
  if (x.size() != dim_) throw SpecError("contains: point has wrong dimension");
  for (const auto& n : normals_)
    if (n.dot(x) < -tol) return false;
  return true;
}

double Cone::facet_margin(const Vec& x) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& n : normals_) m = std::min(m, n.dot(x));
  return m;
}

Vec Cone::sample(std::uint64_t seed, std::uint64_t index) const {
  CounterRng rng(seed, index);
  Vec x = Vec::Zero(dim_);
  for (const auto& g : generators_) x += rng.uniform() * g;
  return x;
}

Cone Cone::orthant(int dim) {
  std::vector<Vec> gens, norms;
  for (int i = 0; i < dim; ++i) {
    Vec e = Vec::Zero(dim);
    e[i] = 1.0;
    gens.push_back(e);
    norms.push_back(e);
  }
  return Cone(dim, std::move(gens), std::move(norms));
}

ConeVectors validate_assumptions(const Cone& X, const Cone& Y, const Mat& G,
                                 int sphere_samples) {
  const int k = static_cast<int>(G.rows());
  const int p = static_cast<int>(G.cols());
  if (X.dim() != k) throw SpecError("G row count must match dim of X");
  if (Y.dim() != p) throw SpecError("G column count must match dim of Y");
  if (k > p) throw AssumptionViolated("rank", "need k <= p");
  Eigen::ColPivHouseholderQR<Mat> qr(G);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw AssumptionViolated("rank", "G is rank deficient (rank < k)");

  ConeVectors out;

  // u0: image of a strictly interior y under G, maximizing the X-facet margin.
  // G is surjective, so G maps the interior of Y into the interior of U = G*Y.
  {
    std::vector<Vec> y_cands = sphere_candidates(p, sphere_samples, 0x75305f68ull);
    y_cands.push_back(Y.interior_point());
    double best = -std::numeric_limits<double>::infinity();
    Vec best_y;
    for (const auto& yc : y_cands) {
      const double ym = Y.facet_margin(yc);
      if (!(ym > kTolGeom)) continue;  // need y strictly inside Y
      Vec u = G * yc;
      const double un = u.norm();
      if (un < 1e-12) continue;
      const double margin = X.facet_margin(u / un);
      if (margin > best) {
        best = margin;
        best_y = yc / un;
      }
    }
    if (!(best > kTolGeom))
      throw AssumptionViolated("cone-overlap", "U and the interior of X do not intersect");
    out.u0_hat = G * best_y;
    out.y0_hat = best_y;
    // minimal-norm solve of G*y = u0, kept when it lands inside Y
    Vec ls = G.completeOrthogonalDecomposition().solve(out.u0_hat);
    if (Y.contains(ls, kTolGeom)) out.y0_hat = ls;
  }

  // u1 / y1: maximize the worst-case acuteness over the generator sets.
  auto best_direction = [&](const std::vector<Vec>& gens, const std::vector<Vec>& extra,
                            int dim, std::uint64_t seed) {
    std::vector<Vec> cands = sphere_candidates(dim, sphere_samples, seed);
    for (const auto& e : extra) {
      const double n = e.norm();
      if (n > 1e-14) cands.push_back(e / n);
    }
    double best = -std::numeric_limits<double>::infinity();
    Vec best_w = Vec::Zero(dim);
    for (const auto& w : cands) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& g : gens) {
        const double gn = g.norm();
        if (gn < 1e-14) continue;
        m = std::min(m, g.dot(w) / gn);
      }
      if (m > best) {
        best = m;
        best_w = w;
      }
    }
    return std::make_pair(best_w, best);
  };

  // generators of U are the images of Y's generators
  std::vector<Vec> u_gens;
  for (const auto& g : Y.generators()) {
    Vec u = G * g;
    if (u.norm() > 1e-12) u_gens.push_back(u);
  }
  std::vector<Vec> xu_gens = X.generators();
  xu_gens.insert(xu_gens.end(), u_gens.begin(), u_gens.end());

  std::vector<Vec> extra_k, extra_p;
  {
    Vec nsum = Vec::Zero(k);
    for (const auto& n : X.normals()) nsum += n;
    extra_k.push_back(nsum);
    Vec gm = Vec::Zero(k);
    for (const auto& g : xu_gens) gm += g / std::max(g.norm(), 1e-14);
    extra_k.push_back(gm);
    Vec nsy = Vec::Zero(p);
    for (const auto& n : Y.normals()) nsy += n;
    extra_p.push_back(nsy);
    Vec gy = Vec::Zero(p);
    for (const auto& g : Y.generators()) gy += g / std::max(g.norm(), 1e-14);
    extra_p.push_back(gy);
  }

  // the same u1 must be uniformly acute with both X and U
  auto [u1, a_xu] = best_direction(xu_gens, extra_k, k, 0x75315f68ull);
  (void)a_xu;
  double a_u = std::numeric_limits<double>::infinity();
  for (const auto& g : u_gens) a_u = std::min(a_u, g.dot(u1) / g.norm());
  double a_x = std::numeric_limits<double>::infinity();
  for (const auto& g : X.generators()) {
    const double gn = g.norm();
    if (gn > 1e-14) a_x = std::min(a_x, g.dot(u1) / gn);
  }
  auto [y1, a_y] = best_direction(Y.generators(), extra_p, p, 0x79315f68ull);

  if (!(a_u > kTolGeom)) throw AssumptionViolated("acuteness-U", "no unit vector is uniformly acute with U");
  if (!(a_x > kTolGeom)) throw AssumptionViolated("acuteness-X", "no unit vector is uniformly acute with X");
  if (!(a_y > kTolGeom)) throw AssumptionViolated("acuteness-Y", "no unit vector is uniformly acute with Y");

  out.u1_hat = u1;
  out.y1_hat = y1;
  out.a0 = std::min({a_u, a_x, a_y});
  return out;
}

AlphaProjection alpha_projection(const Cone& X, const Vec& u0_hat, const Vec& xi) {
  if (xi.size() != X.dim()) throw SpecError("alpha_projection: wrong dimension");
  double alpha = -std::numeric_limits<double>::infinity();
  for (const auto& n : X.normals()) {
    const double d = u0_hat.dot(n);
    if (!(d > 0.0)) throw SpecError("alpha_projection: u0 not strictly interior (n.u0 <= 0)");
    alpha = std::max(alpha, -xi.dot(n) / d);
  }
  return {alpha, xi + alpha * u0_hat};
}

double alpha_lipschitz(const Cone& X, const Vec& u0_hat) {
  double L = 0.0;
  for (const auto& n : X.normals()) {
    const double d = u0_hat.dot(n);
    if (!(d > 0.0)) throw SpecError("alpha_lipschitz: u0 not strictly interior");
    L = std::max(L, 1.0 / d);
  }
  return L;
}

std::optional<double> gamma_r(const Vec& x, const Vec& v, double r, const Vec& u1_hat) {
  const double vd = v.dot(u1_hat);
  if (!(vd > 0.0)) return std::nullopt;
  return (r - x.dot(u1_hat)) / vd;
}

RhoMap::RhoMap(const Mat& G, std::vector<Vec> u_basis, std::vector<Vec> y_basis, double tol)
    : tol_(tol) {
  const int k = static_cast<int>(G.rows());
  if (static_cast<int>(u_basis.size()) != k || static_cast<int>(y_basis.size()) != k)
    throw SpecError("rho map needs exactly k basis pairs");
  Mat U(k, k);
  y_cols_ = Mat(G.cols(), k);
  for (int i = 0; i < k; ++i) {
    if (u_basis[i].size() != k) throw SpecError("rho map: u basis dimension mismatch");
    if (y_basis[i].size() != G.cols()) throw SpecError("rho map: y basis dimension mismatch");
    if ((G * y_basis[i] - u_basis[i]).norm() > tol * (1.0 + u_basis[i].norm()))
      throw SpecError("rho map: G*y_i != u_i");
    U.col(i) = u_basis[i];
    y_cols_.col(i) = y_basis[i];
  }
  Eigen::FullPivLU<Mat> lu(U);
  if (!lu.isInvertible()) throw SpecError("rho map: u basis is linearly dependent");
  basis_inv_ = lu.inverse();
  op_norm_ = (y_cols_ * basis_inv_).operatorNorm();
}

Vec RhoMap::apply(const Vec& u) const {
  Vec alpha = basis_inv_ * u;
  for (int i = 0; i < alpha.size(); ++i) {
    if (alpha[i] < -tol_ * (1.0 + u.norm()))
      throw NotInCone("rho map: point outside the spanned cone");
    if (alpha[i] < 0.0) alpha[i] = 0.0;
  }
  return y_cols_ * alpha;
}

}  // namespace conectl
