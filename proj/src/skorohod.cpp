#include "conectl/skorohod.hpp"

#include <algorithm>
#include <cmath>

namespace conectl {

namespace {

double alpha_plus(const Cone& X, const Vec& u0, const Vec& xi) {
  return std::max(0.0, alpha_projection(X, u0, xi).alpha);
}

void check_same_grid(const PathRcll& a, const PathRcll& b) {
  if (a.size() != b.size()) throw SpecError("paths must share the time grid");
  for (int i = 0; i < a.size(); ++i)
    if (std::abs(a.time(i) - b.time(i)) > 1e-12)
      throw SpecError("paths must share the time grid");
}

}  // namespace

PathRcll gamma_hat(const Cone& X, const Vec& u0_hat, const PathRcll& z) {
  if (!X.contains(z.left_limit(0), kTolGeom * (1.0 + z.left_limit(0).norm())))
    throw DomainError("gamma_hat: path does not start in X");
  const int n = z.size();
  Mat v(1, n);
  std::vector<PathRcll::Jump> vjumps;
  double m = 0.0;
  for (int i = 0; i < n; ++i) {
    if (z.has_jump_record(i)) {
      // the running sup can be attained at the left limit
      m = std::max(m, alpha_plus(X, u0_hat, z.left_limit(i)));
      const double pre = m;
      m = std::max(m, alpha_plus(X, u0_hat, z.value(i)));
      if (m > pre) {
        Vec pv(1);
        pv[0] = pre;
        vjumps.push_back({i, pv});
      }
    } else {
      m = std::max(m, alpha_plus(X, u0_hat, z.value(i)));
    }
    v(0, i) = m;
  }
  return PathRcll(z.times(), std::move(v), z.interp(), std::move(vjumps));
}

PathRcll gamma(const Cone& X, const Vec& u0_hat, const PathRcll& z) {
  PathRcll v = gamma_hat(X, u0_hat, z);
  const int n = z.size();
  Mat x(z.dim(), n);
  std::vector<PathRcll::Jump> xjumps;
  for (int i = 0; i < n; ++i) {
    x.col(i) = z.value(i) + u0_hat * v.value(i)[0];
    if (z.has_jump_record(i) || v.has_jump_record(i)) {
      Vec pre = z.left_limit(i) + u0_hat * v.left_limit(i)[0];
      if ((pre - x.col(i)).norm() > 0.0) xjumps.push_back({i, std::move(pre)});
    }
  }
  return PathRcll(z.times(), std::move(x), z.interp(), std::move(xjumps));
}

double kappa_hat(const Cone& X, const Vec& u0_hat) {
  return (1.0 + u0_hat.norm()) * alpha_lipschitz(X, u0_hat) + 1.0;
}

PathRcll admissible_from(const Cone& X, const ConeVectors& vecs, const Mat& G,
                         const Vec& x_new, const PathRcll& B, const PathRcll& Y) {
  check_same_grid(B, Y);
  if (!X.contains(x_new, kTolGeom * (1.0 + x_new.norm())))
    throw DomainError("admissible_from: x_new not in X");
  const int n = B.size();
  Mat zv(X.dim(), n);
  std::vector<PathRcll::Jump> zjumps;
  Vec y_prev = Vec::Zero(Y.dim());  // Y(0-) = 0 convention
  for (int i = 0; i < n; ++i) {
    const Vec yi = Y.value(i);
    zv.col(i) = x_new + B.value(i) + G * yi;
    if ((yi - y_prev).norm() > 0.0) {
      Vec pre = x_new + B.value(i) + G * y_prev;
      if ((pre - zv.col(i)).norm() > 0.0) zjumps.push_back({i, std::move(pre)});
    }
    y_prev = yi;
  }
  PathRcll z(B.times(), std::move(zv), Interp::PiecewiseLinear, std::move(zjumps));
  PathRcll v = gamma_hat(X, vecs.u0_hat, z);
  Mat yt(Y.dim(), n);
  for (int i = 0; i < n; ++i) yt.col(i) = Y.value(i) + vecs.y0_hat * v.value(i)[0];
  return PathRcll(Y.times(), std::move(yt), Interp::PiecewiseConstant);
}

}  // namespace conectl
