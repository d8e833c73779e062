#pragma once

#include "conectl/cone.hpp"
#include "conectl/path.hpp"

namespace conectl {

// Reflection along the fixed interior direction u0. gamma_hat returns the
// scalar pushing record v(t) = 0 v sup_{s<=t} alpha(z(s))+, evaluated at all
// grid values and recorded left limits; this running maximum is exact for
// the supported path classes because alpha is convex along linear segments.
// Requires z(0) in X.
PathRcll gamma_hat(const Cone& X, const Vec& u0_hat, const PathRcll& z);

// Reflected path x = z + u0 * gamma_hat(z); x(t) lies in X at every sample.
PathRcll gamma(const Cone& X, const Vec& u0_hat, const PathRcll& z);

// Lipschitz constant for |gamma_hat(z1)-gamma_hat(z2)|* + |gamma(z1)-gamma(z2)|*
// relative to |z1-z2|*: (1 + |u0|) * max_n 1/(u0.n) + 1.
double kappa_hat(const Cone& X, const Vec& u0_hat);

// Corrects a candidate control for a new start point: returns
// Y~ = Y + y0 * gamma_hat(x_new + B + G Y), whose induced state stays in X.
// B is piecewise linear, Y piecewise constant on the same grid.
PathRcll admissible_from(const Cone& X, const ConeVectors& vecs, const Mat& G,
                         const Vec& x_new, const PathRcll& B, const PathRcll& Y);

}  // namespace conectl
