#pragma once

// Shared fixture problems and small independent oracles for the test suites.

#include <cmath>
#include <memory>
#include <vector>

#include "conectl/problem.hpp"

namespace fixtures {

using conectl::Cone;
using conectl::Mat;
using conectl::ProblemSpec;
using conectl::PushCost;
using conectl::RunningCost;
using conectl::Vec;

inline Vec v1(double a) {
  Vec v(1);
  v[0] = a;
  return v;
}

inline Vec v2(double a, double b) {
  Vec v(2);
  v[0] = a;
  v[1] = b;
  return v;
}

inline Vec v3(double a, double b, double c) {
  Vec v(3);
  v[0] = a;
  v[1] = b;
  v[2] = c;
  return v;
}

inline ProblemSpec base_1d() {
  ProblemSpec spec;
  spec.X = std::make_shared<Cone>(Cone::half_line());
  spec.Y = std::make_shared<Cone>(Cone::half_line());
  spec.G = Mat::Identity(1, 1);
  spec.b = Vec::Zero(1);
  spec.Sigma = Mat::Identity(1, 1);
  spec.beta = 1.0;
  spec.h = PushCost::zero(1);
  return spec;
}

// reflected diffusion with unit running cost; the value is identically 1
inline ProblemSpec const_cost_1d() {
  ProblemSpec spec = base_1d();
  RunningCost ell = RunningCost::constant(1.0);
  ell.set_growth(0.0, 0.5, 1.0, 0.5);  // tight declared envelope
  spec.ell = ell;
  return spec;
}

// outward drift, no noise, ell = x + 1; the value is x + 2
inline ProblemSpec drift_linear_1d() {
  ProblemSpec spec = base_1d();
  spec.b = v1(1.0);
  spec.Sigma = Mat::Zero(1, 1);
  RunningCost ell = RunningCost::linear(v1(1.0), 1.0);
  ell.set_growth(1.0, 1.0, 1.0, 1.0);
  spec.ell = ell;
  return spec;
}

// reflected Brownian motion with ell = x; closed form below
inline ProblemSpec rbm_linear_1d() {
  ProblemSpec spec = base_1d();
  RunningCost ell = RunningCost::linear(v1(1.0), 0.0);
  ell.set_growth(1.0, 1.0, 1.0, 1.0);
  spec.ell = ell;
  return spec;
}

// V'' /2 - V + x = 0 on (0, inf), V'(0) = 0, linear growth
inline double rbm_linear_exact(double x) {
  return x + std::exp(-std::sqrt(2.0) * x) / std::sqrt(2.0);
}

// drift case with unit-price pushing; the value is still x + 2
inline ProblemSpec drift_linear_push_1d() {
  ProblemSpec spec = drift_linear_1d();
  PushCost h = PushCost::linear(v1(1.0));
  h.c_h = 1.0;
  spec.h = h;
  return spec;
}

// planar orthant with unit running cost; the value is identically 1
inline ProblemSpec const_cost_orthant2() {
  ProblemSpec spec;
  spec.X = std::make_shared<Cone>(Cone::orthant(2));
  spec.Y = std::make_shared<Cone>(Cone::orthant(2));
  spec.G = Mat::Identity(2, 2);
  spec.b = Vec::Zero(2);
  spec.Sigma = Mat::Identity(2, 2);
  spec.beta = 1.0;
  RunningCost ell = RunningCost::constant(1.0);
  ell.set_growth(0.0, 0.5, 1.0, 0.5);
  spec.ell = ell;
  spec.h = PushCost::zero(2);
  return spec;
}

// orthant cone in 2d with a max-of-linear push cost
inline ProblemSpec orthant2_maxlinear_push() {
  ProblemSpec spec = const_cost_orthant2();
  std::vector<Vec> rows = {v2(1.0, 0.0), v2(1.0, 1.0)};
  spec.h = PushCost::max_linear(rows);
  return spec;
}

inline std::vector<double> linspace_grid(double dt, double T) {
  return conectl::uniform_grid(dt, T);
}

}  // namespace fixtures
