#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "conectl/cone.hpp"
#include "conectl/cost.hpp"

namespace conectl {

// Full problem data: state cone X, control cone Y, the control-to-state
// matrix G, Brownian drift/covariance, discount and costs. Geometric
// assumptions must be validated before solving or simulating.
struct ProblemSpec {
  std::shared_ptr<const Cone> X;
  std::shared_ptr<const Cone> Y;
  Mat G;
  Vec b;
  Mat Sigma;
  double beta = 1.0;
  RunningCost ell = RunningCost::constant(1.0);
  PushCost h = PushCost::zero(1);

  int k() const { return X->dim(); }
  int p() const { return Y->dim(); }

  void check_dimensions() const;

  // covariance nondegeneracy / drift conditions used by the uniqueness theory
  bool sigma_nondegenerate(double tol = 1e-12) const;
  bool cond_drift_holds(const Vec& u1_hat, double tol = 1e-9) const;  // u1.b > 0
  bool cond_push_lower_bound_holds() const;                           // h >= c_h|y|

  // human-readable caveats: which of the two sharp-result conditions fail
  std::vector<std::string> condition_warnings(const Vec& u1_hat) const;
};

// JSON round trip. The document shape is
//   {"X": {"dim", "generators", "facet_normals"}, "Y": {...}, "G": [[..]],
//    "b": [..], "Sigma": [[..]], "beta": ..,
//    "running_cost": {"form": ..., ...}, "push_cost": {"form": ..., ...}}
ProblemSpec problem_from_json(const std::string& text);
ProblemSpec problem_from_file(const std::string& path);
std::string problem_to_json(const ProblemSpec& spec);

// FNV-1a hash of the canonical JSON serialization; embedded in artifacts
std::uint64_t spec_hash(const ProblemSpec& spec);
std::string spec_hash_hex(const ProblemSpec& spec);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace conectl
