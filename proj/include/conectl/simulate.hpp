#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "conectl/cost.hpp"
#include "conectl/hjb.hpp"
#include "conectl/problem.hpp"

namespace conectl {

struct SystemConfig {
  Vec b;
  Mat Sigma;
  double dt = 1e-3;
  double horizon = 0.0;  // 0: derived from beta and tail_tol
  std::uint64_t seed = 0;
  int n_paths = 10'000;
  double tail_tol = 1e-8;
  int threads = 1;
  // Reflecting policies refine each step's pushing with the Brownian-bridge
  // minimum of the facet-projected diffusion, removing the O(sqrt(dt)) bias
  // of endpoint-only reflection. One extra uniform per facet per step.
  bool bridge_correction = true;

  static SystemConfig from_problem(const ProblemSpec& spec, double dt,
                                   std::uint64_t seed, int n_paths);
  double effective_horizon(double beta) const;
  void validate() const;  // Sigma PSD, dt > 0
};

// Control policies. The reflect policy realizes the minimal pushing along
// u0; value_driven applies the solved push-region table with jumps capped at
// the interpolated region boundary, then tops up with the reflection map to
// stay admissible; scripted replays a supplied control path.
struct Policy {
  enum class Kind { Null, Reflect, ValueDriven, Scripted };
  Kind kind = Kind::Reflect;
  std::shared_ptr<const PolicyTable> table;  // ValueDriven
  std::shared_ptr<const PathRcll> script;    // Scripted

  static Policy null_policy() { return {Kind::Null, nullptr, nullptr}; }
  static Policy reflect() { return {Kind::Reflect, nullptr, nullptr}; }
  static Policy value_driven(std::shared_ptr<const PolicyTable> t) {
    return {Kind::ValueDriven, std::move(t), nullptr};
  }
  static Policy scripted(std::shared_ptr<const PathRcll> y) {
    return {Kind::Scripted, nullptr, std::move(y)};
  }
};

// Brownian path with drift b and covariance Sigma on the uniform grid,
// deterministic in (seed, path_index).
PathRcll sample_brownian(const SystemConfig& cfg, std::uint64_t path_index);

struct SimResult {
  PathRcll X;
  ControlPath Y;
  std::optional<ExitData> exit_r;
};

// Runs one controlled path. Containment in X and increments of Y in the
// control cone are asserted on every step; a breach aborts. When a
// truncation radius is supplied, the first grid time with X.u1 >= r is
// reported together with the crossing state (overshoot uncorrected).
SimResult simulate(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                   const Policy& policy, std::uint64_t path_index = 0,
                   std::optional<double> r = std::nullopt);

struct Estimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal
  double tail_bound = 0.0;
  int n_paths = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo mean of the discounted cost under the policy: an upper bound
// on the value at x up to CI and tail. Per-path costs are reduced pairwise
// so the result is independent of scheduling.
Estimate estimate_value(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                        const Policy& policy);

struct DppResult {
  double functional = 0.0;
  double ci_halfwidth = 0.0;
  double value_at_x = 0.0;
  double gap = 0.0;  // functional - V(x); >= -(ci + errors) for admissible policies
};

// Monte Carlo evaluation of the dynamic-programming functional
//   E[ cost on [0, t ^ tau] + e^{-beta (t ^ tau)} V(X_{t ^ tau}) ],
// tau the first exit from the epsilon-ball at x. Interpolation outside the
// solved field raises DomainError.
DppResult dpp_check(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                    const Policy& policy, const ValueField& V, double eps, double t);

}  // namespace conectl
