#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace conectl {

// Malformed or inconsistent problem data (bad JSON, dimension mismatch, ...).
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One of the standing geometric assumptions on the cones is unsatisfiable.
// `which` identifies the failed condition: "cone-overlap", "acuteness-U",
// "acuteness-X", "acuteness-Y" or "rank".
struct AssumptionViolated : std::runtime_error {
  std::string which;
  AssumptionViolated(std::string w, const std::string& msg)
      : std::runtime_error(msg), which(std::move(w)) {}
};

// Fixed-point iteration failed to reach tolerance within the sweep budget.
struct ConvergenceError : std::runtime_error {
  std::vector<double> residual_history;
  ConvergenceError(const std::string& msg, std::vector<double> hist)
      : std::runtime_error(msg), residual_history(std::move(hist)) {}
};

// Evaluation point left the computational domain (no clamping is ever done).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested cone coordinates came out negative beyond tolerance.
struct NotInCone : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace conectl
