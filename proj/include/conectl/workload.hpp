#pragma once

#include <optional>
#include <string>
#include <vector>

#include "conectl/problem.hpp"

namespace conectl {

// Brownian network control data: input-output matrix R (m x n), capacity
// consumption matrix K (p x n, rank p), linear holding cost on the inventory
// orthant, per-unit pushing prices h, Brownian data and the initial
// inventory.
struct BcpSpec {
  Mat R;
  Mat K;
  Vec cost;  // linear holding cost coefficients, length m
  Vec h_vec; // nonnegative, length p
  Vec b_tilde;
  Mat Sigma_tilde;
  Vec z0;    // initial inventory, componentwise nonnegative
  double beta = 1.0;

  int m() const { return static_cast<int>(R.rows()); }
  int n() const { return static_cast<int>(R.cols()); }
  int p() const { return static_cast<int>(K.rows()); }

  void validate() const;
};

BcpSpec bcp_from_json(const std::string& text);
BcpSpec bcp_from_file(const std::string& path);
std::string bcp_to_json(const BcpSpec& bcp);

// The dimension-reduced problem: M projects inventories onto the
// orthocomplement of R * ker(K), G solves M R = G K, and the state cone is
// the image of the inventory orthant.
struct WorkloadProblem {
  Mat M;  // k x m, orthonormal rows
  Mat G;  // k x p
  int q = 0;  // dim of R * ker(K)
  int k = 0;  // m - q
  Vec b;      // M b~
  Mat Sigma;  // M Sigma~ M^T
  std::vector<Vec> cone_generators;  // columns M e_i
  bool nonneg_rebased = false;
  std::vector<std::string> notes;
  double mr_gk_residual = 0.0;
};

// Null space of K, projection matrix M, canonical least-squares G. When
// prefer_nonneg is set, attempts to re-base M with nonnegative entries by
// enumerating the extreme rays of {lambda : M^T lambda >= 0}; failure keeps
// the orthonormal M and records a note.
WorkloadProblem reduce(const BcpSpec& bcp, bool prefer_nonneg = false);

struct EffectiveCost {
  double value;
  Vec argmin;
};

// min cost.z subject to M z = x, z >= 0, solved exactly by basis enumeration
// (desk-scale dimensions). Throws DomainError when x is outside M R_+^m.
EffectiveCost effective_cost(const WorkloadProblem& wp, const BcpSpec& bcp, const Vec& x);

// Dual-vertex expansion of the effective cost: ell(x) = max_j lambda_j . x
// over the vertices of {lambda : M^T lambda <= cost}. Exact on the cone for
// linear holding costs by LP duality.
std::vector<Vec> effective_cost_vertices(const WorkloadProblem& wp, const BcpSpec& bcp);

// Assembles the singular control problem the reduction defines: state cone
// M R_+^m, control cone R_+^p, push cost h_vec . y and the piecewise-linear
// effective running cost.
ProblemSpec lift_problem(const WorkloadProblem& wp, const BcpSpec& bcp);

std::string workload_to_json(const WorkloadProblem& wp);

}  // namespace conectl
