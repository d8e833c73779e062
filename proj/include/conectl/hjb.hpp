#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "conectl/problem.hpp"

namespace conectl {

enum class NodeClass { Interior, ConeBoundary, Dirichlet };

// Regular lattice intersected with the truncated cone {x in X : x.u1 <= r},
// plus the dirichlet margin layer needed by directional stencils. A node is
// Dirichlet when it sits on or past the truncation surface, Interior when
// its full second-order stencil lies in the node set, ConeBoundary
// otherwise (which for lattice cones means it hugs a facet of X).
class Grid {
 public:
  static constexpr int kMaxDim = 4;
  using Key = std::array<long, kMaxDim>;

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(coords_.size()); }
  double mesh() const { return mesh_; }
  double r() const { return r_; }
  const Vec& u1() const { return u1_; }

  const Vec& coord(int i) const { return coords_[static_cast<std::size_t>(i)]; }
  NodeClass node_class(int i) const { return cls_[static_cast<std::size_t>(i)]; }
  // axis neighbor, sign +1/-1; -1 when absent
  int neighbor(int i, int axis, int sign) const;
  int node_at(const Key& key) const;
  Key key_of(int i) const { return keys_[static_cast<std::size_t>(i)]; }

  int count(NodeClass c) const { return counts_[static_cast<int>(c)]; }

  // multilinear interpolation stencil at q; false when a cell corner is
  // missing from the node set (no clamping)
  struct Interpolation {
    std::vector<std::pair<int, double>> terms;
  };
  bool interpolation_at(const Vec& q, Interpolation& out) const;

  // nearest lattice node; -1 when the rounded lattice point is absent
  int nearest_node(const Vec& q) const;

 private:
  friend Grid discretize(const ProblemSpec&, const ConeVectors&, double,
                         const struct SchemeParams&);
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  int dim_ = 0;
  double mesh_ = 0.0, r_ = 0.0;
  Vec u1_;
  std::vector<Vec> coords_;
  std::vector<Key> keys_;
  std::vector<NodeClass> cls_;
  std::vector<std::array<int, 2 * kMaxDim>> nbrs_;
  std::unordered_map<Key, int, KeyHash> index_;
  std::array<int, 3> counts_ = {0, 0, 0};
};

// Finite direction set for the gradient constraint: generators of Y rescaled
// so |G y| = 1, optionally refined by normalized pairwise midpoints. For
// piecewise-linear push costs the supremum over the cone section is attained
// on these extreme directions.
struct DiscreteHamiltonian {
  struct Direction {
    Vec y;
    Vec gy;    // |gy| = 1
    double h;  // push cost of y
  };
  std::vector<Direction> dirs;

  static DiscreteHamiltonian build(const ProblemSpec& spec, bool refine_midpoints = false);

  // sup over stored directions of -(gy.p + h)
  double eval(const Vec& p) const;
};

struct SchemeParams {
  double mesh = 0.1;
  double delta = 0.0;   // directional step; 0 means mesh
  double tol = 1e-8;    // sup-norm update tolerance (scaled internally by the
                        // scheme's contraction factor so the fixed-point error
                        // is of this order)
  int max_iterations = 1'000'000;
  double damping = 1.0;
  enum class DirichletMode { GrowthMatched, ExtendPrevious };
  DirichletMode dirichlet_mode = DirichletMode::GrowthMatched;
  bool refine_directions = false;

  double effective_delta() const { return delta > 0.0 ? delta : mesh; }
};

struct ValueFieldMeta {
  std::string spec_hash;
  double r = 0.0;
  double mesh = 0.0;
  double delta = 0.0;
  double tol = 0.0;
  int iterations = 0;
  double final_update = 0.0;
  double damping_used = 1.0;
  double growth_constant = 0.0;
  std::string dirichlet_mode;
  std::vector<std::string> warnings;
};

// Candidate solution on a truncated-domain grid.
struct ValueField {
  std::shared_ptr<const Grid> grid;
  std::vector<double> values;
  ValueFieldMeta meta;

  double at(const Vec& x) const;                 // throws DomainError outside
  std::optional<double> try_at(const Vec& x) const;

  void to_csv(std::ostream& os) const;           // coords..., value, node_class
  std::string metadata_json() const;
  static ValueField from_csv(std::istream& csv, const std::string& meta_json,
                             const ProblemSpec& spec);
  // constant field on the grid of (spec, r, params), for residual probes
  static ValueField constant(const ProblemSpec& spec, double r,
                             const SchemeParams& params, double c);
};

Grid discretize(const ProblemSpec& spec, const ConeVectors& vecs, double r,
                const SchemeParams& params);

// Constructive polynomial-growth bound V(x) <= C (1 + |x|^m_ell): the cost of
// the pure-reflection control estimated through the map's Lipschitz constant
// and Gaussian maximal-moment bounds. Used for growth-matched Dirichlet data
// and as the default upper initialization.
double growth_matched_constant(const ProblemSpec& spec, const ConeVectors& vecs);

struct SolveOptions {
  std::function<double(const Vec&)> phi;       // empty: growth-matched data
  std::optional<std::vector<double>> f0;       // empty: growth-matched init
  double growth_constant_override = 0.0;       // 0: compute from the spec
};

// Damped Jacobi fixed point of the monotone discretization of
//   ((L + beta) f - ell) v max_y [ (f(x) - I[f](x + delta G y))/delta - h(y) ] = 0
// with upwind first differences, central second differences, the seven-point
// splitting for cross terms (diagonal dominance required), one-sided inward
// stencils at cone-boundary nodes and Dirichlet data held on the truncation
// layer.
ValueField solve(const ProblemSpec& spec, double r, const SchemeParams& params,
                 const SolveOptions& options = {});

struct ResidualReport {
  // update scale: value-sized residuals f - T(f) per branch combination
  double interior_sub_worst = 0.0;    // max over interior nodes (<= tol passes)
  double interior_super_worst = 0.0;  // min over interior nodes (>= -tol passes)
  double boundary_super_worst = 0.0;  // min over cone-boundary nodes
  // operator scale: ((L+beta)f - ell) v (directional difference - h)
  double interior_sub_worst_pde = 0.0;
  double interior_super_worst_pde = 0.0;
  double boundary_super_worst_pde = 0.0;
  std::vector<double> node_residual_update;  // NaN at dirichlet nodes
  std::vector<double> node_residual_pde;

  bool subsolution_ok(double tol) const { return interior_sub_worst <= tol; }
  bool supersolution_ok(double tol) const {
    return interior_super_worst >= -tol && boundary_super_worst >= -tol;
  }
  std::string to_json() const;
};

ResidualReport viscosity_residual(const ProblemSpec& spec, const ValueField& f);

// Push-region table: the set where the gradient constraint is active in the
// discrete sense, with the maximizing direction per node.
struct PolicyTable {
  std::shared_ptr<const Grid> grid;
  DiscreteHamiltonian H;
  std::vector<int> push_dir;  // direction index, -1 = diffuse
  bool push_at(int node) const { return push_dir[static_cast<std::size_t>(node)] >= 0; }
};

PolicyTable extract_policy(const ProblemSpec& spec, const ValueField& f,
                           double tol_active = 1e-6);

struct NestedResult {
  std::vector<ValueField> fields;
  std::vector<double> interior_change;     // sup-norm change on the previous
                                           // domain's non-dirichlet nodes
  std::vector<double> growth_constants;    // C used per domain
};

// Solves on an increasing sequence of truncation radii, re-calibrating the
// growth constant on the solved core (growth-matched mode) or carrying the
// previous field forward as boundary data (extend-previous mode).
NestedResult solve_nested(const ProblemSpec& spec, const std::vector<double>& r_list,
                          const SchemeParams& params);

}  // namespace conectl
