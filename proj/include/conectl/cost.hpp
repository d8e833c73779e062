#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "conectl/cone.hpp"
#include "conectl/path.hpp"

namespace conectl {

// Running cost on X. Supported forms are constant, linear, power a|x|^m + c
// and max-of-linear; the declared polynomial growth envelope
//   c1 |x|^m_ell - c2 <= ell(x) <= c3 (|x|^m_ell + 1)
// travels with the cost and is validated by sampling.
class RunningCost {
 public:
  enum class Form { Constant, Linear, Power, MaxLinear };

  static RunningCost constant(double c);
  static RunningCost linear(Vec w, double c);
  static RunningCost power(double a, double m, double c);
  static RunningCost max_linear(std::vector<Vec> w, std::vector<double> c);

  double operator()(const Vec& x) const;

  Form form() const { return form_; }
  double m_ell() const { return m_ell_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  double c3() const { return c3_; }
  void set_growth(double m_ell, double c1, double c2, double c3);

  // nonnegativity on generators and the growth envelope on random samples
  void validate_on(const Cone& X, int samples = 256,
                   std::uint64_t seed = 0x6c6c6c6cull) const;

  const std::vector<Vec>& weights() const { return w_; }
  const std::vector<double>& offsets() const { return c_; }
  double power_coeff() const { return a_; }
  double power_exp() const { return m_; }

 private:
  RunningCost() = default;
  Form form_ = Form::Constant;
  std::vector<Vec> w_;
  std::vector<double> c_;
  double a_ = 0.0, m_ = 0.0;
  double m_ell_ = 0.0, c1_ = 1.0, c2_ = 1.0, c3_ = 1.0;
};

// Push cost on Y: positively homogeneous, convex, piecewise linear.
// h(alpha y) = alpha h(y) holds exactly by construction for every form.
class PushCost {
 public:
  enum class Form { Zero, Linear, MaxLinear };

  static PushCost zero(int p);
  static PushCost linear(Vec h0);
  static PushCost max_linear(std::vector<Vec> rows);

  double operator()(const Vec& y) const;

  Form form() const { return form_; }
  int dim() const { return p_; }
  double lipschitz() const;  // max branch norm
  std::optional<double> c_h;  // declared lower bound h(y) >= c_h |y|

  // convexity/nonnegativity on generators; lower bound when c_h declared
  void validate_on(const Cone& Y, int samples = 256,
                   std::uint64_t seed = 0x68686868ull) const;

  const std::vector<Vec>& rows() const { return rows_; }

 private:
  PushCost() = default;
  Form form_ = Form::Zero;
  int p_ = 0;
  std::vector<Vec> rows_;
};

// Total-variation decomposition of a control path: running Euclidean
// variation |Y| and the unit direction carried by each jump or linear
// segment. Reconstructing Y from (|Y|, directions) is exact on the grid.
struct VariationDecomposition {
  struct Event {
    int index;       // grid index the mass is attached to
    bool is_jump;    // jump at times[index] vs linear segment ending there
    Vec direction;   // unit vector
    double mass;     // |Delta Y| or |slope| * dt
  };
  std::vector<double> tv;  // |Y|(t_i), includes the time-0 jump
  std::vector<Event> events;
};

// Control path: p-dimensional RCLL path with increments in Y.
class ControlPath {
 public:
  explicit ControlPath(PathRcll base);
  ControlPath(PathRcll base, const Cone& Y_cone, double tol = kTolGeom);

  const PathRcll& base() const { return base_; }
  const VariationDecomposition& decomposition() const { return decomp_; }
  double total_variation() const { return decomp_.tv.back(); }

  static ControlPath zero(const std::vector<double>& times, int p);

 private:
  PathRcll base_;
  VariationDecomposition decomp_;
};

// throws SpecError when some increment leaves the cone
void validate_increments(const PathRcll& Y, const Cone& Y_cone, double tol = kTolGeom);

// integral of e^{-beta s} h(dY(s)) over [a, b]; the jump at time 0 counts
// exactly when a == 0 (the interval is closed at the origin).
double h_integral(const PushCost& h, const ControlPath& Y, double beta,
                  double a = 0.0, double b = std::numeric_limits<double>::infinity());

struct DiscountedCost {
  double value;
  double tail_bound;
};

// trapezoidal discounted running cost plus the push-cost integral on [0, T],
// with an explicit bound on the truncated tail
DiscountedCost discounted_cost(const RunningCost& ell, const PushCost& h, double beta,
                               const PathRcll& X, const ControlPath& Y, double T);

struct ExitData {
  double time;
  Vec state;
  int step;
};

struct BoundedCost {
  double value;
  bool exited;
  double tail_bound;  // zero when an exit was observed
};

// cost on [0, sigma] plus discounted exit payoff phi(X_sigma); when no exit
// is observed the payoff is dropped and the running-cost tail is reported.
// Exiting X itself (not through the truncation surface) is flagged as a
// SpecError: such a control is outside the bounded-domain admissible class.
BoundedCost bounded_cost(const RunningCost& ell, const PushCost& h, double beta,
                         const Cone& X, const PathRcll& Xp, const ControlPath& Y,
                         double r, const Vec& u1_hat,
                         const std::function<double(const Vec&)>& phi,
                         const std::optional<ExitData>& exit_data,
                         double tail_tol = 1e-6);

}  // namespace conectl
