#include "conectl/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conectl/rng.hpp"

namespace conectl {

// ---------------------------------------------------------------------------
// RunningCost
// ---------------------------------------------------------------------------

RunningCost RunningCost::constant(double c) {
  RunningCost r;
  r.form_ = Form::Constant;
  r.c_ = {c};
  r.set_growth(0.0, std::max(c, 1e-6), 1.0, std::max(c, 1e-6));
  return r;
}

RunningCost RunningCost::linear(Vec w, double c) {
  RunningCost r;
  r.form_ = Form::Linear;
  const double wn = w.norm();
  r.w_ = {std::move(w)};
  r.c_ = {c};
  r.set_growth(1.0, std::max(wn, 1e-6), std::abs(c) + 1.0, wn + std::abs(c));
  return r;
}

RunningCost RunningCost::power(double a, double m, double c) {
  if (!(a >= 0.0) || !(m >= 0.0)) throw SpecError("power cost needs a >= 0, m >= 0");
  RunningCost r;
  r.form_ = Form::Power;
  r.a_ = a;
  r.m_ = m;
  r.c_ = {c};
  r.set_growth(m, std::max(a, 1e-6), std::abs(c) + 1.0, a + std::abs(c));
  return r;
}

RunningCost RunningCost::max_linear(std::vector<Vec> w, std::vector<double> c) {
  if (w.empty() || w.size() != c.size())
    throw SpecError("max-of-linear cost needs matching weight and offset lists");
  RunningCost r;
  r.form_ = Form::MaxLinear;
  double wmax = 0.0, cmax = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    wmax = std::max(wmax, w[j].norm());
    cmax = std::max(cmax, std::abs(c[j]));
  }
  r.w_ = std::move(w);
  r.c_ = std::move(c);
  r.set_growth(1.0, std::max(wmax, 1e-6), cmax + 1.0, wmax + cmax);
  return r;
}

void RunningCost::set_growth(double m_ell, double c1, double c2, double c3) {
  if (!(m_ell >= 0.0) || !(c1 > 0.0) || !(c2 > 0.0) || !(c3 > 0.0))
    throw SpecError("growth envelope needs m_ell >= 0 and positive constants");
  m_ell_ = m_ell;
  c1_ = c1;
  c2_ = c2;
  c3_ = c3;
}

double RunningCost::operator()(const Vec& x) const {
  switch (form_) {
    case Form::Constant:
      return c_[0];
    case Form::Linear:
      return w_[0].dot(x) + c_[0];
    case Form::Power:
      return a_ * std::pow(x.norm(), m_) + c_[0];
    case Form::MaxLinear: {
      double v = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < w_.size(); ++j) v = std::max(v, w_[j].dot(x) + c_[j]);
      return v;
    }
  }
  return 0.0;
}

void RunningCost::validate_on(const Cone& X, int samples, std::uint64_t seed) const {
  const double slack = 1e-9;
  for (const auto& g : X.generators())
    if ((*this)(g) < -slack) throw SpecError("running cost is negative on a cone generator");
  for (int i = 0; i < samples; ++i) {
    Vec x = X.sample(seed, static_cast<std::uint64_t>(i));
    const double ell = (*this)(x);
    const double xm = std::pow(x.norm(), m_ell_);
    if (ell < -slack) throw SpecError("running cost negative on a cone sample");
    if (c1_ * xm - c2_ > ell + slack * (1.0 + xm))
      throw SpecError("running cost violates its declared lower growth bound");
    if (ell > c3_ * (xm + 1.0) + slack * (1.0 + xm))
      throw SpecError("running cost violates its declared upper growth bound");
  }
}

// ---------------------------------------------------------------------------
// PushCost
// ---------------------------------------------------------------------------

PushCost PushCost::zero(int p) {
  PushCost h;
  h.form_ = Form::Zero;
  h.p_ = p;
  return h;
}

PushCost PushCost::linear(Vec h0) {
  PushCost h;
  h.form_ = Form::Linear;
  h.p_ = static_cast<int>(h0.size());
  h.rows_ = {std::move(h0)};
  return h;
}

PushCost PushCost::max_linear(std::vector<Vec> rows) {
  if (rows.empty()) throw SpecError("max-of-linear push cost needs at least one row");
  PushCost h;
  h.form_ = Form::MaxLinear;
  h.p_ = static_cast<int>(rows[0].size());
  h.rows_ = std::move(rows);
  return h;
}

double PushCost::operator()(const Vec& y) const {
  if (form_ == Form::Zero) return 0.0;
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows_) v = std::max(v, r.dot(y));
  return v;
}

double PushCost::lipschitz() const {
  double L = 0.0;
  for (const auto& r : rows_) L = std::max(L, r.norm());
  return L;
}

void PushCost::validate_on(const Cone& Y, int samples, std::uint64_t seed) const {
  const double slack = 1e-9;
  for (const auto& g : Y.generators()) {
    const double hg = (*this)(g);
    if (hg < -slack * (1.0 + g.norm()))
      throw SpecError("push cost negative on a cone generator");
    if (c_h && hg < *c_h * g.norm() - slack * (1.0 + g.norm()))
      throw SpecError("push cost violates its declared lower bound c_h|y|");
  }
  for (int i = 0; i < samples; ++i) {
    Vec y = Y.sample(seed, static_cast<std::uint64_t>(i));
    if ((*this)(y) < -slack * (1.0 + y.norm()))
      throw SpecError("push cost negative on a cone sample");
  }
}

// ---------------------------------------------------------------------------
// ControlPath and integrals
// ---------------------------------------------------------------------------

namespace {

VariationDecomposition decompose_path(const PathRcll& Y) {
  VariationDecomposition d;
  const int n = Y.size();
  d.tv.assign(static_cast<std::size_t>(n), 0.0);
  double acc = 0.0;
  // time-0 jump against the Y(0-) = 0 convention
  {
    Vec dy = Y.value(0);
    const double m = dy.norm();
    if (m > 0.0) {
      d.events.push_back({0, true, dy / m, m});
      acc += m;
    }
    d.tv[0] = acc;
  }
  for (int i = 1; i < n; ++i) {
    const Vec prev = Y.value(i - 1);
    const Vec ll = Y.left_limit(i);
    if (Y.interp() == Interp::PiecewiseLinear) {
      Vec seg = ll - prev;
      const double m = seg.norm();
      if (m > 0.0) {
        d.events.push_back({i, false, seg / m, m});
        acc += m;
      }
      Vec dy = Y.value(i) - ll;
      const double jm = dy.norm();
      if (jm > 0.0) {
        d.events.push_back({i, true, dy / jm, jm});
        acc += jm;
      }
    } else {
      Vec dy = Y.value(i) - prev;
      const double m = dy.norm();
      if (m > 0.0) {
        d.events.push_back({i, true, dy / m, m});
        acc += m;
      }
    }
    d.tv[static_cast<std::size_t>(i)] = acc;
  }
  return d;
}

}  // namespace

ControlPath::ControlPath(PathRcll base)
    : base_(std::move(base)), decomp_(decompose_path(base_)) {}

ControlPath::ControlPath(PathRcll base, const Cone& Y_cone, double tol)
    : ControlPath(std::move(base)) {
  validate_increments(base_, Y_cone, tol);
}

ControlPath ControlPath::zero(const std::vector<double>& times, int p) {
  return ControlPath(PathRcll::zero(times, p));
}

void validate_increments(const PathRcll& Y, const Cone& Y_cone, double tol) {
  auto in_cone = [&](const Vec& v) { return Y_cone.contains(v, tol * (1.0 + v.norm())); };
  if (!in_cone(Y.value(0))) throw SpecError("control start Y(0) outside the control cone");
  for (int i = 1; i < Y.size(); ++i) {
    if (!in_cone(Y.value(i) - Y.value(i - 1)))
      throw SpecError("control increment outside the control cone");
    if (Y.has_jump_record(i)) {
      if (!in_cone(Y.left_limit(i) - Y.value(i - 1)) ||
          !in_cone(Y.value(i) - Y.left_limit(i)))
        throw SpecError("control jump decomposition outside the control cone");
    }
  }
}

double h_integral(const PushCost& h, const ControlPath& Y, double beta, double a, double b) {
  if (!(beta > 0.0)) throw SpecError("h_integral needs beta > 0");
  if (h.form() == PushCost::Form::Zero) return 0.0;
  const PathRcll& base = Y.base();
  double total = 0.0;
  for (const auto& ev : Y.decomposition().events) {
    const double t = base.time(ev.index);
    if (ev.is_jump) {
      const bool counted = (t > a && t <= b) || (t == 0.0 && a == 0.0);
      if (counted) total += std::exp(-beta * t) * h(ev.direction) * ev.mass;
    } else {
      const double t0 = base.time(ev.index - 1);
      const double s0 = std::max(a, t0), s1 = std::min(b, t);
      if (s1 <= s0) continue;
      const double rate = ev.mass / (t - t0);  // |slope|
      total += h(ev.direction) * rate * (std::exp(-beta * s0) - std::exp(-beta * s1)) / beta;
    }
  }
  return total;
}

DiscountedCost discounted_cost(const RunningCost& ell, const PushCost& h, double beta,
                               const PathRcll& X, const ControlPath& Y, double T) {
  if (!(beta > 0.0)) throw SpecError("discounted_cost needs beta > 0");
  const int n = X.size();
  const double t_end = std::min(T, X.time(n - 1));
  double integral = 0.0;
  double g_prev = ell(X.value(0));
  for (int i = 1; i < n; ++i) {
    const double t = X.time(i);
    if (t > t_end + 1e-12) break;
    const double g = std::exp(-beta * t) * ell(X.value(i));
    integral += 0.5 * (std::exp(-beta * X.time(i - 1)) * g_prev + g) * (t - X.time(i - 1));
    g_prev = ell(X.value(i));
  }
  const double push = h_integral(h, Y, beta, 0.0, t_end);

  // tail: growth envelope at the terminal state plus the recent pushing rate
  const Vec xT = X.value(n - 1);
  const double ell_tail =
      ell.c3() * (1.0 + std::pow(xT.norm(), ell.m_ell())) / beta;
  double rate = 0.0;
  {
    const auto& tv = Y.decomposition().tv;
    const double half = 0.5 * t_end;
    int ih = 0;
    while (ih < n - 1 && X.time(ih) < half) ++ih;
    const double dtv = tv.back() - tv[static_cast<std::size_t>(ih)];
    const double span = std::max(t_end - X.time(ih), 1e-12);
    rate = dtv / span;
  }
  const double h_tail = h.lipschitz() * rate / beta;
  const double tail = std::exp(-beta * t_end) * (ell_tail + h_tail);
  return {integral + push, tail};
}

BoundedCost bounded_cost(const RunningCost& ell, const PushCost& h, double beta,
                         const Cone& X, const PathRcll& Xp, const ControlPath& Y,
                         double r, const Vec& u1_hat,
                         const std::function<double(const Vec&)>& phi,
                         const std::optional<ExitData>& exit_data, double tail_tol) {
  // admissibility for the bounded problem: the state may only leave through
  // the truncation surface, never through a cone facet
  const int last = exit_data ? exit_data->step : Xp.size() - 1;
  for (int i = 0; i <= last; ++i) {
    const Vec xi = Xp.value(i);
    if (!X.contains(xi, 1e-7 * (1.0 + xi.norm())))
      throw SpecError("state exited through a cone facet: control not admissible "
                      "for the bounded-domain class");
  }
  if (exit_data) {
    if (!(exit_data->state.dot(u1_hat) >= r - 1e-9 * (1.0 + r)))
      throw SpecError("recorded exit state is not on the truncation surface");
    const double T = exit_data->time;
    double integral = 0.0;
    double g_prev = ell(Xp.value(0));
    for (int i = 1; i <= exit_data->step; ++i) {
      const double t = Xp.time(i);
      const double g = std::exp(-beta * t) * ell(Xp.value(i));
      integral += 0.5 * (std::exp(-beta * Xp.time(i - 1)) * g_prev + g) * (t - Xp.time(i - 1));
      g_prev = ell(Xp.value(i));
    }
    const double push = h_integral(h, Y, beta, 0.0, T);
    return {integral + push + std::exp(-beta * T) * phi(exit_data->state), true, 0.0};
  }
  DiscountedCost dc = discounted_cost(ell, h, beta, Xp, Y, Xp.time(Xp.size() - 1));
  (void)tail_tol;
  return {dc.value, false, dc.tail_bound};
}

}  // namespace conectl
