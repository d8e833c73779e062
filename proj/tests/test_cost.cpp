#include <doctest.h>

#include <cmath>

#include "conectl/cost.hpp"
#include "conectl/rng.hpp"
#include "conectl/simulate.hpp"
#include "support.hpp"

using namespace conectl;
using fixtures::v1;
using fixtures::v2;

namespace {

PathRcll pc_path(const std::vector<double>& times, const std::vector<Vec>& vals) {
  Mat m(vals[0].size(), static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vals[i];
  return PathRcll(times, std::move(m), Interp::PiecewiseConstant);
}

PathRcll ramp_path(const std::vector<double>& times, const Vec& slope) {
  Mat m(slope.size(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = times[i] * slope;
  return PathRcll(times, std::move(m), Interp::PiecewiseLinear);
}

ControlPath random_control(int p, int n, double dt, std::uint64_t seed, std::uint64_t stream,
                           bool even_steps_only = false, bool odd_steps_only = false) {
  CounterRng rng(seed, stream);
  std::vector<double> times(static_cast<std::size_t>(n));
  Mat vals(p, n);
  Vec y = Vec::Zero(p);
  for (int i = 0; i < n; ++i) {
    times[static_cast<std::size_t>(i)] = i * dt;
    const bool skip = (even_steps_only && i % 2 == 1) || (odd_steps_only && i % 2 == 0);
    if (i > 0 && !skip)
      for (int d = 0; d < p; ++d) y[d] += rng.uniform();
    vals.col(i) = y;
  }
  return ControlPath(PathRcll(times, std::move(vals), Interp::PiecewiseConstant));
}

}  // namespace

TEST_CASE("running cost forms and growth validation") {
  RunningCost lin = RunningCost::linear(v1(1.0), 1.0);
  CHECK(lin(v1(2.0)) == doctest::Approx(3.0));
  RunningCost pw = RunningCost::power(2.0, 1.5, 0.5);
  CHECK(pw(v1(4.0)) == doctest::Approx(2.0 * 8.0 + 0.5));
  RunningCost ml = RunningCost::max_linear({v2(1, 0), v2(0, 2)}, {0.0, -1.0});
  CHECK(ml(v2(1.0, 1.0)) == doctest::Approx(1.0));
  lin.validate_on(Cone::half_line());
  ml.validate_on(Cone::orthant(2));

  RunningCost bad = RunningCost::linear(v1(-1.0), 0.0);
  CHECK_THROWS_AS(bad.validate_on(Cone::half_line()), SpecError);

  RunningCost wrong = RunningCost::constant(1.0);
  wrong.set_growth(0.0, 5.0, 0.1, 5.0);  // lower bound 5 - 0.1 > 1
  CHECK_THROWS_AS(wrong.validate_on(Cone::half_line()), SpecError);
}

TEST_CASE("push cost homogeneity and bounds") {
  PushCost h = PushCost::max_linear({v2(1, 0), v2(1, 1)});
  CounterRng rng(9, 0);
  for (int i = 0; i < 200; ++i) {
    Vec y = v2(rng.uniform(), rng.uniform());
    const double a = 3.0 * rng.uniform();
    CHECK(h(a * y) == doctest::Approx(a * h(y)).epsilon(1e-12));
  }
  h.validate_on(Cone::orthant(2));
  PushCost hb = PushCost::linear(v2(1.0, 2.0));
  hb.c_h = 1.0;  // h(y) = y1 + 2*y2 >= |y| on the orthant
  hb.validate_on(Cone::orthant(2));
  PushCost bad = PushCost::linear(v2(1.0, 0.0));
  bad.c_h = 0.9;  // fails on the e2 generator
  CHECK_THROWS_AS(bad.validate_on(Cone::orthant(2)), SpecError);
}

TEST_CASE("variation decomposition") {
  SUBCASE("unit-speed ramp") {
    std::vector<double> times = fixtures::linspace_grid(0.25, 2.0);
    ControlPath y(ramp_path(times, v1(1.0)));
    const auto& d = y.decomposition();
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(d.tv[i] == doctest::Approx(times[i]));
    for (const auto& ev : d.events) CHECK(ev.direction[0] == doctest::Approx(1.0));
  }
  SUBCASE("jump normalization") {
    ControlPath y(pc_path({0.0, 1.0, 2.0}, {v2(0, 0), v2(3, 4), v2(3, 4)}));
    const auto& d = y.decomposition();
    REQUIRE(d.events.size() == 1);
    CHECK(d.events[0].mass == doctest::Approx(5.0));
    CHECK(d.events[0].direction[0] == doctest::Approx(0.6));
    CHECK(d.events[0].direction[1] == doctest::Approx(0.8));
  }
  SUBCASE("staircase total variation equals the segment-length sum") {
    std::vector<Vec> vals = {v2(0, 0), v2(1, 0), v2(1, 1), v2(2, 1), v2(2, 2)};
    ControlPath y(pc_path({0, 1, 2, 3, 4}, vals));
    double oracle = 0.0;
    for (std::size_t i = 1; i < vals.size(); ++i) oracle += (vals[i] - vals[i - 1]).norm();
    CHECK(oracle == doctest::Approx(4.0));
    CHECK(y.total_variation() == doctest::Approx(oracle));
  }
  SUBCASE("reconstruction from directions and masses") {
    ControlPath y = random_control(2, 50, 0.1, 21, 0);
    Vec acc = Vec::Zero(2);
    for (const auto& ev : y.decomposition().events) acc += ev.direction * ev.mass;
    CHECK((acc - y.base().value(y.base().size() - 1)).norm() < 1e-9);
  }
}

TEST_CASE("increment validation against the control cone") {
  Cone orth = Cone::orthant(2);
  PathRcll good = pc_path({0.0, 1.0}, {v2(0, 0), v2(1, 1)});
  validate_increments(good, orth);
  PathRcll bad = pc_path({0.0, 1.0}, {v2(1, 1), v2(0, 0)});
  CHECK_THROWS_AS(validate_increments(bad, orth), SpecError);
}

TEST_CASE("discounted push integral") {
  SUBCASE("jump at time zero counts when the interval is closed at zero") {
    PushCost h = PushCost::linear(v1(1.0));
    ControlPath y(pc_path({0.0, 1.0}, {v1(2.0), v1(2.0)}));
    CHECK(h_integral(h, y, 1.0) == doctest::Approx(2.0));
    CHECK(h_integral(h, y, 1.0, 0.5, 10.0) == doctest::Approx(0.0));
  }
  SUBCASE("unit-speed ramp integrates the exponential") {
    PushCost h = PushCost::linear(v1(1.0));
    std::vector<double> times = fixtures::linspace_grid(0.01, 40.0);
    ControlPath y(ramp_path(times, v1(1.0)));
    CHECK(h_integral(h, y, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("max-of-linear cost on a diagonal ramp") {
    PushCost h = PushCost::max_linear({v2(1, 0), v2(1, 1)});
    std::vector<double> times = fixtures::linspace_grid(0.01, 40.0);
    ControlPath y(ramp_path(times, v2(1.0, 1.0)));
    // branch oracle: h((1,1)) = max(1, 2) = 2, times the exponential mass 1
    CHECK(h(v2(1.0, 1.0)) == doctest::Approx(2.0));
    CHECK(h_integral(h, y, 1.0) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("scaling the control scales the integral exactly") {
    PushCost h = PushCost::max_linear({v2(1, 0), v2(0.5, 1)});
    ControlPath y = random_control(2, 40, 0.05, 3, 1);
    const double base = h_integral(h, y, 1.0);
    Mat scaled = y.base().values() * 2.5;
    ControlPath y2(PathRcll(y.base().times(), std::move(scaled), Interp::PiecewiseConstant));
    CHECK(h_integral(h, y2, 1.0) == doctest::Approx(2.5 * base).epsilon(1e-12));
  }
  SUBCASE("additivity over disjoint time intervals") {
    PushCost h = PushCost::linear(v2(1.0, 2.0));
    ControlPath y = random_control(2, 60, 0.05, 4, 2);
    const double whole = h_integral(h, y, 1.0, 0.0, 3.0);
    const double split =
        h_integral(h, y, 1.0, 0.0, 1.3) + h_integral(h, y, 1.0, 1.3, 3.0);
    CHECK(whole == doctest::Approx(split).epsilon(1e-12));
  }
}

TEST_CASE("subadditivity of every supported push-cost form") {
  Cone orth = Cone::orthant(2);
  std::vector<PushCost> forms = {PushCost::zero(2), PushCost::linear(v2(1.0, 2.0)),
                                 PushCost::max_linear({v2(1, 0), v2(1, 1)})};
  for (const auto& h : forms) {
    for (int i = 0; i < 2000; ++i) {
      Vec y = orth.sample(100, static_cast<std::uint64_t>(2 * i));
      Vec z = orth.sample(100, static_cast<std::uint64_t>(2 * i + 1));
      CHECK(h(y + z) <= h(y) + h(z) + 1e-12 * (1.0 + y.norm() + z.norm()));
    }
  }
}

TEST_CASE("splitting inequality for sums of controls") {
  PushCost h = PushCost::max_linear({v2(1, 0), v2(1, 1)});
  for (int s = 0; s < 50; ++s) {
    ControlPath y1 = random_control(2, 40, 0.05, 200, static_cast<std::uint64_t>(2 * s));
    ControlPath y2 = random_control(2, 40, 0.05, 200, static_cast<std::uint64_t>(2 * s + 1));
    Mat sum = y1.base().values() + y2.base().values();
    ControlPath y(PathRcll(y1.base().times(), std::move(sum), Interp::PiecewiseConstant));
    CHECK(h_integral(h, y, 1.0) <=
          h_integral(h, y1, 1.0) + h_integral(h, y2, 1.0) + 1e-12);
  }
  SUBCASE("equality when the variation measures have disjoint support") {
    for (int s = 0; s < 20; ++s) {
      ControlPath y1 = random_control(2, 40, 0.05, 300, static_cast<std::uint64_t>(s), true, false);
      ControlPath y2 = random_control(2, 40, 0.05, 400, static_cast<std::uint64_t>(s), false, true);
      Mat sum = y1.base().values() + y2.base().values();
      ControlPath y(PathRcll(y1.base().times(), std::move(sum), Interp::PiecewiseConstant));
      const double lhs = h_integral(h, y, 1.0);
      const double rhs = h_integral(h, y1, 1.0) + h_integral(h, y2, 1.0);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
  }
}

TEST_CASE("discounted cost of explicit paths") {
  SUBCASE("outward drift with linear cost") {
    // x = 0, state t, ell = x + 1, beta = 1: integral is 2
    RunningCost ell = RunningCost::linear(v1(1.0), 1.0);
    std::vector<double> times = fixtures::linspace_grid(0.005, 40.0);
    PathRcll X = ramp_path(times, v1(1.0));
    ControlPath Y = ControlPath::zero(times, 1);
    auto dc = discounted_cost(ell, PushCost::zero(1), 1.0, X, Y, 40.0);
    CHECK(dc.value == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(dc.tail_bound < 1e-3);
  }
  SUBCASE("unit cost integrates to one") {
    RunningCost ell = RunningCost::constant(1.0);
    std::vector<double> times = fixtures::linspace_grid(0.01, 40.0);
    PathRcll X = PathRcll::zero(times, 1, Interp::PiecewiseLinear);
    ControlPath Y = ControlPath::zero(times, 1);
    auto dc = discounted_cost(ell, PushCost::zero(1), 1.0, X, Y, 40.0);
    CHECK(dc.value == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("pure jump cost at a known time") {
    const double tj = std::log(2.0);
    std::vector<double> times = {0.0, tj, 2.0};
    PathRcll X = PathRcll::zero(times, 1, Interp::PiecewiseLinear);
    ControlPath Y(pc_path(times, {v1(0.0), v1(1.0), v1(1.0)}));
    auto dc = discounted_cost(RunningCost::constant(0.0), PushCost::linear(v1(1.0)), 1.0,
                              X, Y, 2.0);
    CHECK(dc.value == doctest::Approx(0.5));
  }
  SUBCASE("monotone in the running cost") {
    std::vector<double> times = fixtures::linspace_grid(0.05, 10.0);
    PathRcll X = ramp_path(times, v1(0.5));
    ControlPath Y = ControlPath::zero(times, 1);
    auto lo = discounted_cost(RunningCost::linear(v1(1.0), 0.0), PushCost::zero(1), 1.0, X, Y, 10.0);
    auto hi = discounted_cost(RunningCost::linear(v1(1.0), 1.0), PushCost::zero(1), 1.0, X, Y, 10.0);
    CHECK(lo.value < hi.value);
  }
}

TEST_CASE("bounded-domain cost with exit payoff") {
  Cone X = Cone::half_line();
  SUBCASE("deterministic hit discounts the payoff") {
    // drift 1 from 0 hits r = 1 at time 1
    std::vector<double> times = fixtures::linspace_grid(0.001, 2.0);
    PathRcll Xp = ramp_path(times, v1(1.0));
    ControlPath Y = ControlPath::zero(times, 1);
    int step = 0;
    while (Xp.value(step)[0] < 1.0) ++step;
    ExitData exit{Xp.time(step), Xp.value(step), step};
    auto bc = bounded_cost(RunningCost::constant(0.0), PushCost::zero(1), 1.0, X, Xp, Y,
                           1.0, v1(1.0), [](const Vec&) { return 5.0; }, exit);
    CHECK(bc.exited);
    CHECK(bc.value == doctest::Approx(5.0 * std::exp(-1.0)).epsilon(1e-3));
  }
  SUBCASE("no exit keeps the running integral and reports the tail") {
    std::vector<double> times = fixtures::linspace_grid(0.01, 30.0);
    PathRcll Xp = PathRcll::zero(times, 1, Interp::PiecewiseLinear);
    ControlPath Y = ControlPath::zero(times, 1);
    auto bc = bounded_cost(RunningCost::constant(1.0), PushCost::zero(1), 1.0, X, Xp, Y,
                           1.0, v1(1.0), [](const Vec&) { return 99.0; }, std::nullopt);
    CHECK_FALSE(bc.exited);
    CHECK(bc.value == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(bc.tail_bound < 1e-6);
  }
  SUBCASE("reflected paths price the exit payoff consistently") {
    // with the exact value as exit data, the bounded cost of the optimal
    // (reflect) policy averages back to the value at the start point
    ProblemSpec spec = fixtures::rbm_linear_1d();
    SystemConfig cfg = SystemConfig::from_problem(spec, 1e-3, 31, 1);
    const double r = 2.0;
    const Vec x0 = v1(0.5);
    auto phi = [](const Vec& x) { return fixtures::rbm_linear_exact(x[0]); };
    const int paths = 400;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < paths; ++i) {
      SimResult res = simulate(spec, cfg, x0, Policy::reflect(),
                               static_cast<std::uint64_t>(i), r);
      std::optional<ExitData> exit_data;
      if (res.exit_r) exit_data = ExitData{res.exit_r->time, res.exit_r->state, res.exit_r->step};
      auto bc = bounded_cost(spec.ell, spec.h, spec.beta, *spec.X, res.X, res.Y, r,
                             v1(1.0), phi, exit_data);
      sum += bc.value;
      sq += bc.value * bc.value;
    }
    const double mean = sum / paths;
    const double sd = std::sqrt((sq / paths - mean * mean) / paths);
    CHECK(std::abs(mean - fixtures::rbm_linear_exact(0.5)) < 3.0 * sd + 6e-3);
  }
  SUBCASE("leaving the cone flags an inadmissible control") {
    std::vector<double> times = {0.0, 1.0};
    PathRcll Xp = pc_path(times, {v1(0.5), v1(-0.5)});
    ControlPath Y = ControlPath::zero(times, 1);
    CHECK_THROWS_AS(bounded_cost(RunningCost::constant(1.0), PushCost::zero(1), 1.0, X, Xp,
                                 Y, 1.0, v1(1.0), [](const Vec&) { return 0.0; },
                                 std::nullopt),
                    SpecError);
  }
}
