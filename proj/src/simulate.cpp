#include "conectl/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "conectl/rng.hpp"
#include "conectl/skorohod.hpp"

namespace conectl {

namespace {

double pairwise_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

double pairwise_mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return pairwise_sum(v, 0, v.size()) / static_cast<double>(v.size());
}

Mat covariance_factor(const Mat& Sigma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
  if (es.info() != Eigen::Success) throw SpecError("covariance eigen-decomposition failed");
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, Sigma.norm());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale)
      throw SpecError("Sigma is not positive semdefinite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal();
}

struct SimContext {
  ConeVectors vecs;
  Mat L;  // Sigma^(1/2)
  std::vector<double> times;
  double sqrt_dt;
  Vec drift_dt;
  // per facet: inverse clearance of u0 and the one-step variance of the
  // facet-projected diffusion, for the bridge-minimum refinement
  std::vector<double> inv_u0_dot_n;
  std::vector<double> facet_var_dt;
  bool bridge = false;
};

SimContext prepare(const ProblemSpec& spec, const SystemConfig& cfg) {
  spec.check_dimensions();
  cfg.validate();
  SimContext ctx;
  ctx.vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  ctx.L = covariance_factor(cfg.Sigma);
  ctx.times = uniform_grid(cfg.dt, cfg.effective_horizon(spec.beta));
  ctx.sqrt_dt = std::sqrt(cfg.dt);
  ctx.drift_dt = cfg.b * cfg.dt;
  ctx.bridge = cfg.bridge_correction;
  for (const auto& n : spec.X->normals()) {
    ctx.inv_u0_dot_n.push_back(1.0 / ctx.vecs.u0_hat.dot(n));
    ctx.facet_var_dt.push_back(n.dot(cfg.Sigma * n) * cfg.dt);
  }
  return ctx;
}

// Walks the interpolated push-region indicator along gy and returns the step
// length to the 0.5 level crossing.
double push_extent(const PolicyTable& table, const Vec& x, const Vec& gy) {
  const Grid& g = *table.grid;
  const double step = 0.5 * g.mesh();
  auto indicator = [&](const Vec& q) -> std::optional<double> {
    Grid::Interpolation interp;
    if (!g.interpolation_at(q, interp)) return std::nullopt;
    double acc = 0.0;
    for (const auto& [node, w] : interp.terms)
      acc += w * (table.push_at(node) ? 1.0 : 0.0);
    return acc;
  };
  double s_prev = 0.0;
  auto ind_prev = indicator(x);
  if (!ind_prev || *ind_prev < 0.5) return 0.0;
  const double s_max = 2.0 * g.r();
  for (double s = step; s <= s_max; s += step) {
    auto ind = indicator(x + s * gy);
    if (!ind) return s_prev;
    if (*ind < 0.5) {
      // linear interpolation of the indicator between the two probes
      const double w = (*ind_prev - 0.5) / std::max(*ind_prev - *ind, 1e-12);
      return s_prev + w * (s - s_prev);
    }
    s_prev = s;
    ind_prev = ind;
  }
  return s_prev;
}

struct PathAccumulator {
  double cost = 0.0;       // discounted running + push cost so far
  double prev_ell = 0.0;   // e^{-beta t_i} ell(x_i)
};

// One controlled path, streaming; on_state is called after every step with
// (i, t, x, dY, stop) and may stop the walk early.
template <typename StateFn>
void run_path(const ProblemSpec& spec, const SystemConfig& cfg, const SimContext& ctx,
              const Vec& x0, const Policy& policy, std::uint64_t path_index,
              StateFn&& on_state) {
  const int k = spec.k();
  const int p = spec.p();
  if (!spec.X->contains(x0, 1e-9 * (1.0 + x0.norm())))
    throw SpecError("simulate: start point not in X");
  CounterRng rng(cfg.seed, path_index);
  Vec x = x0;
  Vec y = Vec::Zero(p);
  Vec xi(k), noise(k), dy(p), x_pre(k);
  const bool reflecting = policy.kind == Policy::Kind::Reflect ||
                          policy.kind == Policy::Kind::ValueDriven;
  const auto& normals = spec.X->normals();

  auto apply_policy_jump = [&]() {
    if (policy.kind == Policy::Kind::ValueDriven) {
      const int node = policy.table->grid->nearest_node(x);
      if (node >= 0 && policy.table->push_at(node)) {
        const auto& dir = policy.table->H.dirs[static_cast<std::size_t>(
            policy.table->push_dir[static_cast<std::size_t>(node)])];
        const double s = push_extent(*policy.table, x, dir.gy);
        if (s > 0.0) {
          x += s * dir.gy;
          y += s * dir.y;
          dy += s * dir.y;
        }
      }
    }
    if (reflecting) {
      double a = 0.0;  // allocation-free alpha along u0
      for (std::size_t fn = 0; fn < normals.size(); ++fn)
        a = std::max(a, -normals[fn].dot(x) * ctx.inv_u0_dot_n[fn]);
      if (a > 0.0) {
        x += a * ctx.vecs.u0_hat;
        y += a * ctx.vecs.y0_hat;
        dy += a * ctx.vecs.y0_hat;
      }
    }
  };

  dy.setZero();
  if (policy.kind == Policy::Kind::Scripted) {
    // initial jump against the Y(0-) = 0 convention
    const Vec y0 = policy.script->at(0.0);
    if (y0.norm() > 0.0) {
      dy += y0;
      x += spec.G * y0;
      y = y0;
    }
  }
  apply_policy_jump();
  if (!on_state(0, 0.0, x, y, dy)) return;

  const int n = static_cast<int>(ctx.times.size());
  for (int i = 1; i < n; ++i) {
    for (int d = 0; d < k; ++d) xi[d] = rng.normal();
    noise.noalias() = ctx.L * xi;
    x_pre = x;
    x += ctx.drift_dt;
    x += ctx.sqrt_dt * noise;
    dy.setZero();
    if (reflecting && ctx.bridge) {
      // pushing sized by the within-step minimum of each facet-projected
      // bridge rather than the endpoint alone
      double zeta = 0.0;
      for (std::size_t fn = 0; fn < normals.size(); ++fn) {
        const double var = ctx.facet_var_dt[fn];
        if (var <= 0.0) continue;
        const double a = normals[fn].dot(x_pre);
        const double b = normals[fn].dot(x);
        const double u = rng.uniform();
        const double mn =
            0.5 * (a + b - std::sqrt((a - b) * (a - b) - 2.0 * var * std::log(u)));
        if (mn < 0.0) zeta = std::max(zeta, -mn * ctx.inv_u0_dot_n[fn]);
      }
      if (zeta > 0.0) {
        x += zeta * ctx.vecs.u0_hat;
        y += zeta * ctx.vecs.y0_hat;
        dy += zeta * ctx.vecs.y0_hat;
      }
    }
    if (policy.kind == Policy::Kind::Scripted) {
      const Vec ynew = policy.script->at(ctx.times[static_cast<std::size_t>(i)]);
      dy += ynew - y;
      x += spec.G * (ynew - y);
      y = ynew;
    }
    apply_policy_jump();
    if (!spec.X->contains(x, 1e-7 * (1.0 + x.norm())))
      throw SpecError("simulate: state left X (policy is not admissible here)");
    if (!on_state(i, ctx.times[static_cast<std::size_t>(i)], x, y, dy)) return;
  }
}

}  // namespace

SystemConfig SystemConfig::from_problem(const ProblemSpec& spec, double dt,
                                        std::uint64_t seed, int n_paths) {
  SystemConfig cfg;
  cfg.b = spec.b;
  cfg.Sigma = spec.Sigma;
  cfg.dt = dt;
  cfg.seed = seed;
  cfg.n_paths = n_paths;
  return cfg;
}

double SystemConfig::effective_horizon(double beta) const {
  if (horizon > 0.0) return horizon;
  return std::log(1.0 / tail_tol) / beta;
}

void SystemConfig::validate() const {
  if (!(dt > 0.0)) throw SpecError("dt must be positive");
  if (n_paths <= 0) throw SpecError("n_paths must be positive");
  covariance_factor(Sigma);  // throws on non-PSD
}

PathRcll sample_brownian(const SystemConfig& cfg, std::uint64_t path_index) {
  cfg.validate();
  const int k = static_cast<int>(cfg.b.size());
  const std::vector<double> times = uniform_grid(cfg.dt, cfg.horizon > 0.0 ? cfg.horizon : 1.0);
  const Mat L = covariance_factor(cfg.Sigma);
  CounterRng rng(cfg.seed, path_index);
  Mat vals(k, static_cast<Eigen::Index>(times.size()));
  vals.col(0).setZero();
  Vec xi(k);
  const double sdt = std::sqrt(cfg.dt);
  for (std::size_t i = 1; i < times.size(); ++i) {
    for (int d = 0; d < k; ++d) xi[d] = rng.normal();
    vals.col(static_cast<Eigen::Index>(i)) =
        vals.col(static_cast<Eigen::Index>(i - 1)) + cfg.b * cfg.dt + sdt * (L * xi);
  }
  return PathRcll(times, std::move(vals), Interp::PiecewiseLinear);
}

SimResult simulate(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                   const Policy& policy, std::uint64_t path_index,
                   std::optional<double> r) {
  SimContext ctx = prepare(spec, cfg);
  const int n = static_cast<int>(ctx.times.size());
  Mat xv(spec.k(), n), yv(spec.p(), n);
  std::optional<ExitData> exit_r;
  run_path(spec, cfg, ctx, x, policy, path_index,
           [&](int i, double t, const Vec& xs, const Vec& ys, const Vec&) {
             xv.col(i) = xs;
             yv.col(i) = ys;
             if (r && !exit_r && xs.dot(ctx.vecs.u1_hat) >= *r)
               exit_r = ExitData{t, xs, i};
             return true;
           });
  PathRcll X(ctx.times, std::move(xv), Interp::PiecewiseLinear);
  ControlPath Y(PathRcll(ctx.times, std::move(yv), Interp::PiecewiseConstant));
  validate_increments(Y.base(), *spec.Y, 1e-7);
  return {std::move(X), std::move(Y), exit_r};
}

Estimate estimate_value(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                        const Policy& policy) {
  if (policy.kind == Policy::Kind::Scripted)
    validate_increments(*policy.script, *spec.Y, 1e-9);
  SimContext ctx = prepare(spec, cfg);
  const double beta = spec.beta;
  const double m_ell = spec.ell.m_ell();
  const double T = ctx.times.back();
  std::vector<double> costs(static_cast<std::size_t>(cfg.n_paths), 0.0);
  std::vector<double> tails(static_cast<std::size_t>(cfg.n_paths), 0.0);

  auto run_one = [&](std::uint64_t pi) {
    double integral = 0.0, push = 0.0;
    double prev_g = 0.0, prev_t = 0.0;
    double tv_mid = 0.0, tv_end = 0.0;
    Vec x_final;
    run_path(spec, cfg, ctx, x, policy, pi,
             [&](int i, double t, const Vec& xs, const Vec&, const Vec& dy) {
               const double g = std::exp(-beta * t) * spec.ell(xs);
               if (i > 0) integral += 0.5 * (prev_g + g) * (t - prev_t);
               prev_g = g;
               prev_t = t;
               const double dyn = dy.norm();
               if (dyn > 0.0) {
                 push += std::exp(-beta * t) * spec.h(dy);
                 tv_end += dyn;
                 if (t <= 0.5 * T) tv_mid = tv_end;
               }
               x_final = xs;
               return true;
             });
    costs[static_cast<std::size_t>(pi)] = integral + push;
    const double rate = (tv_end - tv_mid) / std::max(0.5 * T, 1e-12);
    tails[static_cast<std::size_t>(pi)] =
        std::exp(-beta * T) *
        (spec.ell.c3() * (1.0 + std::pow(x_final.norm(), m_ell)) / beta +
         spec.h.lipschitz() * rate / beta);
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    for (int i = 0; i < cfg.n_paths; ++i) run_one(static_cast<std::uint64_t>(i));
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        int i;
        while ((i = next.fetch_add(1)) < cfg.n_paths) run_one(static_cast<std::uint64_t>(i));
      });
    for (auto& th : pool) th.join();
  }

  Estimate est;
  est.n_paths = cfg.n_paths;
  est.seed = cfg.seed;
  est.mean = pairwise_mean(costs);
  double var = 0.0;
  for (double c : costs) var += (c - est.mean) * (c - est.mean);
  var /= std::max(1, cfg.n_paths - 1);
  est.ci_halfwidth = 1.959963984540054 * std::sqrt(var / cfg.n_paths);
  est.tail_bound = pairwise_mean(tails);
  return est;
}

DppResult dpp_check(const ProblemSpec& spec, const SystemConfig& cfg, const Vec& x,
                    const Policy& policy, const ValueField& V, double eps, double t) {
  if (!(t > 0.0)) throw SpecError("dpp_check needs t > 0");
  if (policy.kind == Policy::Kind::Scripted)
    validate_increments(*policy.script, *spec.Y, 1e-9);
  SystemConfig cfg_local = cfg;
  cfg_local.horizon = t;  // the functional never looks past t
  SimContext ctx = prepare(spec, cfg_local);
  const double beta = spec.beta;
  std::vector<double> vals(static_cast<std::size_t>(cfg.n_paths), 0.0);
  for (int pi = 0; pi < cfg.n_paths; ++pi) {
    double integral = 0.0, push = 0.0;
    double prev_g = 0.0, prev_t = 0.0;
    double stopped_value = 0.0;
    run_path(spec, cfg_local, ctx, x, policy, static_cast<std::uint64_t>(pi),
             [&](int i, double s, const Vec& xs, const Vec&, const Vec& dy) {
               const double g = std::exp(-beta * s) * spec.ell(xs);
               if (i > 0) integral += 0.5 * (prev_g + g) * (s - prev_t);
               prev_g = g;
               prev_t = s;
               if (dy.norm() > 0.0) push += std::exp(-beta * s) * spec.h(dy);
               const bool stop = ((xs - x).norm() >= eps) || (s >= t - 1e-12);
               if (stop) stopped_value = std::exp(-beta * s) * V.at(xs);
               return !stop;
             });
    vals[static_cast<std::size_t>(pi)] = integral + push + stopped_value;
  }
  DppResult out;
  out.functional = pairwise_mean(vals);
  double var = 0.0;
  for (double v : vals) var += (v - out.functional) * (v - out.functional);
  var /= std::max(1, cfg.n_paths - 1);
  out.ci_halfwidth = 1.959963984540054 * std::sqrt(var / cfg.n_paths);
  out.value_at_x = V.at(x);
  out.gap = out.functional - out.value_at_x;
  return out;
}

}  // namespace conectl
