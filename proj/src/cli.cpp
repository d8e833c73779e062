#include "conectl/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "conectl/hjb.hpp"
#include "conectl/problem.hpp"
#include "conectl/simulate.hpp"
#include "conectl/skorohod.hpp"
#include "conectl/workload.hpp"

namespace conectl {

using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec parse_point(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
  Vec x(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) x[static_cast<Eigen::Index>(i)] = vals[i];
  return x;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
  return vals;
}

std::string out_path(const std::string& name) {
  const char* dir = std::getenv("CONECTL_OUT_DIR");
  if (!dir || !*dir) return name;
  return std::string(dir) + "/" + name;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(out_path(path), std::ios::binary);
  if (!out) throw SpecError("cannot write artifact: " + path);
  out << content;
}

ValueField load_field(const std::string& prefix, const ProblemSpec& spec) {
  std::ifstream meta(out_path(prefix + ".meta.json"));
  if (!meta) throw SpecError("cannot open field metadata: " + prefix + ".meta.json");
  std::stringstream ms;
  ms << meta.rdbuf();
  std::ifstream csv(out_path(prefix + ".csv"));
  if (!csv) throw SpecError("cannot open field CSV: " + prefix + ".csv");
  return ValueField::from_csv(csv, ms.str(), spec);
}

void save_field(const std::string& prefix, const ValueField& field) {
  std::ostringstream csv;
  field.to_csv(csv);
  write_file(prefix + ".csv", csv.str());
  write_file(prefix + ".meta.json", field.metadata_json() + "\n");
}

PathRcll path_from_csv_file(const std::string& file) {
  std::ifstream in(out_path(file));
  if (!in) throw SpecError("cannot open path CSV: " + file);
  std::string line;
  if (!std::getline(in, line)) throw SpecError("empty path CSV");
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 3) throw SpecError("path CSV rows need time, components, is_jump");
    times.push_back(row[0]);
    rows.push_back(std::vector<double>(row.begin() + 1, row.end() - 1));
  }
  if (times.empty()) throw SpecError("path CSV has no samples");
  const int dim = static_cast<int>(rows[0].size());
  Mat vals(dim, static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i)
    for (int d = 0; d < dim; ++d) vals(d, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(d)];
  return PathRcll(times, std::move(vals), Interp::PiecewiseConstant);
}

Policy parse_policy(const std::string& s, const ProblemSpec& spec) {
  if (s == "null") return Policy::null_policy();
  if (s == "reflect") return Policy::reflect();
  if (s.rfind("value:", 0) == 0) {
    ValueField field = load_field(s.substr(6), spec);
    auto table = std::make_shared<PolicyTable>(extract_policy(spec, field));
    return Policy::value_driven(std::move(table));
  }
  if (s.rfind("scripted:", 0) == 0) {
    auto y = std::make_shared<PathRcll>(path_from_csv_file(s.substr(9)));
    return Policy::scripted(std::move(y));
  }
  throw SpecError("unknown policy: " + s +
                  " (use null | reflect | value:PREFIX | scripted:FILE)");
}

json provenance(const ProblemSpec& spec) {
  json j;
  j["spec_hash"] = spec_hash_hex(spec);
  j["tool_version"] = kToolVersion;
  return j;
}

int cmd_validate(const std::string& spec_file, const std::string& out) {
  ProblemSpec spec = problem_from_file(spec_file);
  spec.ell.validate_on(*spec.X);
  spec.h.validate_on(*spec.Y);
  ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  json j = provenance(spec);
  j["u0_hat"] = vec_to_json(vecs.u0_hat);
  j["y0_hat"] = vec_to_json(vecs.y0_hat);
  j["u1_hat"] = vec_to_json(vecs.u1_hat);
  j["y1_hat"] = vec_to_json(vecs.y1_hat);
  j["a0"] = vecs.a0;
  j["conditions"] = {
      {"sigma_nondegenerate", spec.sigma_nondegenerate()},
      {"drift_inward", spec.cond_drift_holds(vecs.u1_hat)},
      {"uniqueness_precondition",
       spec.sigma_nondegenerate() || spec.cond_drift_holds(vecs.u1_hat)},
      {"push_cost_lower_bounded", spec.cond_push_lower_bound_holds()}};
  j["warnings"] = spec.condition_warnings(vecs.u1_hat);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) write_file(out, text);
  return 0;
}

SchemeParams make_params(double mesh, double tol, double delta, double damping,
                         int max_iter, const std::string& dirichlet, bool refine) {
  SchemeParams p;
  p.mesh = mesh;
  p.tol = tol;
  p.delta = delta;
  p.damping = damping;
  p.max_iterations = max_iter;
  p.refine_directions = refine;
  if (dirichlet == "growth_matched")
    p.dirichlet_mode = SchemeParams::DirichletMode::GrowthMatched;
  else if (dirichlet == "extend_previous")
    p.dirichlet_mode = SchemeParams::DirichletMode::ExtendPrevious;
  else
    throw SpecError("unknown dirichlet mode: " + dirichlet);
  return p;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"singular control on cones: solve, simulate, verify, reduce"};
  app.require_subcommand(1);

  std::string spec_file, out, field_prefix, policy_str, bcp_file, dirichlet = "growth_matched";
  std::string x_str, r_list_str, init_mode = "growth";
  double r = 1.0, mesh = 0.1, tol = 1e-8, delta = 0.0, damping = 1.0;
  double constant_field = std::numeric_limits<double>::quiet_NaN();
  double eps = 0.5, t_horizon = 1.0, dt = 1e-3, horizon = 0.0, tol_check = -1.0;
  int max_iter = 1'000'000, n_paths = 10'000, threads = 1;
  std::uint64_t seed = 0;
  bool prefer_nonneg = false, refine = false;
  std::string per_path_csv, dump_path;

  auto* validate_cmd = app.add_subcommand("validate", "check the geometric assumptions");
  validate_cmd->add_option("--spec", spec_file)->required();
  validate_cmd->add_option("--out", out);

  auto* solve_cmd = app.add_subcommand("solve", "solve on a truncated domain");
  solve_cmd->add_option("--spec", spec_file)->required();
  solve_cmd->add_option("--r", r)->required();
  solve_cmd->add_option("--mesh", mesh)->required();
  solve_cmd->add_option("--tol", tol);
  solve_cmd->add_option("--delta", delta);
  solve_cmd->add_option("--damping", damping);
  solve_cmd->add_option("--max-iter", max_iter);
  solve_cmd->add_option("--dirichlet", dirichlet);
  solve_cmd->add_option("--init", init_mode)->description("growth | zero");
  solve_cmd->add_flag("--refine-directions", refine);
  solve_cmd->add_option("--out", field_prefix)->description("artifact prefix");

  auto* nested_cmd = app.add_subcommand("solve-nested", "solve on growing domains");
  nested_cmd->add_option("--spec", spec_file)->required();
  nested_cmd->add_option("--r-list", r_list_str)->required();
  nested_cmd->add_option("--mesh", mesh)->required();
  nested_cmd->add_option("--tol", tol);
  nested_cmd->add_option("--delta", delta);
  nested_cmd->add_option("--damping", damping);
  nested_cmd->add_option("--max-iter", max_iter);
  nested_cmd->add_option("--dirichlet", dirichlet);
  nested_cmd->add_option("--out", field_prefix);

  auto* residual_cmd = app.add_subcommand("residual", "discrete viscosity checks");
  residual_cmd->add_option("--spec", spec_file)->required();
  residual_cmd->add_option("--field", field_prefix);
  residual_cmd->add_option("--constant", constant_field);
  residual_cmd->add_option("--r", r);
  residual_cmd->add_option("--mesh", mesh);
  residual_cmd->add_option("--tol-check", tol_check);
  residual_cmd->add_option("--out", out);

  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo value estimate");
  sim_cmd->add_option("--spec", spec_file)->required();
  sim_cmd->add_option("--x", x_str)->required();
  sim_cmd->add_option("--policy", policy_str)->required();
  sim_cmd->add_option("--paths", n_paths);
  sim_cmd->add_option("--seed", seed);
  sim_cmd->add_option("--dt", dt);
  sim_cmd->add_option("--horizon", horizon);
  sim_cmd->add_option("--threads", threads);
  sim_cmd->add_option("--per-path-csv", per_path_csv);
  sim_cmd->add_option("--dump-path", dump_path)
      ->description("write the first path's state and control CSVs");
  sim_cmd->add_option("--out", out);

  auto* dpp_cmd = app.add_subcommand("dpp-check", "dynamic-programming functional gap");
  dpp_cmd->add_option("--spec", spec_file)->required();
  dpp_cmd->add_option("--x", x_str)->required();
  dpp_cmd->add_option("--eps", eps)->required();
  dpp_cmd->add_option("--t", t_horizon)->required();
  dpp_cmd->add_option("--policy", policy_str)->required();
  dpp_cmd->add_option("--field", field_prefix)->required();
  dpp_cmd->add_option("--paths", n_paths);
  dpp_cmd->add_option("--seed", seed);
  dpp_cmd->add_option("--dt", dt);
  dpp_cmd->add_option("--out", out);

  auto* reduce_cmd = app.add_subcommand("reduce", "workload reduction of a BCP");
  reduce_cmd->add_option("--bcp", bcp_file)->required();
  reduce_cmd->add_flag("--prefer-nonneg", prefer_nonneg);
  reduce_cmd->add_option("--out", out);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    json err;
    err["error"] = {{"type", "usage"}, {"message", e.what()}};
    std::cout << err.dump(2) << "\n";
    return 2;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(spec_file, out);

    if (solve_cmd->parsed()) {
      ProblemSpec spec = problem_from_file(spec_file);
      SchemeParams params = make_params(mesh, tol, delta, damping, max_iter, dirichlet, refine);
      SolveOptions opts;
      if (init_mode == "zero") {
        ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
        Grid g = discretize(spec, vecs, r, params);
        opts.f0 = std::vector<double>(static_cast<std::size_t>(g.size()), 0.0);
      } else if (init_mode != "growth") {
        throw SpecError("unknown init mode: " + init_mode);
      }
      ValueField field = solve(spec, r, params, opts);
      std::cout << field.metadata_json() << "\n";
      if (!field_prefix.empty()) save_field(field_prefix, field);
      return 0;
    }

    if (nested_cmd->parsed()) {
      ProblemSpec spec = problem_from_file(spec_file);
      SchemeParams params = make_params(mesh, tol, delta, damping, max_iter, dirichlet, false);
      std::vector<double> r_list = parse_list(r_list_str);
      NestedResult res = solve_nested(spec, r_list, params);
      json j = provenance(spec);
      j["r_list"] = r_list;
      j["interior_change"] = res.interior_change;
      j["growth_constants"] = res.growth_constants;
      json warn = json::array();
      for (const auto& w : res.fields.back().meta.warnings) warn.push_back(w);
      j["warnings"] = warn;
      std::cout << j.dump(2) << "\n";
      if (!field_prefix.empty())
        for (std::size_t i = 0; i < res.fields.size(); ++i) {
          std::ostringstream name;
          name << field_prefix << "_r" << r_list[i];
          save_field(name.str(), res.fields[i]);
        }
      return 0;
    }

    if (residual_cmd->parsed()) {
      ProblemSpec spec = problem_from_file(spec_file);
      ValueField field = [&]() {
        if (!field_prefix.empty()) return load_field(field_prefix, spec);
        if (std::isnan(constant_field))
          throw SpecError("residual needs --field or --constant with --r/--mesh");
        SchemeParams params;
        params.mesh = mesh;
        return ValueField::constant(spec, r, params, constant_field);
      }();
      ResidualReport rep = viscosity_residual(spec, field);
      const double tc = tol_check > 0.0 ? tol_check : 10.0 * tol;
      json j = json::parse(rep.to_json());
      j.update(provenance(spec));
      j["tol_check"] = tc;
      j["subsolution_ok"] = rep.subsolution_ok(tc);
      j["supersolution_ok"] = rep.supersolution_ok(tc);
      const std::string text = j.dump(2) + "\n";
      std::cout << text;
      if (!out.empty()) write_file(out, text);
      return 0;
    }

    if (sim_cmd->parsed()) {
      ProblemSpec spec = problem_from_file(spec_file);
      Policy policy = parse_policy(policy_str, spec);
      SystemConfig cfg = SystemConfig::from_problem(spec, dt, seed, n_paths);
      cfg.horizon = horizon;
      cfg.threads = threads;
      const Vec x = parse_point(x_str);
      Estimate est = estimate_value(spec, cfg, x, policy);
      json j = provenance(spec);
      j["mean"] = est.mean;
      j["ci"] = est.ci_halfwidth;
      j["tail_bound"] = est.tail_bound;
      j["n_paths"] = est.n_paths;
      j["seed"] = est.seed;
      j["dt"] = dt;
      j["x"] = vec_to_json(x);
      j["policy"] = policy_str;
      const std::string text = j.dump(2) + "\n";
      std::cout << text;
      if (!out.empty()) write_file(out, text);
      if (!dump_path.empty()) {
        SystemConfig one = cfg;
        one.n_paths = 1;
        SimResult sr = simulate(spec, one, x, policy, 0);
        std::ostringstream xs, ys;
        sr.X.to_csv(xs);
        sr.Y.base().to_csv(ys);
        write_file(dump_path + ".state.csv", xs.str());
        write_file(dump_path + ".control.csv", ys.str());
      }
      if (!per_path_csv.empty()) {
        std::ostringstream csv;
        csv << "path_index,cost\n";
        csv.precision(17);
        for (int i = 0; i < std::min(n_paths, 1000); ++i) {
          SystemConfig one = cfg;
          one.n_paths = 1;
          SimResult sr = simulate(spec, one, x, policy, static_cast<std::uint64_t>(i));
          DiscountedCost dc = discounted_cost(spec.ell, spec.h, spec.beta, sr.X, sr.Y,
                                              cfg.effective_horizon(spec.beta));
          csv << i << "," << dc.value << "\n";
        }
        write_file(per_path_csv, csv.str());
      }
      return 0;
    }

    if (dpp_cmd->parsed()) {
      ProblemSpec spec = problem_from_file(spec_file);
      Policy policy = parse_policy(policy_str, spec);
      ValueField field = load_field(field_prefix, spec);
      SystemConfig cfg = SystemConfig::from_problem(spec, dt, seed, n_paths);
      const Vec x = parse_point(x_str);
      DppResult res = dpp_check(spec, cfg, x, policy, field, eps, t_horizon);
      json j = provenance(spec);
      j["functional"] = res.functional;
      j["ci"] = res.ci_halfwidth;
      j["value_at_x"] = res.value_at_x;
      j["gap"] = res.gap;
      j["eps"] = eps;
      j["t"] = t_horizon;
      j["seed"] = seed;
      const std::string text = j.dump(2) + "\n";
      std::cout << text;
      if (!out.empty()) write_file(out, text);
      return 0;
    }

    if (reduce_cmd->parsed()) {
      BcpSpec bcp = bcp_from_file(bcp_file);
      WorkloadProblem wp = reduce(bcp, prefer_nonneg);
      ProblemSpec lifted = lift_problem(wp, bcp);
      const std::string wp_text = workload_to_json(wp) + "\n";
      std::cout << wp_text;
      if (!out.empty()) {
        write_file(out + ".workload.json", wp_text);
        write_file(out + ".problem.json", problem_to_json(lifted) + "\n");
      }
      return 0;
    }
  } catch (const AssumptionViolated& e) {
    json err;
    err["error"] = {{"type", "assumption_violated"}, {"which", e.which}, {"message", e.what()}};
    std::cout << err.dump(2) << "\n";
    return 3;
  } catch (const ConvergenceError& e) {
    json err;
    err["error"] = {{"type", "non_convergence"},
                    {"message", e.what()},
                    {"residual_history", e.residual_history}};
    std::cout << err.dump(2) << "\n";
    return 4;
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"type", "spec_error"}, {"message", e.what()}};
    std::cout << err.dump(2) << "\n";
    return 2;
  }
  return 2;
}

}  // namespace conectl
