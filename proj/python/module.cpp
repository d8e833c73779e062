#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "conectl/hjb.hpp"
#include "conectl/problem.hpp"
#include "conectl/simulate.hpp"
#include "conectl/skorohod.hpp"
#include "conectl/workload.hpp"

namespace py = pybind11;
using namespace conectl;

namespace {

Vec to_vec(const std::vector<double>& v) {
  Vec x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
  return x;
}

std::vector<double> from_vec(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Policy make_policy(const std::string& kind, const ProblemSpec& spec,
                   const ValueField* field) {
  if (kind == "null") return Policy::null_policy();
  if (kind == "reflect") return Policy::reflect();
  if (kind == "value_driven") {
    if (!field) throw SpecError("value_driven policy needs a solved field");
    auto table = std::make_shared<PolicyTable>(extract_policy(spec, *field));
    return Policy::value_driven(std::move(table));
  }
  throw SpecError("unknown policy kind: " + kind);
}

}  // namespace

PYBIND11_MODULE(_conectl, m) {
  m.doc() = "singular control on cones: geometry checks, HJB solves, Monte Carlo";

  py::register_exception<SpecError>(m, "SpecError");
  py::register_exception<AssumptionViolated>(m, "AssumptionViolated");
  py::register_exception<ConvergenceError>(m, "ConvergenceError");
  py::register_exception<DomainError>(m, "DomainErrorCpp");

  py::class_<ProblemSpec>(m, "Problem")
      .def_static("from_json", &problem_from_json)
      .def_static("from_file", &problem_from_file)
      .def("to_json", &problem_to_json)
      .def_property_readonly("k", &ProblemSpec::k)
      .def_property_readonly("p", &ProblemSpec::p)
      .def_property_readonly("spec_hash", &spec_hash_hex);

  m.def("validate", [](const ProblemSpec& spec) {
    ConeVectors v = validate_assumptions(*spec.X, *spec.Y, spec.G);
    py::dict d;
    d["u0_hat"] = from_vec(v.u0_hat);
    d["y0_hat"] = from_vec(v.y0_hat);
    d["u1_hat"] = from_vec(v.u1_hat);
    d["y1_hat"] = from_vec(v.y1_hat);
    d["a0"] = v.a0;
    d["warnings"] = spec.condition_warnings(v.u1_hat);
    return d;
  });

  py::class_<ValueField>(m, "ValueField")
      .def("at", [](const ValueField& f, const std::vector<double>& x) { return f.at(to_vec(x)); })
      .def("values", [](const ValueField& f) { return f.values; })
      .def("coords", [](const ValueField& f) {
        std::vector<std::vector<double>> out;
        for (int i = 0; i < f.grid->size(); ++i) out.push_back(from_vec(f.grid->coord(i)));
        return out;
      })
      .def("node_classes", [](const ValueField& f) {
        std::vector<std::string> out;
        for (int i = 0; i < f.grid->size(); ++i)
          out.push_back(f.grid->node_class(i) == NodeClass::Interior        ? "interior"
                        : f.grid->node_class(i) == NodeClass::ConeBoundary ? "cone_boundary"
                                                                            : "dirichlet");
        return out;
      })
      .def("metadata_json", &ValueField::metadata_json)
      .def("to_csv", [](const ValueField& f) {
        std::ostringstream os;
        f.to_csv(os);
        return os.str();
      });

  m.def(
      "solve",
      [](const ProblemSpec& spec, double r, double mesh, double tol, bool zero_init) {
        SchemeParams params;
        params.mesh = mesh;
        params.tol = tol;
        SolveOptions opts;
        if (zero_init) {
          ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
          Grid g = discretize(spec, vecs, r, params);
          opts.f0 = std::vector<double>(static_cast<std::size_t>(g.size()), 0.0);
        }
        return solve(spec, r, params, opts);
      },
      py::arg("spec"), py::arg("r"), py::arg("mesh"), py::arg("tol") = 1e-8,
      py::arg("zero_init") = false);

  m.def("residual", [](const ProblemSpec& spec, const ValueField& f) {
    ResidualReport rep = viscosity_residual(spec, f);
    py::dict d;
    d["interior_sub_worst"] = rep.interior_sub_worst;
    d["interior_super_worst"] = rep.interior_super_worst;
    d["boundary_super_worst"] = rep.boundary_super_worst;
    return d;
  });

  m.def(
      "constant_field",
      [](const ProblemSpec& spec, double r, double mesh, double c) {
        SchemeParams params;
        params.mesh = mesh;
        return ValueField::constant(spec, r, params, c);
      },
      py::arg("spec"), py::arg("r"), py::arg("mesh"), py::arg("c"));

  m.def(
      "estimate_value",
      [](const ProblemSpec& spec, const std::vector<double>& x, const std::string& policy,
         int n_paths, double dt, std::uint64_t seed, const ValueField* field) {
        SystemConfig cfg = SystemConfig::from_problem(spec, dt, seed, n_paths);
        Estimate est = estimate_value(spec, cfg, to_vec(x), make_policy(policy, spec, field));
        py::dict d;
        d["mean"] = est.mean;
        d["ci"] = est.ci_halfwidth;
        d["tail_bound"] = est.tail_bound;
        return d;
      },
      py::arg("spec"), py::arg("x"), py::arg("policy") = "reflect",
      py::arg("n_paths") = 1000, py::arg("dt") = 1e-3, py::arg("seed") = 0,
      py::arg("field") = nullptr);

  m.def(
      "dpp_check",
      [](const ProblemSpec& spec, const std::vector<double>& x, const std::string& policy,
         const ValueField& field, double eps, double t, int n_paths, double dt,
         std::uint64_t seed) {
        SystemConfig cfg = SystemConfig::from_problem(spec, dt, seed, n_paths);
        DppResult res =
            dpp_check(spec, cfg, to_vec(x), make_policy(policy, spec, &field), field, eps, t);
        py::dict d;
        d["functional"] = res.functional;
        d["ci"] = res.ci_halfwidth;
        d["value_at_x"] = res.value_at_x;
        d["gap"] = res.gap;
        return d;
      },
      py::arg("spec"), py::arg("x"), py::arg("policy"), py::arg("field"), py::arg("eps"),
      py::arg("t"), py::arg("n_paths") = 1000, py::arg("dt") = 1e-3, py::arg("seed") = 0);

  m.def("reduce_bcp", [](const std::string& bcp_json, bool prefer_nonneg) {
    BcpSpec bcp = bcp_from_json(bcp_json);
    WorkloadProblem wp = reduce(bcp, prefer_nonneg);
    py::dict d;
    d["workload_json"] = workload_to_json(wp);
    d["problem_json"] = problem_to_json(lift_problem(wp, bcp));
    d["q"] = wp.q;
    d["k"] = wp.k;
    d["mr_gk_residual"] = wp.mr_gk_residual;
    return d;
  }, py::arg("bcp_json"), py::arg("prefer_nonneg") = false);

  m.def("effective_cost", [](const std::string& bcp_json, const std::vector<double>& x) {
    BcpSpec bcp = bcp_from_json(bcp_json);
    WorkloadProblem wp = reduce(bcp);
    EffectiveCost ec = effective_cost(wp, bcp, to_vec(x));
    py::dict d;
    d["value"] = ec.value;
    d["argmin"] = from_vec(ec.argmin);
    return d;
  });

  m.def("reflect_path",
        [](const ProblemSpec& spec, const std::vector<double>& times,
           const std::vector<std::vector<double>>& z_values) {
          ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
          const int k = spec.k();
          Mat vals(k, static_cast<Eigen::Index>(times.size()));
          for (std::size_t i = 0; i < z_values.size(); ++i)
            vals.col(static_cast<Eigen::Index>(i)) = to_vec(z_values[i]);
          PathRcll z(times, std::move(vals), Interp::PiecewiseLinear);
          PathRcll x = gamma(*spec.X, vecs.u0_hat, z);
          PathRcll v = gamma_hat(*spec.X, vecs.u0_hat, z);
          std::vector<std::vector<double>> xs;
          std::vector<double> vs;
          for (int i = 0; i < x.size(); ++i) {
            xs.push_back(from_vec(x.value(i)));
            vs.push_back(v.value(i)[0]);
          }
          py::dict d;
          d["x"] = xs;
          d["v"] = vs;
          return d;
        });

  m.attr("__version__") = kToolVersion;
}
