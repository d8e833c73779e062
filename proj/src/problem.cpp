#include "conectl/problem.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace conectl {

using nlohmann::json;

void ProblemSpec::check_dimensions() const {
  if (!X || !Y) throw SpecError("problem spec missing a cone");
  if (G.rows() != k() || G.cols() != p()) throw SpecError("G must be k x p");
  if (b.size() != k()) throw SpecError("drift b must have dimension k");
  if (Sigma.rows() != k() || Sigma.cols() != k()) throw SpecError("Sigma must be k x k");
  if ((Sigma - Sigma.transpose()).norm() > 1e-10 * (1.0 + Sigma.norm()))
    throw SpecError("Sigma must be symmetric");
  if (!(beta > 0.0)) throw SpecError("beta must be positive");
  if (h.dim() != p()) throw SpecError("push cost dimension must be p");
}

bool ProblemSpec::sigma_nondegenerate(double tol) const {
  Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
  return es.eigenvalues().minCoeff() > tol * (1.0 + Sigma.norm());
}

bool ProblemSpec::cond_drift_holds(const Vec& u1_hat, double tol) const {
  return u1_hat.dot(b) > tol;
}

bool ProblemSpec::cond_push_lower_bound_holds() const {
  return h.c_h.has_value() && *h.c_h > 0.0;
}

std::vector<std::string> ProblemSpec::condition_warnings(const Vec& u1_hat) const {
  std::vector<std::string> w;
  const bool nondeg = sigma_nondegenerate();
  if (!nondeg && !cond_drift_holds(u1_hat))
    w.push_back("uniqueness precondition fails: Sigma is degenerate and u1.b <= 0; "
                "the solved field may be one of several solutions");
  if (!cond_push_lower_bound_holds())
    w.push_back("uniqueness caveat: push cost has no positive lower bound c_h|y|; "
                "uniqueness holds only among functions with compact level sets and "
                "the solver targets the maximal solution");
  return w;
}

namespace {

Vec vec_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Mat mat_from_json(const json& j) {
  if (j.empty()) return Mat(0, 0);
  const auto rows = j.size(), cols = j[0].size();
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw SpecError("ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

json mat_to_json(const Mat& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

std::shared_ptr<const Cone> cone_from_json(const json& j) {
  const int dim = j.at("dim").get<int>();
  std::vector<Vec> gens, norms;
  for (const auto& g : j.at("generators")) gens.push_back(vec_from_json(g));
  for (const auto& n : j.at("facet_normals")) norms.push_back(vec_from_json(n));
  return std::make_shared<Cone>(dim, std::move(gens), std::move(norms));
}

json cone_to_json(const Cone& c) {
  json j;
  j["dim"] = c.dim();
  json gens = json::array(), norms = json::array();
  for (const auto& g : c.generators()) gens.push_back(vec_to_json(g));
  for (const auto& n : c.normals()) norms.push_back(vec_to_json(n));
  j["generators"] = gens;
  j["facet_normals"] = norms;
  return j;
}

RunningCost running_cost_from_json(const json& j) {
  const std::string form = j.at("form").get<std::string>();
  RunningCost r = RunningCost::constant(1.0);
  if (form == "constant") {
    r = RunningCost::constant(j.at("c").get<double>());
  } else if (form == "linear") {
    r = RunningCost::linear(vec_from_json(j.at("w")), j.value("c", 0.0));
  } else if (form == "power") {
    r = RunningCost::power(j.at("a").get<double>(), j.at("m").get<double>(),
                           j.value("c", 0.0));
  } else if (form == "max_linear") {
    std::vector<Vec> w;
    for (const auto& row : j.at("w")) w.push_back(vec_from_json(row));
    std::vector<double> c;
    if (j.contains("c"))
      for (const auto& cv : j.at("c")) c.push_back(cv.get<double>());
    else
      c.assign(w.size(), 0.0);
    r = RunningCost::max_linear(std::move(w), std::move(c));
  } else {
    throw SpecError("unknown running cost form: " + form);
  }
  if (j.contains("m_ell")) {
    const auto& g = j.at("growth_constants");
    r.set_growth(j.at("m_ell").get<double>(), g.at(0).get<double>(),
                 g.at(1).get<double>(), g.at(2).get<double>());
  }
  return r;
}

json running_cost_to_json(const RunningCost& r) {
  json j;
  switch (r.form()) {
    case RunningCost::Form::Constant:
      j["form"] = "constant";
      j["c"] = r.offsets()[0];
      break;
    case RunningCost::Form::Linear:
      j["form"] = "linear";
      j["w"] = vec_to_json(r.weights()[0]);
      j["c"] = r.offsets()[0];
      break;
    case RunningCost::Form::Power:
      j["form"] = "power";
      j["a"] = r.power_coeff();
      j["m"] = r.power_exp();
      j["c"] = r.offsets()[0];
      break;
    case RunningCost::Form::MaxLinear: {
      j["form"] = "max_linear";
      json w = json::array();
      for (const auto& row : r.weights()) w.push_back(vec_to_json(row));
      j["w"] = w;
      j["c"] = r.offsets();
      break;
    }
  }
  j["m_ell"] = r.m_ell();
  j["growth_constants"] = {r.c1(), r.c2(), r.c3()};
  return j;
}

PushCost push_cost_from_json(const json& j, int p) {
  const std::string form = j.at("form").get<std::string>();
  PushCost h = PushCost::zero(p);
  if (form == "zero") {
    h = PushCost::zero(p);
  } else if (form == "linear") {
    h = PushCost::linear(vec_from_json(j.at("h0")));
  } else if (form == "max_linear") {
    std::vector<Vec> rows;
    for (const auto& row : j.at("rows")) rows.push_back(vec_from_json(row));
    h = PushCost::max_linear(std::move(rows));
  } else {
    throw SpecError("unknown push cost form: " + form);
  }
  if (j.contains("c_h")) h.c_h = j.at("c_h").get<double>();
  return h;
}

json push_cost_to_json(const PushCost& h) {
  json j;
  switch (h.form()) {
    case PushCost::Form::Zero:
      j["form"] = "zero";
      break;
    case PushCost::Form::Linear:
      j["form"] = "linear";
      j["h0"] = vec_to_json(h.rows()[0]);
      break;
    case PushCost::Form::MaxLinear: {
      j["form"] = "max_linear";
      json rows = json::array();
      for (const auto& row : h.rows()) rows.push_back(vec_to_json(row));
      j["rows"] = rows;
      break;
    }
  }
  if (h.c_h) j["c_h"] = *h.c_h;
  return j;
}

}  // namespace

ProblemSpec problem_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw SpecError(std::string("malformed problem JSON: ") + e.what());
  }
  ProblemSpec spec;
  try {
    spec.X = cone_from_json(j.at("X"));
    spec.Y = cone_from_json(j.at("Y"));
    spec.G = mat_from_json(j.at("G"));
    spec.b = vec_from_json(j.at("b"));
    spec.Sigma = mat_from_json(j.at("Sigma"));
    spec.beta = j.at("beta").get<double>();
    spec.ell = running_cost_from_json(j.at("running_cost"));
    spec.h = push_cost_from_json(j.at("push_cost"), spec.Y->dim());
  } catch (const json::exception& e) {
    throw SpecError(std::string("problem JSON missing or mistyped field: ") + e.what());
  }
  spec.check_dimensions();
  return spec;
}

ProblemSpec problem_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_from_json(ss.str());
}

std::string problem_to_json(const ProblemSpec& spec) {
  json j;
  j["X"] = cone_to_json(*spec.X);
  j["Y"] = cone_to_json(*spec.Y);
  j["G"] = mat_to_json(spec.G);
  j["b"] = vec_to_json(spec.b);
  j["Sigma"] = mat_to_json(spec.Sigma);
  j["beta"] = spec.beta;
  j["running_cost"] = running_cost_to_json(spec.ell);
  j["push_cost"] = push_cost_to_json(spec.h);
  return j.dump();
}

std::uint64_t spec_hash(const ProblemSpec& spec) {
  const std::string s = problem_to_json(spec);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string spec_hash_hex(const ProblemSpec& spec) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(spec_hash(spec)));
  return std::string(buf);
}

}  // namespace conectl
