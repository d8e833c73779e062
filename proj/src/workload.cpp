#include "conectl/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace conectl {

using nlohmann::json;

namespace {

constexpr double kRankTol = 1e-10;

void next_combination(std::vector<int>& c, int n, bool& done) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) {
    done = true;
    return;
  }
  ++c[static_cast<std::size_t>(i)];
  for (int j = i + 1; j < k; ++j)
    c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
}

std::vector<std::vector<int>> combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k <= 0 || k > n) return out;
  std::vector<int> c(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i;
  bool done = false;
  while (!done) {
    out.push_back(c);
    next_combination(c, n, done);
  }
  return out;
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Mat mat_from_json(const json& j) {
  if (j.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
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

// facet normals of cone(generators) for k <= 3
std::vector<Vec> facets_from_generators(const std::vector<Vec>& gens, int k) {
  std::vector<Vec> normals;
  auto one_sided = [&](const Vec& n) {
    for (const auto& g : gens)
      if (n.dot(g) < -1e-10 * (1.0 + g.norm())) return false;
    return true;
  };
  auto push_unique = [&](Vec n) {
    const double nn = n.norm();
    if (nn < 1e-12) return;
    n /= nn;
    for (const auto& e : normals)
      if ((e - n).norm() < 1e-9) return;
    if (one_sided(n)) normals.push_back(n);
  };
  if (k == 1) {
    for (const auto& g : gens)
      if (std::abs(g[0]) > 1e-12) {
        Vec n(1);
        n[0] = g[0] > 0 ? 1.0 : -1.0;
        push_unique(n);
      }
  } else if (k == 2) {
    for (const auto& g : gens) {
      Vec n(2);
      n[0] = -g[1];
      n[1] = g[0];
      push_unique(n);
      push_unique(-n);
    }
  } else if (k == 3) {
    for (std::size_t i = 0; i < gens.size(); ++i)
      for (std::size_t j = i + 1; j < gens.size(); ++j) {
        Eigen::Vector3d a = gens[i], b = gens[j];
        Eigen::Vector3d c = a.cross(b);
        Vec n = c;
        push_unique(n);
        push_unique(-n);
      }
  } else {
    throw SpecError("facet enumeration for lifted cones supports k <= 3");
  }
  if (normals.empty())
    throw SpecError("lifted state cone is not pointed: no supporting facets found");
  return normals;
}

}  // namespace

void BcpSpec::validate() const {
  const int mm = m(), nn = n(), pp = p();
  if (mm <= 0 || nn <= 0 || pp <= 0) throw SpecError("BCP matrices must be nonempty");
  if (K.cols() != nn) throw SpecError("R and K must have the same column count");
  if (pp > nn) throw SpecError("K must have rank p <= n");
  Eigen::JacobiSVD<Mat> svd(K);
  const double smax = svd.singularValues()[0];
  if (svd.singularValues().minCoeff() <= kRankTol * std::max(smax, 1.0))
    throw SpecError("K is rank deficient (rank < p)");
  if (cost.size() != mm) throw SpecError("holding cost must have length m");
  for (Eigen::Index i = 0; i < cost.size(); ++i)
    if (cost[i] < 0.0) throw SpecError("linear holding cost must be nonnegative");
  if (h_vec.size() != pp) throw SpecError("h must have length p");
  for (Eigen::Index i = 0; i < h_vec.size(); ++i)
    if (h_vec[i] < 0.0) throw SpecError("h must be nonnegative");
  if (b_tilde.size() != mm) throw SpecError("b~ must have length m");
  if (Sigma_tilde.rows() != mm || Sigma_tilde.cols() != mm)
    throw SpecError("Sigma~ must be m x m");
  if (z0.size() != mm) throw SpecError("initial inventory must have length m");
  for (Eigen::Index i = 0; i < z0.size(); ++i)
    if (z0[i] < -1e-12) throw SpecError("initial inventory must be nonnegative");
  if (!(beta > 0.0)) throw SpecError("beta must be positive");
}

WorkloadProblem reduce(const BcpSpec& bcp, bool prefer_nonneg) {
  bcp.validate();
  const int m = bcp.m(), p = bcp.p();

  WorkloadProblem wp;

  // kernel of K
  Eigen::JacobiSVD<Mat> svdK(bcp.K, Eigen::ComputeFullV);
  const double smaxK = svdK.singularValues()[0];
  Mat kerK(bcp.n(), bcp.n() - p);
  {
    int col = 0;
    for (int i = p; i < bcp.n(); ++i) kerK.col(col++) = svdK.matrixV().col(i);
    (void)smaxK;
  }

  // N = R * ker(K); q = dim span(N); M spans the orthocomplement
  if (kerK.cols() == 0) {
    wp.q = 0;
    wp.k = m;
    wp.M = Mat::Identity(m, m);
  } else {
    Mat N = bcp.R * kerK;
    Eigen::JacobiSVD<Mat> svdN(N, Eigen::ComputeFullU);
    const double smax = svdN.singularValues().size() > 0 ? svdN.singularValues()[0] : 0.0;
    int q = 0;
    for (Eigen::Index i = 0; i < svdN.singularValues().size(); ++i)
      if (svdN.singularValues()[i] > kRankTol * std::max(smax, 1.0)) ++q;
    wp.q = q;
    wp.k = m - q;
    if (wp.k == 0) throw SpecError("workload dimension collapsed to zero");
    wp.M = Mat(wp.k, m);
    for (int i = 0; i < wp.k; ++i) wp.M.row(i) = svdN.matrixU().col(q + i).transpose();
  }

  // deterministic sign convention: largest-magnitude entry of each row positive
  for (int i = 0; i < wp.k; ++i) {
    Eigen::Index jmax = 0;
    wp.M.row(i).cwiseAbs().maxCoeff(&jmax);
    if (wp.M(i, jmax) < 0.0) wp.M.row(i) *= -1.0;
  }

  if (prefer_nonneg) {
    // extreme rays of {lambda : M^T lambda >= 0}; k independent nonnegative
    // combinations re-base M when they exist
    std::vector<Vec> rays;
    auto feasible = [&](const Vec& lam) {
      Vec row = wp.M.transpose() * lam;
      for (Eigen::Index j = 0; j < row.size(); ++j)
        if (row[j] < -1e-12) return false;
      return true;
    };
    if (wp.k == 1) {
      Vec lam(1);
      lam[0] = 1.0;
      if (feasible(lam)) rays.push_back(lam);
      lam[0] = -1.0;
      if (feasible(lam)) rays.push_back(lam);
    } else {
      for (const auto& subset : combinations(m, wp.k - 1)) {
        Mat A(wp.k - 1, wp.k);
        for (int r = 0; r < wp.k - 1; ++r)
          A.row(r) = wp.M.col(subset[static_cast<std::size_t>(r)]).transpose();
        Eigen::FullPivLU<Mat> lu(A);
        lu.setThreshold(1e-10);
        Mat null_basis = lu.kernel();
        if (null_basis.cols() != 1) continue;
        Vec d = null_basis.col(0).normalized();
        if (feasible(d)) rays.push_back(d);
        if (feasible(-d)) rays.push_back(-d);
      }
    }
    Mat picked(wp.k, wp.k);
    int got = 0;
    for (const auto& ray : rays) {
      if (got == wp.k) break;
      picked.row(got) = ray.transpose();
      Eigen::FullPivLU<Mat> lu(picked.topRows(got + 1));
      lu.setThreshold(1e-10);
      if (lu.rank() == got + 1) ++got;
    }
    if (got == wp.k) {
      Mat Mn = picked * wp.M;
      for (int i = 0; i < wp.k; ++i) {
        Mn.row(i) /= Mn.row(i).norm();
        for (int j = 0; j < m; ++j)
          if (Mn(i, j) < 0.0 && Mn(i, j) > -1e-12) Mn(i, j) = 0.0;
      }
      wp.M = Mn;
      wp.nonneg_rebased = true;
      wp.notes.push_back("M re-based with nonnegative entries");
    } else {
      wp.notes.push_back("nonnegative re-basing of M failed; keeping the orthonormal basis");
    }
  }

  // G from M R = G K; exact because rows of MR lie in the row space of K
  Mat KKt = bcp.K * bcp.K.transpose();
  wp.G = (wp.M * bcp.R) * bcp.K.transpose() * KKt.inverse();
  wp.mr_gk_residual = (wp.M * bcp.R - wp.G * bcp.K).cwiseAbs().maxCoeff();
  if (wp.mr_gk_residual > 1e-10 * (1.0 + bcp.R.norm()))
    throw SpecError("M R = G K is inconsistent; null-space dimensions miscounted");

  // K has full row rank, so G is unique once M is fixed; the remaining
  // freedom is the basis choice for M itself
  wp.notes.push_back("G solved by least squares on the row space of K; unique given M");

  wp.b = wp.M * bcp.b_tilde;
  wp.Sigma = wp.M * bcp.Sigma_tilde * wp.M.transpose();
  for (int j = 0; j < m; ++j) {
    Vec g = wp.M.col(j);
    if (g.norm() > 1e-12) wp.cone_generators.push_back(g);
  }
  if (wp.cone_generators.empty()) throw SpecError("image cone has no nonzero generators");
  return wp;
}

EffectiveCost effective_cost(const WorkloadProblem& wp, const BcpSpec& bcp, const Vec& x) {
  const int m = bcp.m(), k = wp.k;
  if (x.size() != k) throw SpecError("effective cost: x must have dimension k");
  double best = std::numeric_limits<double>::infinity();
  Vec best_z;
  const double scale = 1.0 + x.norm();
  for (const auto& subset : combinations(m, k)) {
    Mat B(k, k);
    for (int c = 0; c < k; ++c) B.col(c) = wp.M.col(subset[static_cast<std::size_t>(c)]);
    Eigen::FullPivLU<Mat> lu(B);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) continue;
    Vec zb = lu.solve(x);
    bool ok = true;
    for (Eigen::Index i = 0; i < zb.size(); ++i)
      if (zb[i] < -1e-11 * scale) {
        ok = false;
        break;
      }
    if (!ok) continue;
    double val = 0.0;
    for (int c = 0; c < k; ++c)
      val += bcp.cost[subset[static_cast<std::size_t>(c)]] * std::max(zb[c], 0.0);
    if (val < best) {
      best = val;
      best_z = Vec::Zero(m);
      for (int c = 0; c < k; ++c)
        best_z[subset[static_cast<std::size_t>(c)]] = std::max(zb[c], 0.0);
    }
  }
  if (!std::isfinite(best))
    throw DomainError("effective cost: x is outside the workload cone M R_+^m");
  return {best, best_z};
}

std::vector<Vec> effective_cost_vertices(const WorkloadProblem& wp, const BcpSpec& bcp) {
  const int m = bcp.m(), k = wp.k;
  std::vector<Vec> verts;
  for (const auto& subset : combinations(m, k)) {
    Mat A(k, k);
    Vec rhs(k);
    for (int r = 0; r < k; ++r) {
      A.row(r) = wp.M.col(subset[static_cast<std::size_t>(r)]).transpose();
      rhs[r] = bcp.cost[subset[static_cast<std::size_t>(r)]];
    }
    Eigen::FullPivLU<Mat> lu(A);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) continue;
    Vec lam = lu.solve(rhs);
    bool feas = true;
    for (int j = 0; j < m; ++j)
      if (wp.M.col(j).dot(lam) > bcp.cost[j] + 1e-11 * (1.0 + std::abs(bcp.cost[j]))) {
        feas = false;
        break;
      }
    if (!feas) continue;
    bool dup = false;
    for (const auto& v : verts)
      if ((v - lam).norm() < 1e-10) {
        dup = true;
        break;
      }
    if (!dup) verts.push_back(lam);
  }
  if (verts.empty())
    throw SpecError("no dual vertices found for the effective cost");
  return verts;
}

ProblemSpec lift_problem(const WorkloadProblem& wp, const BcpSpec& bcp) {
  ProblemSpec spec;
  std::vector<Vec> gens = wp.cone_generators;
  std::vector<Vec> normals = facets_from_generators(gens, wp.k);
  spec.X = std::make_shared<Cone>(wp.k, gens, normals);
  spec.Y = std::make_shared<Cone>(Cone::orthant(bcp.p()));
  spec.G = wp.G;
  spec.b = wp.b;
  spec.Sigma = wp.Sigma;
  spec.beta = bcp.beta;

  std::vector<Vec> verts = effective_cost_vertices(wp, bcp);
  std::vector<double> offsets(verts.size(), 0.0);
  RunningCost ell = RunningCost::max_linear(verts, offsets);
  double c3 = 1e-9;
  for (const auto& v : verts) c3 = std::max(c3, v.norm());
  double c1 = std::numeric_limits<double>::infinity();
  for (const auto& g : spec.X->generators()) {
    const double gn = g.norm();
    if (gn < 1e-12) continue;
    c1 = std::min(c1, effective_cost(wp, bcp, g).value / gn);
  }
  if (!(c1 > 0.0) || !std::isfinite(c1)) c1 = 1e-9;
  ell.set_growth(1.0, c1, 1.0, std::max(c3, c1));
  spec.ell = ell;

  PushCost h = PushCost::linear(bcp.h_vec);
  const double hmin = bcp.h_vec.size() > 0 ? bcp.h_vec.minCoeff() : 0.0;
  if (hmin > 0.0) h.c_h = hmin;
  spec.h = h;
  spec.check_dimensions();
  return spec;
}

BcpSpec bcp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw SpecError(std::string("malformed BCP JSON: ") + e.what());
  }
  BcpSpec bcp;
  try {
    bcp.R = mat_from_json(j.at("R"));
    bcp.K = mat_from_json(j.at("K"));
    if (j.at("cost").is_array())
      bcp.cost = vec_from_json(j.at("cost"));
    else
      bcp.cost = vec_from_json(j.at("cost").at("w"));
    bcp.h_vec = vec_from_json(j.at("h"));
    bcp.b_tilde = j.contains("b") ? vec_from_json(j.at("b")) : Vec(Vec::Zero(bcp.R.rows()));
    bcp.Sigma_tilde = j.contains("Sigma") ? mat_from_json(j.at("Sigma"))
                                          : Mat(Mat::Identity(bcp.R.rows(), bcp.R.rows()));
    bcp.z0 = j.contains("z") ? vec_from_json(j.at("z")) : Vec(Vec::Zero(bcp.R.rows()));
    bcp.beta = j.value("beta", 1.0);
  } catch (const json::exception& e) {
    throw SpecError(std::string("BCP JSON missing or mistyped field: ") + e.what());
  }
  bcp.validate();
  return bcp;
}

BcpSpec bcp_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open BCP file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return bcp_from_json(ss.str());
}

std::string bcp_to_json(const BcpSpec& bcp) {
  json j;
  j["R"] = mat_to_json(bcp.R);
  j["K"] = mat_to_json(bcp.K);
  j["cost"] = vec_to_json(bcp.cost);
  j["h"] = vec_to_json(bcp.h_vec);
  j["b"] = vec_to_json(bcp.b_tilde);
  j["Sigma"] = mat_to_json(bcp.Sigma_tilde);
  j["z"] = vec_to_json(bcp.z0);
  j["beta"] = bcp.beta;
  return j.dump();
}

std::string workload_to_json(const WorkloadProblem& wp) {
  json j;
  j["M"] = mat_to_json(wp.M);
  j["G"] = mat_to_json(wp.G);
  j["q"] = wp.q;
  j["k"] = wp.k;
  j["b"] = vec_to_json(wp.b);
  j["Sigma"] = mat_to_json(wp.Sigma);
  j["mr_gk_residual"] = wp.mr_gk_residual;
  j["nonneg_rebased"] = wp.nonneg_rebased;
  j["notes"] = wp.notes;
  json gens = json::array();
  for (const auto& g : wp.cone_generators) gens.push_back(vec_to_json(g));
  j["cone_generators"] = gens;
  return j.dump(2);
}

}  // namespace conectl
