#include "conectl/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace conectl {

using nlohmann::json;

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

std::size_t Grid::KeyHash::operator()(const Key& k) const {
  std::size_t h = 1469598103934665603ull;
  for (long v : k) {
    h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull;
    h *= 1099511628211ull;
  }
  return h;
}

int Grid::neighbor(int i, int axis, int sign) const {
  return nbrs_[static_cast<std::size_t>(i)][static_cast<std::size_t>(2 * axis + (sign > 0 ? 1 : 0))];
}

int Grid::node_at(const Key& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1 : it->second;
}

bool Grid::interpolation_at(const Vec& q, Interpolation& out) const {
  out.terms.clear();
  std::array<long, kMaxDim> base{};
  std::array<double, kMaxDim> w{};
  for (int a = 0; a < dim_; ++a) {
    const double s = q[a] / mesh_;
    base[static_cast<std::size_t>(a)] = static_cast<long>(std::floor(s + 1e-9));
    double f = s - static_cast<double>(base[static_cast<std::size_t>(a)]);
    if (f < 0.0) f = 0.0;
    if (f > 1.0) f = 1.0;
    w[static_cast<std::size_t>(a)] = f;
  }
  const int corners = 1 << dim_;
  for (int c = 0; c < corners; ++c) {
    double weight = 1.0;
    Key key{};
    for (int a = 0; a < dim_; ++a) {
      const bool hi = (c >> a) & 1;
      weight *= hi ? w[static_cast<std::size_t>(a)] : 1.0 - w[static_cast<std::size_t>(a)];
      key[static_cast<std::size_t>(a)] = base[static_cast<std::size_t>(a)] + (hi ? 1 : 0);
    }
    if (weight < 1e-12) continue;
    const int node = node_at(key);
    if (node < 0) return false;
    out.terms.emplace_back(node, weight);
  }
  return !out.terms.empty();
}

int Grid::nearest_node(const Vec& q) const {
  Key key{};
  for (int a = 0; a < dim_; ++a)
    key[static_cast<std::size_t>(a)] = std::lround(q[a] / mesh_);
  return node_at(key);
}

// ---------------------------------------------------------------------------
// DiscreteHamiltonian
// ---------------------------------------------------------------------------

DiscreteHamiltonian DiscreteHamiltonian::build(const ProblemSpec& spec, bool refine) {
  DiscreteHamiltonian H;
  auto add = [&](const Vec& y_raw) {
    Vec gy = spec.G * y_raw;
    const double n = gy.norm();
    if (n < 1e-12) return;  // direction in ker G carries no state motion
    Vec y = y_raw / n;
    gy /= n;
    for (const auto& d : H.dirs)
      if ((d.gy - gy).norm() < 1e-12 && (d.y - y).norm() < 1e-12) return;
    H.dirs.push_back({y, gy, spec.h(y)});
  };
  const auto& gens = spec.Y->generators();
  for (const auto& g : gens) add(g);
  if (refine) {
    for (std::size_t i = 0; i < gens.size(); ++i)
      for (std::size_t j = i + 1; j < gens.size(); ++j)
        add(gens[i] / std::max(gens[i].norm(), 1e-300) +
            gens[j] / std::max(gens[j].norm(), 1e-300));
  }
  if (H.dirs.empty())
    throw SpecError("no usable control directions: G maps every generator of Y to zero");
  return H;
}

double DiscreteHamiltonian::eval(const Vec& p) const {
  double v = -kInf;
  for (const auto& d : dirs) v = std::max(v, -(d.gy.dot(p) + d.h));
  return v;
}

// ---------------------------------------------------------------------------
// discretize
// ---------------------------------------------------------------------------

Grid discretize(const ProblemSpec& spec, const ConeVectors& vecs, double r,
                const SchemeParams& params) {
  spec.check_dimensions();
  const int k = spec.k();
  if (k > Grid::kMaxDim) throw SpecError("grids support dimensions up to 4");
  const double h = params.mesh;
  if (!(r > 0.0) || !(h > 0.0)) throw SpecError("discretize needs r > 0 and mesh > 0");
  if (h > r) throw SpecError("empty interior: mesh exceeds the truncation radius");
  const double delta = params.effective_delta();
  if (delta < h * (1.0 - 1e-12)) throw SpecError("directional step delta must be >= mesh");

  const double margin = delta + h * k;
  const double tol_r = 1e-9 * std::max(1.0, r);
  const Cone& X = *spec.X;
  const Vec& u1 = vecs.u1_hat;

  // scan box: |x| <= (r + margin)/a0 on the truncated cone
  const double radius = (r + margin) / vecs.a0 + h;
  const long span = static_cast<long>(std::ceil(radius / h));
  {
    double total = 1.0;
    for (int a = 0; a < k; ++a) total *= static_cast<double>(2 * span + 1);
    if (total > 5e7)
      throw SpecError("grid scan too large for this mesh; coarsen the mesh or shrink r");
  }

  struct Cand {
    Grid::Key key;
    Vec x;
    NodeClass cls;
  };
  std::vector<Cand> cands;
  std::unordered_map<Grid::Key, int, Grid::KeyHash> cmap;

  Grid::Key key{};
  std::array<long, Grid::kMaxDim> idx{};
  for (int a = 0; a < k; ++a) idx[static_cast<std::size_t>(a)] = -span;
  while (true) {
    Vec x(k);
    for (int a = 0; a < k; ++a) {
      key[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a)];
      x[a] = static_cast<double>(idx[static_cast<std::size_t>(a)]) * h;
    }
    const double proj = u1.dot(x);
    if (proj <= r + margin + tol_r && X.contains(x, kTolGeom * (1.0 + x.norm()))) {
      cmap.emplace(key, static_cast<int>(cands.size()));
      cands.push_back({key, x, NodeClass::Interior});
    }
    int a = 0;
    for (; a < k; ++a) {
      if (++idx[static_cast<std::size_t>(a)] <= span) break;
      idx[static_cast<std::size_t>(a)] = -span;
    }
    if (a == k) break;
  }
  if (cands.empty()) throw SpecError("no grid nodes found inside the truncated cone");

  // PDE stencil offsets needed for interior classification
  std::vector<Grid::Key> stencil_offsets;
  {
    for (int a = 0; a < k; ++a)
      for (int s : {-1, 1}) {
        Grid::Key o{};
        o[static_cast<std::size_t>(a)] = s;
        stencil_offsets.push_back(o);
      }
    for (int a = 0; a < k; ++a)
      for (int b2 = a + 1; b2 < k; ++b2) {
        const double s = spec.Sigma(a, b2);
        if (s == 0.0) continue;
        const int sb = s > 0.0 ? 1 : -1;
        Grid::Key o1{}, o2{};
        o1[static_cast<std::size_t>(a)] = 1;
        o1[static_cast<std::size_t>(b2)] = sb;
        o2[static_cast<std::size_t>(a)] = -1;
        o2[static_cast<std::size_t>(b2)] = -sb;
        stencil_offsets.push_back(o1);
        stencil_offsets.push_back(o2);
      }
  }

  auto present = [&](const Grid::Key& base, const Grid::Key& off) {
    Grid::Key nk = base;
    for (int a = 0; a < k; ++a) nk[static_cast<std::size_t>(a)] += off[static_cast<std::size_t>(a)];
    return cmap.find(nk) != cmap.end();
  };

  for (auto& c : cands) {
    const double proj = u1.dot(c.x);
    if (proj >= r - tol_r) {
      c.cls = NodeClass::Dirichlet;
      continue;
    }
    bool full = true;
    for (const auto& off : stencil_offsets)
      if (!present(c.key, off)) {
        full = false;
        break;
      }
    c.cls = full ? NodeClass::Interior : NodeClass::ConeBoundary;
  }

  // prune dirichlet nodes beyond the surface that no stencil can reach
  std::vector<char> referenced(cands.size(), 0);
  {
    DiscreteHamiltonian H = DiscreteHamiltonian::build(spec, params.refine_directions);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].cls == NodeClass::Dirichlet) continue;
      for (const auto& off : stencil_offsets) {
        Grid::Key nk = cands[i].key;
        for (int a = 0; a < k; ++a) nk[static_cast<std::size_t>(a)] += off[static_cast<std::size_t>(a)];
        auto it = cmap.find(nk);
        if (it != cmap.end()) referenced[static_cast<std::size_t>(it->second)] = 1;
      }
      for (const auto& d : H.dirs) {
        const Vec q = cands[i].x + delta * d.gy;
        std::array<long, Grid::kMaxDim> base{};
        std::array<double, Grid::kMaxDim> frac{};
        for (int a = 0; a < k; ++a) {
          const double s = q[a] / h;
          base[static_cast<std::size_t>(a)] = static_cast<long>(std::floor(s + 1e-9));
          frac[static_cast<std::size_t>(a)] =
              std::clamp(s - static_cast<double>(base[static_cast<std::size_t>(a)]), 0.0, 1.0);
        }
        for (int cbit = 0; cbit < (1 << k); ++cbit) {
          Grid::Key nk{};
          double weight = 1.0;
          for (int a = 0; a < k; ++a) {
            const bool hi = (cbit >> a) & 1;
            weight *= hi ? frac[static_cast<std::size_t>(a)]
                         : 1.0 - frac[static_cast<std::size_t>(a)];
            nk[static_cast<std::size_t>(a)] =
                base[static_cast<std::size_t>(a)] + (hi ? 1 : 0);
          }
          if (weight < 1e-12) continue;  // same cutoff as the interpolation
          auto it = cmap.find(nk);
          if (it != cmap.end()) referenced[static_cast<std::size_t>(it->second)] = 1;
        }
      }
    }
  }

  Grid g;
  g.dim_ = k;
  g.mesh_ = h;
  g.r_ = r;
  g.u1_ = u1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    const double proj = u1.dot(c.x);
    const bool beyond = proj > r + tol_r;
    if (c.cls == NodeClass::Dirichlet && beyond && !referenced[i]) continue;
    g.index_.emplace(c.key, static_cast<int>(g.coords_.size()));
    g.coords_.push_back(c.x);
    g.keys_.push_back(c.key);
    g.cls_.push_back(c.cls);
    ++g.counts_[static_cast<int>(c.cls)];
  }
  g.nbrs_.resize(g.coords_.size());
  for (std::size_t i = 0; i < g.coords_.size(); ++i) {
    for (int a = 0; a < k; ++a)
      for (int s : {0, 1}) {
        Grid::Key nk = g.keys_[i];
        nk[static_cast<std::size_t>(a)] += (s == 1 ? 1 : -1);
        g.nbrs_[i][static_cast<std::size_t>(2 * a + s)] = g.node_at(nk);
      }
  }
  if (g.count(NodeClass::Interior) == 0)
    throw SpecError("empty interior: mesh too coarse for this truncation radius");
  if (g.count(NodeClass::Dirichlet) == 0)
    throw SpecError("no dirichlet layer found; grid misconfiguration");
  return g;
}

// ---------------------------------------------------------------------------
// growth bound
// ---------------------------------------------------------------------------

double growth_matched_constant(const ProblemSpec& spec, const ConeVectors& vecs) {
  const double beta = spec.beta;
  const double c3 = spec.ell.c3();
  const double m = spec.ell.m_ell();
  const int k = spec.k();
  const double L = alpha_lipschitz(*spec.X, vecs.u0_hat);

  double sig_sum = 0.0, sig_m_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double s = std::sqrt(std::max(spec.Sigma(i, i), 0.0));
    sig_sum += s;
    sig_m_sum += std::pow(s, m);
  }
  const double mu1 = std::sqrt(2.0 / M_PI);
  const double push_bound =
      spec.h(vecs.y0_hat) * L *
      (spec.b.norm() / beta + 4.0 * sig_sum * mu1 * std::tgamma(1.5) / std::sqrt(beta));

  if (m == 0.0) {
    // ell <= 2 c3 uniformly, so the reflected control costs at most 2 c3/beta
    return 0.5 * (2.0 * c3 / beta + push_bound);
  }

  const double pm = m > 1.0 ? std::pow(2.0, m - 1.0) : 1.0;
  const double k_pow = m > 1.0 ? std::pow(static_cast<double>(k), m - 1.0) : 1.0;
  const double mu_m = std::pow(2.0, 0.5 * m) * std::tgamma(0.5 * (m + 1.0)) / std::sqrt(M_PI);
  const double drift_int = std::pow(spec.b.norm(), m) * std::tgamma(m + 1.0) / std::pow(beta, m + 1.0);
  const double wiener_int =
      4.0 * k_pow * sig_m_sum * mu_m * std::tgamma(0.5 * m + 1.0) / std::pow(beta, 0.5 * m + 1.0);
  const double A = c3 / beta +
                   c3 * pm * std::pow(1.0 + L, m) * pm * (drift_int + wiener_int) +
                   push_bound;
  const double B = c3 * pm / beta;
  return std::max(A, B);
}

// ---------------------------------------------------------------------------
// scheme assembly
// ---------------------------------------------------------------------------

namespace {

struct FlatScheme {
  std::vector<int> active;  // non-dirichlet node ids
  std::vector<double> ell;
  std::vector<char> has_pde;
  std::vector<double> denom;  // a_d + beta
  std::vector<int> pde_off;
  std::vector<std::pair<int, double>> pde;
  struct DirRec {
    double dh;
    double inv_rest;  // 1/(1 - self weight)
    int t_off, t_len;
    int dir;  // index into the stored direction list
  };
  std::vector<int> dir_off;
  std::vector<DirRec> dirs;
  std::vector<std::pair<int, double>> dterms;
  double max_denom = 0.0;
};

FlatScheme build_scheme(const ProblemSpec& spec, const Grid& g,
                        const DiscreteHamiltonian& H, double delta) {
  const int k = spec.k();
  const double h = g.mesh();
  const double h2 = h * h;

  // monotonicity of the seven-point cross-term splitting needs mesh-uniform
  // diagonal dominance of Sigma
  for (int a = 0; a < k; ++a) {
    double off = 0.0;
    for (int b2 = 0; b2 < k; ++b2)
      if (b2 != a) off += std::abs(spec.Sigma(a, b2));
    if (off > spec.Sigma(a, a) + 1e-13)
      throw SpecError("Sigma is not diagonally dominant: the cross-term splitting "
                      "is not monotone on this mesh");
  }

  FlatScheme fs;
  fs.pde_off.push_back(0);
  fs.dir_off.push_back(0);

  for (int i = 0; i < g.size(); ++i) {
    if (g.node_class(i) == NodeClass::Dirichlet) continue;
    fs.active.push_back(i);
    const Vec& x = g.coord(i);
    fs.ell.push_back(spec.ell(x));

    // PDE branch: upwind drift, central second differences, diagonal pairs
    // for cross terms; dropped when the monotone stencil exits the domain.
    std::map<int, double> w;
    bool ok = true;
    for (int a = 0; a < k && ok; ++a) {
      const double saa = spec.Sigma(a, a);
      if (saa > 0.0) {
        const int nm = g.neighbor(i, a, -1), np = g.neighbor(i, a, +1);
        if (nm < 0 || np < 0) {
          ok = false;
          break;
        }
        w[nm] += 0.5 * saa / h2;
        w[np] += 0.5 * saa / h2;
      }
      const double ba = spec.b[a];
      if (ba > 0.0) {
        const int np = g.neighbor(i, a, +1);
        if (np < 0) {
          ok = false;
          break;
        }
        w[np] += ba / h;
      } else if (ba < 0.0) {
        const int nm = g.neighbor(i, a, -1);
        if (nm < 0) {
          ok = false;
          break;
        }
        w[nm] += -ba / h;
      }
    }
    if (ok) {
      for (int a = 0; a < k && ok; ++a)
        for (int b2 = a + 1; b2 < k && ok; ++b2) {
          const double s = spec.Sigma(a, b2);
          if (s == 0.0) continue;
          const int sb = s > 0.0 ? 1 : -1;
          Grid::Key k1 = g.key_of(i), k2 = g.key_of(i);
          k1[static_cast<std::size_t>(a)] += 1;
          k1[static_cast<std::size_t>(b2)] += sb;
          k2[static_cast<std::size_t>(a)] -= 1;
          k2[static_cast<std::size_t>(b2)] -= sb;
          const int d1 = g.node_at(k1), d2 = g.node_at(k2);
          const int apm = g.neighbor(i, a, -1), app = g.neighbor(i, a, +1);
          const int bpm = g.neighbor(i, b2, -1), bpp = g.neighbor(i, b2, +1);
          if (d1 < 0 || d2 < 0 || apm < 0 || app < 0 || bpm < 0 || bpp < 0) {
            ok = false;
            break;
          }
          const double cw = 0.5 * std::abs(s) / h2;
          w[d1] += cw;
          w[d2] += cw;
          w[apm] -= cw;
          w[app] -= cw;
          w[bpm] -= cw;
          w[bpp] -= cw;
        }
    }
    double denom = spec.beta;
    if (ok) {
      for (const auto& [node, weight] : w) {
        if (weight < -1e-13)
          throw SpecError("negative stencil weight: Sigma/mesh combination is not monotone");
        if (weight <= 0.0) continue;
        fs.pde.emplace_back(node, weight);
        denom += weight;
      }
    }
    fs.has_pde.push_back(ok ? 1 : 0);
    fs.denom.push_back(denom);
    fs.pde_off.push_back(static_cast<int>(fs.pde.size()));
    fs.max_denom = std::max(fs.max_denom, denom);

    // gradient-constraint branch per stored direction
    int added = 0;
    for (std::size_t d = 0; d < H.dirs.size(); ++d) {
      const Vec q = x + delta * H.dirs[d].gy;
      Grid::Interpolation interp;
      if (!g.interpolation_at(q, interp)) continue;
      double self_w = 0.0;
      const int t_off = static_cast<int>(fs.dterms.size());
      for (const auto& [node, weight] : interp.terms) {
        if (node == i)
          self_w += weight;
        else
          fs.dterms.emplace_back(node, weight);
      }
      if (self_w > 1.0 - 1e-9) {
        fs.dterms.resize(static_cast<std::size_t>(t_off));
        continue;
      }
      fs.dirs.push_back({delta * H.dirs[d].h, 1.0 / (1.0 - self_w), t_off,
                         static_cast<int>(fs.dterms.size()) - t_off,
                         static_cast<int>(d)});
      ++added;
    }
    fs.dir_off.push_back(static_cast<int>(fs.dirs.size()));

    if (!ok && added == 0)
      throw SpecError("a boundary node has neither an inward PDE stencil nor an "
                      "admissible control direction; grid/delta misconfiguration");
  }
  return fs;
}

double jacobi_candidate(const FlatScheme& fs, const std::vector<double>& f, int ai) {
  double cand = kInf;
  if (fs.has_pde[static_cast<std::size_t>(ai)]) {
    double acc = fs.ell[static_cast<std::size_t>(ai)];
    for (int t = fs.pde_off[static_cast<std::size_t>(ai)];
         t < fs.pde_off[static_cast<std::size_t>(ai) + 1]; ++t)
      acc += fs.pde[static_cast<std::size_t>(t)].second *
             f[static_cast<std::size_t>(fs.pde[static_cast<std::size_t>(t)].first)];
    cand = acc / fs.denom[static_cast<std::size_t>(ai)];
  }
  for (int d = fs.dir_off[static_cast<std::size_t>(ai)];
       d < fs.dir_off[static_cast<std::size_t>(ai) + 1]; ++d) {
    const auto& rec = fs.dirs[static_cast<std::size_t>(d)];
    double acc = rec.dh;
    for (int t = rec.t_off; t < rec.t_off + rec.t_len; ++t)
      acc += fs.dterms[static_cast<std::size_t>(t)].second *
             f[static_cast<std::size_t>(fs.dterms[static_cast<std::size_t>(t)].first)];
    cand = std::min(cand, acc * rec.inv_rest);
  }
  return cand;
}

struct Workspace {
  ConeVectors vecs;
  std::shared_ptr<Grid> grid;
  DiscreteHamiltonian H;
  FlatScheme scheme;
  double growth_C = 0.0;
};

Workspace make_workspace(const ProblemSpec& spec, double r, const SchemeParams& params,
                         double growth_override = 0.0) {
  Workspace ws;
  ws.vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  ws.grid = std::make_shared<Grid>(discretize(spec, ws.vecs, r, params));
  ws.H = DiscreteHamiltonian::build(spec, params.refine_directions);
  ws.scheme = build_scheme(spec, *ws.grid, ws.H, params.effective_delta());
  ws.growth_C = growth_override > 0.0 ? growth_override
                                      : growth_matched_constant(spec, ws.vecs);
  return ws;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

ValueField solve(const ProblemSpec& spec, double r, const SchemeParams& params,
                 const SolveOptions& options) {
  spec.check_dimensions();
  spec.ell.validate_on(*spec.X);
  spec.h.validate_on(*spec.Y);
  Workspace ws = make_workspace(spec, r, params, options.growth_constant_override);
  const Grid& g = *ws.grid;
  const double m_ell = spec.ell.m_ell();
  const double C = ws.growth_C;

  auto growth_phi = [C, m_ell](const Vec& x) {
    return C * (1.0 + std::pow(x.norm(), m_ell));
  };
  std::function<double(const Vec&)> phi = options.phi ? options.phi
                                                      : std::function<double(const Vec&)>(growth_phi);

  std::vector<double> f(static_cast<std::size_t>(g.size()), 0.0);
  if (options.f0) {
    if (options.f0->size() != f.size())
      throw SpecError("initial field size does not match the grid");
    f = *options.f0;
  } else {
    for (int i = 0; i < g.size(); ++i) f[static_cast<std::size_t>(i)] = growth_phi(g.coord(i));
  }
  for (int i = 0; i < g.size(); ++i)
    if (g.node_class(i) == NodeClass::Dirichlet) f[static_cast<std::size_t>(i)] = phi(g.coord(i));

  // the update tolerance is contracted so the fixed-point error, not just the
  // sweep-to-sweep change, is of order params.tol
  const double tol_eff = params.tol * std::min(1.0, spec.beta / ws.scheme.max_denom);

  std::vector<double> fn = f;
  std::vector<double> history;
  double omega = params.damping;
  if (!(omega > 0.0 && omega <= 1.0)) throw SpecError("damping must lie in (0, 1]");
  double prev_update = kInf;
  int increases = 0;
  int it = 0;
  double update = kInf;
  const std::size_t n_active = ws.scheme.active.size();
  for (; it < params.max_iterations; ++it) {
    update = 0.0;
    for (std::size_t ai = 0; ai < n_active; ++ai) {
      const int i = ws.scheme.active[ai];
      const double cand = jacobi_candidate(ws.scheme, f, static_cast<int>(ai));
      const double nv = (1.0 - omega) * f[static_cast<std::size_t>(i)] + omega * cand;
      update = std::max(update, std::abs(nv - f[static_cast<std::size_t>(i)]));
      fn[static_cast<std::size_t>(i)] = nv;
    }
    for (std::size_t ai = 0; ai < n_active; ++ai) {
      const int i = ws.scheme.active[ai];
      f[static_cast<std::size_t>(i)] = fn[static_cast<std::size_t>(i)];
    }
    if (history.size() < 64 || it % 1000 == 0) history.push_back(update);
    if (update < tol_eff) break;
    if (update > prev_update * (1.0 + 1e-12)) {
      if (++increases >= 2 && omega > 0.125) {
        omega *= 0.5;
        increases = 0;
      }
    } else {
      increases = 0;
    }
    prev_update = update;
  }
  if (update >= tol_eff) {
    history.push_back(update);
    throw ConvergenceError("fixed-point iteration did not converge within the sweep budget",
                           std::move(history));
  }

  ValueField out;
  out.grid = ws.grid;
  out.values = std::move(f);
  out.meta.spec_hash = spec_hash_hex(spec);
  out.meta.r = r;
  out.meta.mesh = params.mesh;
  out.meta.delta = params.effective_delta();
  out.meta.tol = params.tol;
  out.meta.iterations = it + 1;
  out.meta.final_update = update;
  out.meta.damping_used = omega;
  out.meta.growth_constant = C;
  out.meta.dirichlet_mode =
      params.dirichlet_mode == SchemeParams::DirichletMode::GrowthMatched ? "growth_matched"
                                                                          : "extend_previous";
  out.meta.warnings = spec.condition_warnings(ws.vecs.u1_hat);
  if (!spec.sigma_nondegenerate() && spec.cond_drift_holds(ws.vecs.u1_hat) &&
      ws.vecs.u1_hat.dot(spec.b) <= 1e-9)
    out.meta.warnings.push_back("u1.b is positive but inside the 1e-9 warning band");
  double vmin = kInf;
  for (double v : out.values) vmin = std::min(vmin, v);
  if (vmin < -params.tol)
    out.meta.warnings.push_back("solved field dips below zero beyond tolerance");
  return out;
}

// ---------------------------------------------------------------------------
// residual / policy
// ---------------------------------------------------------------------------

ResidualReport viscosity_residual(const ProblemSpec& spec, const ValueField& field) {
  const Grid& g = *field.grid;
  SchemeParams params;
  params.mesh = g.mesh();
  params.delta = field.meta.delta > 0.0 ? field.meta.delta : g.mesh();
  ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  DiscreteHamiltonian H = DiscreteHamiltonian::build(spec);
  FlatScheme fs = build_scheme(spec, g, H, params.effective_delta());
  const std::vector<double>& f = field.values;
  const double delta = params.effective_delta();
  (void)vecs;

  ResidualReport rep;
  rep.interior_sub_worst = -kInf;
  rep.interior_super_worst = kInf;
  rep.boundary_super_worst = kInf;
  rep.interior_sub_worst_pde = -kInf;
  rep.interior_super_worst_pde = kInf;
  rep.boundary_super_worst_pde = kInf;
  rep.node_residual_update.assign(static_cast<std::size_t>(g.size()), kNan);
  rep.node_residual_pde.assign(static_cast<std::size_t>(g.size()), kNan);

  for (std::size_t ai = 0; ai < fs.active.size(); ++ai) {
    const int i = fs.active[ai];
    const double fi = f[static_cast<std::size_t>(i)];
    double max_update = -kInf, max_pde = -kInf;
    if (fs.has_pde[ai]) {
      double acc = fs.ell[ai];
      for (int t = fs.pde_off[ai]; t < fs.pde_off[ai + 1]; ++t)
        acc += fs.pde[static_cast<std::size_t>(t)].second *
               f[static_cast<std::size_t>(fs.pde[static_cast<std::size_t>(t)].first)];
      const double t1 = acc / fs.denom[ai];
      max_update = std::max(max_update, fi - t1);
      max_pde = std::max(max_pde, fs.denom[ai] * (fi - t1));
    }
    for (int d = fs.dir_off[ai]; d < fs.dir_off[ai + 1]; ++d) {
      const auto& rec = fs.dirs[static_cast<std::size_t>(d)];
      double acc = rec.dh;
      for (int t = rec.t_off; t < rec.t_off + rec.t_len; ++t)
        acc += fs.dterms[static_cast<std::size_t>(t)].second *
               f[static_cast<std::size_t>(fs.dterms[static_cast<std::size_t>(t)].first)];
      const double t2 = acc * rec.inv_rest;
      max_update = std::max(max_update, fi - t2);
      max_pde = std::max(max_pde, (fi - t2) / (rec.inv_rest * delta));
    }
    rep.node_residual_update[static_cast<std::size_t>(i)] = max_update;
    rep.node_residual_pde[static_cast<std::size_t>(i)] = max_pde;
    if (g.node_class(i) == NodeClass::Interior) {
      rep.interior_sub_worst = std::max(rep.interior_sub_worst, max_update);
      rep.interior_super_worst = std::min(rep.interior_super_worst, max_update);
      rep.interior_sub_worst_pde = std::max(rep.interior_sub_worst_pde, max_pde);
      rep.interior_super_worst_pde = std::min(rep.interior_super_worst_pde, max_pde);
    } else {
      rep.boundary_super_worst = std::min(rep.boundary_super_worst, max_update);
      rep.boundary_super_worst_pde = std::min(rep.boundary_super_worst_pde, max_pde);
    }
  }
  return rep;
}

std::string ResidualReport::to_json() const {
  json j;
  j["interior_sub_worst"] = interior_sub_worst;
  j["interior_super_worst"] = interior_super_worst;
  j["boundary_super_worst"] = boundary_super_worst;
  j["interior_sub_worst_pde"] = interior_sub_worst_pde;
  j["interior_super_worst_pde"] = interior_super_worst_pde;
  j["boundary_super_worst_pde"] = boundary_super_worst_pde;
  return j.dump(2);
}

PolicyTable extract_policy(const ProblemSpec& spec, const ValueField& field,
                           double tol_active) {
  const Grid& g = *field.grid;
  DiscreteHamiltonian H = DiscreteHamiltonian::build(spec);
  const double delta = field.meta.delta > 0.0 ? field.meta.delta : g.mesh();
  FlatScheme fs = build_scheme(spec, g, H, delta);
  const std::vector<double>& f = field.values;

  PolicyTable table;
  table.grid = field.grid;
  table.H = H;
  table.push_dir.assign(static_cast<std::size_t>(g.size()), -1);

  for (std::size_t ai = 0; ai < fs.active.size(); ++ai) {
    const int i = fs.active[ai];
    double best = -kInf;
    int best_dir = -1;
    for (int d = fs.dir_off[ai]; d < fs.dir_off[ai + 1]; ++d) {
      const auto& rec = fs.dirs[static_cast<std::size_t>(d)];
      double acc = rec.dh;
      for (int t = rec.t_off; t < rec.t_off + rec.t_len; ++t)
        acc += fs.dterms[static_cast<std::size_t>(t)].second *
               f[static_cast<std::size_t>(fs.dterms[static_cast<std::size_t>(t)].first)];
      const double resid = f[static_cast<std::size_t>(i)] - acc * rec.inv_rest;
      if (resid > best + 1e-15) {  // ties keep the lowest direction index
        best = resid;
        best_dir = rec.dir;
      }
    }
    if (best_dir >= 0 && best >= -tol_active)
      table.push_dir[static_cast<std::size_t>(i)] = best_dir;
  }
  return table;
}

// ---------------------------------------------------------------------------
// nested solves
// ---------------------------------------------------------------------------

NestedResult solve_nested(const ProblemSpec& spec, const std::vector<double>& r_list,
                          const SchemeParams& params) {
  if (r_list.empty()) throw SpecError("solve_nested needs at least one radius");
  for (std::size_t i = 1; i < r_list.size(); ++i)
    if (!(r_list[i] > r_list[i - 1])) throw SpecError("r_list must be increasing");

  ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  const double m_ell = spec.ell.m_ell();
  double C = growth_matched_constant(spec, vecs);

  NestedResult out;
  for (std::size_t step = 0; step < r_list.size(); ++step) {
    SolveOptions opts;
    opts.growth_constant_override = C;
    if (params.dirichlet_mode == SchemeParams::DirichletMode::ExtendPrevious &&
        !out.fields.empty()) {
      const ValueField& prev = out.fields.back();
      const Vec u1 = vecs.u1_hat;
      const double r_prev = prev.meta.r;
      const double Cc = C;
      opts.phi = [&prev, u1, r_prev, Cc, m_ell](const Vec& x) {
        const double proj = u1.dot(x);
        Vec xp = x;
        if (proj > r_prev * 0.98) xp = x * (r_prev * 0.98 / proj);
        auto v = prev.try_at(xp);
        const double base = v ? *v : Cc * (1.0 + std::pow(xp.norm(), m_ell));
        return base + Cc * (std::pow(x.norm(), m_ell) - std::pow(xp.norm(), m_ell));
      };
    }
    ValueField field = solve(spec, r_list[step], params, opts);
    out.growth_constants.push_back(C);

    if (!out.fields.empty()) {
      const ValueField& prev = out.fields.back();
      const Grid& pg = *prev.grid;
      double diff = 0.0;
      for (int i = 0; i < pg.size(); ++i) {
        if (pg.node_class(i) == NodeClass::Dirichlet) continue;
        const int j = field.grid->node_at(pg.key_of(i));
        if (j < 0) continue;
        diff = std::max(diff, std::abs(field.values[static_cast<std::size_t>(j)] -
                                       prev.values[static_cast<std::size_t>(i)]));
      }
      out.interior_change.push_back(diff);
    }

    // re-calibrate the growth constant on the solved core
    if (params.dirichlet_mode == SchemeParams::DirichletMode::GrowthMatched) {
      const Grid& g = *field.grid;
      double c_fit = 0.0;
      for (int i = 0; i < g.size(); ++i) {
        if (g.u1().dot(g.coord(i)) > 0.5 * r_list[step]) continue;
        c_fit = std::max(c_fit, field.values[static_cast<std::size_t>(i)] /
                                    (1.0 + std::pow(g.coord(i).norm(), m_ell)));
      }
      if (c_fit > 0.0) C = std::min(C, c_fit);
    }
    out.fields.push_back(std::move(field));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ValueField
// ---------------------------------------------------------------------------

double ValueField::at(const Vec& x) const {
  auto v = try_at(x);
  if (!v) throw DomainError("value field evaluation outside the solved domain");
  return *v;
}

std::optional<double> ValueField::try_at(const Vec& x) const {
  Grid::Interpolation interp;
  if (!grid->interpolation_at(x, interp)) return std::nullopt;
  double acc = 0.0;
  for (const auto& [node, weight] : interp.terms)
    acc += weight * values[static_cast<std::size_t>(node)];
  return acc;
}

void ValueField::to_csv(std::ostream& os) const {
  for (int a = 0; a < grid->dim(); ++a) os << "x" << a << ",";
  os << "value,node_class\n";
  os.precision(17);
  for (int i = 0; i < grid->size(); ++i) {
    const Vec& x = grid->coord(i);
    for (int a = 0; a < grid->dim(); ++a) os << x[a] << ",";
    const char* cls = grid->node_class(i) == NodeClass::Interior        ? "interior"
                      : grid->node_class(i) == NodeClass::ConeBoundary ? "cone_boundary"
                                                                        : "dirichlet";
    os << values[static_cast<std::size_t>(i)] << "," << cls << "\n";
  }
}

std::string ValueField::metadata_json() const {
  json j;
  j["spec_hash"] = meta.spec_hash;
  j["r"] = meta.r;
  j["mesh"] = meta.mesh;
  j["delta"] = meta.delta;
  j["tol"] = meta.tol;
  j["iterations"] = meta.iterations;
  j["final_update"] = meta.final_update;
  j["damping_used"] = meta.damping_used;
  j["growth_constant"] = meta.growth_constant;
  j["dirichlet_mode"] = meta.dirichlet_mode;
  j["warnings"] = meta.warnings;
  j["tool_version"] = kToolVersion;
  return j.dump(2);
}

ValueField ValueField::from_csv(std::istream& csv, const std::string& meta_json,
                                const ProblemSpec& spec) {
  json j = json::parse(meta_json);
  SchemeParams params;
  params.mesh = j.at("mesh").get<double>();
  params.delta = j.at("delta").get<double>();
  ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  ValueField out;
  out.grid = std::make_shared<Grid>(discretize(spec, vecs, j.at("r").get<double>(), params));
  out.values.assign(static_cast<std::size_t>(out.grid->size()), kNan);
  out.meta.spec_hash = j.value("spec_hash", "");
  out.meta.r = j.at("r").get<double>();
  out.meta.mesh = params.mesh;
  out.meta.delta = params.delta;
  out.meta.growth_constant = j.value("growth_constant", 0.0);

  std::string line;
  std::getline(csv, line);  // header
  const int k = out.grid->dim();
  int matched = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Vec x(k);
    for (int a = 0; a < k; ++a) {
      std::getline(ss, cell, ',');
      x[a] = std::stod(cell);
    }
    std::getline(ss, cell, ',');
    const double v = std::stod(cell);
    Grid::Key key{};
    for (int a = 0; a < k; ++a) key[static_cast<std::size_t>(a)] = std::lround(x[a] / params.mesh);
    const int node = out.grid->node_at(key);
    if (node < 0) throw SpecError("value field CSV row does not match the grid");
    out.values[static_cast<std::size_t>(node)] = v;
    ++matched;
  }
  if (matched != out.grid->size())
    throw SpecError("value field CSV does not cover the grid");
  return out;
}

ValueField ValueField::constant(const ProblemSpec& spec, double r,
                                const SchemeParams& params, double c) {
  ConeVectors vecs = validate_assumptions(*spec.X, *spec.Y, spec.G);
  ValueField out;
  out.grid = std::make_shared<Grid>(discretize(spec, vecs, r, params));
  out.values.assign(static_cast<std::size_t>(out.grid->size()), c);
  out.meta.spec_hash = spec_hash_hex(spec);
  out.meta.r = r;
  out.meta.mesh = params.mesh;
  out.meta.delta = params.effective_delta();
  return out;
}

}  // namespace conectl
