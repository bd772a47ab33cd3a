#pragma once

// Planar grids of fits: branch alignment, finite-difference gradients of the
// Lagrangian coordinates, the lower-bound functional and defect maps.

#include "latfit/fitting.hpp"
#include "latfit/parallel.hpp"
#include "latfit/topology.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

namespace latfit {

/// Nodes origin + h·(i, j) for 0 ≤ i < nx, 0 ≤ j < ny.
struct GridGeometry {
  Vec<2> origin = Vec<2>::Zero();
  double h = 1.0;
  int nx = 0;
  int ny = 0;

  int size() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  bool inside(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
  Vec<2> node(int i, int j) const { return origin + h * Vec<2>(i, j); }
};

struct FieldGrid {
  GridGeometry geometry;
  std::vector<FitResult<2>> fits;
  std::vector<bool> valid;
  /// Connected component of valid nodes (−1 for invalid nodes).
  std::vector<int> component;
  std::vector<int> seeds;
  /// Relabeling that moves each node's fit onto its component's branch.
  std::vector<Reparam<2>> alignment;
  std::vector<AffinePair<2>> aligned;
  std::vector<BranchPoint<2>> branch;
  std::vector<bool> branch_ok;
  /// ρ_λ and ρ_{2λ} at every node.
  std::vector<double> rho;
  std::vector<double> rho2;

  bool usable(int i, int j) const {
    return geometry.inside(i, j) && branch_ok[geometry.index(i, j)];
  }
};

/// Fits every node, masks irregular ones and aligns each connected valid
/// region to the labeling of its first node (row-major order) by a
/// breadth-first spanning tree.
inline FieldGrid evaluate_grid(const Model<2>& model, const Configuration<2>& chi, const GridGeometry& geo,
                               std::optional<int> seed = std::nullopt) {
  if (geo.nx <= 0 || geo.ny <= 0) throw Error("evaluate_grid: empty grid");
  if (geo.h > model.lambda() / 4.0 + 1e-12) throw Error("evaluate_grid: grid spacing must be at most lambda/4");
  const int n = geo.size();
  FieldGrid f;
  f.geometry = geo;
  f.fits.resize(n);
  f.valid.assign(n, false);
  f.rho.assign(n, 0.0);
  f.rho2.assign(n, 0.0);
  std::vector<char> valid(n, 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    const int i = static_cast<int>(k) % geo.nx, j = static_cast<int>(k) / geo.nx;
    const Vec<2> x = geo.node(i, j);
    f.rho[k] = local_density(model, chi, x);
    f.rho2[k] = local_density(model, chi, x, 2.0 * model.lambda());
    try {
      f.fits[k] = fit_global(model, chi, x);
      valid[k] = f.fits[k].converged && f.fits[k].regularity.regular;
    } catch (const Error&) {
      f.fits[k].x = x;
      valid[k] = 0;
    }
  });
  for (int k = 0; k < n; ++k) f.valid[k] = valid[k] != 0;
  if (seed && !(*seed >= 0 && *seed < n && f.valid[*seed])) throw Error("evaluate_grid: seed node is not valid");

  f.component.assign(n, -1);
  f.alignment.assign(n, Reparam<2>{});
  f.aligned.resize(n);
  const std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
  auto grow = [&](int s) {
    const int comp = static_cast<int>(f.seeds.size());
    f.seeds.push_back(s);
    f.component[s] = comp;
    f.aligned[s] = f.fits[s].aff_hat;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      const int ui = u % geo.nx, uj = u / geo.nx;
      const ChainPoint<2> pu{f.fits[u].x, f.aligned[u], f.fits[u].breakdown.j_term, true};
      for (const auto& d : dirs) {
        const int vi = ui + d[0], vj = uj + d[1];
        if (!geo.inside(vi, vj)) continue;
        const int v = geo.index(vi, vj);
        if (!f.valid[v] || f.component[v] >= 0) continue;
        const ChainPoint<2> pv = ChainPoint<2>::from_fit(f.fits[v]);
        try {
          const auto step = find_reparam(model, pu, pv);
          f.alignment[v] = step.reparam;
          f.aligned[v] = apply(step.reparam, f.fits[v].aff_hat);
          f.component[v] = comp;
          queue.push_back(v);
        } catch (const Error&) {
          // Left for another tree edge or its own component.
        }
      }
    }
  };
  if (seed) grow(*seed);
  for (int k = 0; k < n; ++k)
    if (f.valid[k] && f.component[k] < 0) grow(k);

  f.branch.resize(n);
  f.branch_ok.assign(n, false);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    if (f.component[k] < 0) return;
    try {
      f.branch[k] = minimize_j_local(model, f.aligned[k], chi, f.fits[k].x);
      f.branch[k].provenance = f.alignment[k];
      f.branch_ok[k] = f.branch[k].converged;
    } catch (const Error&) {
      f.branch_ok[k] = false;
    }
  });
  return f;
}

/// Product of the four edge reparametrisations around the plaquette with
/// lower-left node (i, j), traversed counterclockwise.
inline std::optional<Reparam<2>> plaquette_product(const Model<2>& model, const FieldGrid& f, int i, int j) {
  const auto& g = f.geometry;
  const std::array<std::array<int, 2>, 5> corners{{{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}, {i, j}}};
  std::vector<ChainPoint<2>> points;
  for (const auto& c : corners) {
    if (!g.inside(c[0], c[1]) || !f.valid[g.index(c[0], c[1])]) return std::nullopt;
    points.push_back(ChainPoint<2>::from_fit(f.fits[g.index(c[0], c[1])]));
  }
  return chain_product(chain_steps(model, points));
}

/// Finite-difference derivatives of the aligned J-minimiser field at a node.
struct NodeGradients {
  bool has_first = false;
  bool has_second = false;
  bool one_sided = false;
  Mat<2> grad_tau = Mat<2>::Zero();                 // (∇τ̃)_{ik} = ∂_k τ̃_i
  std::array<Mat<2>, 2> grad_A{Mat<2>::Zero(), Mat<2>::Zero()};     // ∂_k Ã
  std::array<Mat<2>, 2> hess_tau{Mat<2>::Zero(), Mat<2>::Zero()};   // (∂_k∂_l τ̃_i) per i

  double grad_A_norm2() const { return grad_A[0].squaredNorm() + grad_A[1].squaredNorm(); }
  double hess_tau_norm2() const { return hess_tau[0].squaredNorm() + hess_tau[1].squaredNorm(); }
};

namespace detail {

/// Neighbour's J-minimiser relabeled into the centre's parametrisation.
inline std::optional<AffinePair<2>> neighbor_in_frame(const Model<2>& model, const FieldGrid& f, int c, int i,
                                                      int j) {
  if (!f.usable(i, j)) return std::nullopt;
  const int k = f.geometry.index(i, j);
  if (f.component[k] != f.component[c]) return std::nullopt;
  const ChainPoint<2> pc{f.branch[c].x, f.branch[c].aff_tilde, f.branch[c].j_value, true};
  const ChainPoint<2> pk{f.branch[k].x, f.branch[k].aff_tilde, f.branch[k].j_value, true};
  try {
    return apply(find_reparam(model, pc, pk).reparam, f.branch[k].aff_tilde);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline NodeGradients fd_gradients(const Model<2>& model, const FieldGrid& f, int i, int j) {
  NodeGradients g;
  const auto& geo = f.geometry;
  if (!f.usable(i, j)) return g;
  const int c = geo.index(i, j);
  const AffinePair<2>& center = f.branch[c].aff_tilde;
  const double h = geo.h;
  auto at = [&](int di, int dj) { return detail::neighbor_in_frame(model, f, c, i + di, j + dj); };
  std::array<std::optional<AffinePair<2>>, 2> plus{at(1, 0), at(0, 1)}, minus{at(-1, 0), at(0, -1)};
  std::array<std::optional<AffinePair<2>>, 2> plus2{at(2, 0), at(0, 2)}, minus2{at(-2, 0), at(0, -2)};
  g.has_first = true;
  for (int k = 0; k < 2; ++k) {
    if (plus[k] && minus[k]) {
      g.grad_tau.col(k) = (plus[k]->tau - minus[k]->tau) / (2.0 * h);
      g.grad_A[k] = (plus[k]->A - minus[k]->A) / (2.0 * h);
    } else if (plus[k] && plus2[k]) {
      g.grad_tau.col(k) = (-3.0 * center.tau + 4.0 * plus[k]->tau - plus2[k]->tau) / (2.0 * h);
      g.grad_A[k] = (-3.0 * center.A + 4.0 * plus[k]->A - plus2[k]->A) / (2.0 * h);
      g.one_sided = true;
    } else if (minus[k] && minus2[k]) {
      g.grad_tau.col(k) = (3.0 * center.tau - 4.0 * minus[k]->tau + minus2[k]->tau) / (2.0 * h);
      g.grad_A[k] = (3.0 * center.A - 4.0 * minus[k]->A + minus2[k]->A) / (2.0 * h);
      g.one_sided = true;
    } else {
      g.has_first = false;
    }
  }
  const auto pp = at(1, 1), pm = at(1, -1), mp = at(-1, 1), mm = at(-1, -1);
  if (plus[0] && minus[0] && plus[1] && minus[1] && pp && pm && mp && mm) {
    g.has_second = true;
    for (int comp = 0; comp < 2; ++comp) {
      Mat<2>& hs = g.hess_tau[comp];
      hs(0, 0) = (plus[0]->tau(comp) - 2.0 * center.tau(comp) + minus[0]->tau(comp)) / (h * h);
      hs(1, 1) = (plus[1]->tau(comp) - 2.0 * center.tau(comp) + minus[1]->tau(comp)) / (h * h);
      hs(0, 1) = hs(1, 0) = (pp->tau(comp) - pm->tau(comp) - mp->tau(comp) + mm->tau(comp)) / (4.0 * h * h);
    }
  }
  return g;
}

struct FcResult {
  double value = 0.0;
  /// min_B F(BA) over the same B range.
  double upper_value = 0.0;
  IMat<2> best_B = IMat<2>::Identity();
  bool converged = true;
};

namespace detail {

/// U(A, A₁, B, A₂) with A₂' = BA₂ as variable; x = (A₁, A₂') row-major.
struct UFunctional {
  const ElasticDensity<2>& elastic;
  Mat<2> a;
  Mat<2> b_inv;
  double k1;  // (1/3) C_con C_rep⁻¹ det A λ²
  double k2;  // (1/2) C̃_∇ det A λ²

  static Mat<2> block(const Eigen::Matrix<double, 8, 1>& x, int offset) {
    Mat<2> m;
    m << x(offset), x(offset + 1), x(offset + 2), x(offset + 3);
    return m;
  }

  double value(const Eigen::Matrix<double, 8, 1>& x) const {
    const Mat<2> a1 = block(x, 0), a2 = block(x, 4);
    if (!(a1.determinant() > 0.0 && a2.determinant() > 0.0)) return std::numeric_limits<double>::infinity();
    return elastic.value(b_inv * a2) + k1 * a2.inverse().squaredNorm() * (a2 - a1).squaredNorm() +
           k2 * a1.inverse().squaredNorm() * (a - a1).squaredNorm();
  }

  Eigen::Matrix<double, 8, 1> gradient(const Eigen::Matrix<double, 8, 1>& x) const {
    const Mat<2> a1 = block(x, 0), a2 = block(x, 4);
    const Mat<2> i1 = a1.inverse(), i2 = a2.inverse();
    const double s1 = i1.squaredNorm(), s2 = i2.squaredNorm();
    const Mat<2> ds1 = -2.0 * i1.transpose() * i1 * i1.transpose();
    const Mat<2> ds2 = -2.0 * i2.transpose() * i2 * i2.transpose();
    const Mat<2> g1 = -2.0 * k1 * s2 * (a2 - a1) + k2 * (ds1 * (a - a1).squaredNorm() - 2.0 * s1 * (a - a1));
    const Mat<2> g2 = b_inv.transpose() * elastic.gradient(b_inv * a2) +
                      k1 * (ds2 * (a2 - a1).squaredNorm() + 2.0 * s2 * (a2 - a1));
    Eigen::Matrix<double, 8, 1> g;
    g << g1(0, 0), g1(0, 1), g1(1, 0), g1(1, 1), g2(0, 0), g2(0, 1), g2(1, 0), g2(1, 1);
    return g;
  }
};

/// Damped Newton with finite-difference Hessians of the analytic gradient.
inline std::pair<double, bool> minimize_u(const UFunctional& u, Eigen::Matrix<double, 8, 1> x) {
  using V8 = Eigen::Matrix<double, 8, 1>;
  using M8 = Eigen::Matrix<double, 8, 8>;
  double f = u.value(x);
  if (!std::isfinite(f)) return {f, false};
  for (int it = 0; it < 60; ++it) {
    const V8 g = u.gradient(x);
    if (g.norm() <= 1e-12 * std::max(1.0, std::abs(f))) return {f, true};
    M8 h;
    const double step = 1e-6;
    for (int k = 0; k < 8; ++k) {
      V8 xp = x, xm = x;
      xp(k) += step;
      xm(k) -= step;
      h.col(k) = (u.gradient(xp) - u.gradient(xm)) / (2.0 * step);
    }
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<M8> eig(h);
    V8 ev = eig.eigenvalues();
    const double floor = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int k = 0; k < 8; ++k) ev(k) = std::max(std::abs(ev(k)), floor);
    const auto& q = eig.eigenvectors();
    V8 p = -(q * (q.transpose() * g).cwiseQuotient(ev));
    if (p.norm() > 0.5) p *= 0.5 / p.norm();
    const double slope = g.dot(p);
    if (-slope <= 1e-30) return {f, true};
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 50; ++k, t *= 0.5) {
      const double ft = u.value(x + t * p);
      if (ft <= f + 1e-4 * t * slope) {
        x += t * p;
        accepted = (f - ft) > 0.0 || accepted;
        f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) return {f, -slope <= 1e-20 * std::max(1.0, std::abs(f))};
  }
  return {f, false};
}

}  // namespace detail

/// F_C(A) = inf U(A, A₁, B, A₂) over A₁, A₂ and B ∈ SL_2(ℤ) with entries in
/// [−range, range]. c_con and c_tilde are C_con and C̃_∇(ρ_{2λ}/ρ_λ) at the
/// point.
inline FcResult f_c(const Model<2>& model, const Mat<2>& a, double c_con, double c_tilde) {
  if (!(a.determinant() > 0.0)) throw Error("f_c: det A must be positive");
  const auto& c = model.constants();
  const double lambda = model.lambda();
  const double det_a = a.determinant();
  const ElasticDensity<2>& el = model.elastic();
  FcResult res;
  res.value = std::numeric_limits<double>::infinity();
  res.upper_value = std::numeric_limits<double>::infinity();
  for (const auto& b : enumerate_unimodular<2>(model.params().fc_b_range)) {
    const Mat<2> bd = b.cast<double>();
    const Mat<2> binv = bd.inverse();
    res.upper_value = std::min(res.upper_value, el.value(bd * a));
    detail::UFunctional u{el, a, binv, c_con / (3.0 * c.C_rep) * det_a * lambda * lambda,
                          0.5 * c_tilde * det_a * lambda * lambda};
    // Starts: the feasible point A₁ = A₂' = A, and A₂' on B·E·SO_2.
    const Mat<2> on_well = bd * model.params().E *
                           nearest_rotation<2>(Mat<2>(model.params().E.transpose() * binv * a));
    const std::array<std::pair<Mat<2>, Mat<2>>, 3> starts{{{a, a}, {a, on_well}, {on_well, on_well}}};
    for (const auto& [a1, a2] : starts) {
      Eigen::Matrix<double, 8, 1> x;
      x << a1(0, 0), a1(0, 1), a1(1, 0), a1(1, 1), a2(0, 0), a2(0, 1), a2(1, 0), a2(1, 1);
      const auto [value, ok] = detail::minimize_u(u, x);
      if (value < res.value) {
        res.value = value;
        res.best_B = b;
        res.converged = ok;
      }
    }
  }
  if (!std::isfinite(res.value)) {
    res.value = res.upper_value;
    res.converged = false;
  }
  return res;
}

struct LowerBoundEntry {
  int i = 0;
  int j = 0;
  double h_hat = 0.0;
  double f_c = 0.0;
  double f_c_upper = 0.0;
  double gradient_term = 0.0;       // with the factor 1/5
  double gradient_term_half = 0.0;  // with the factor 1/2
  double rhs_total = 0.0;
  double slack = 0.0;
  bool low_energy = false;          // ĥ ≤ ε̂
  bool b_condition = false;         // ‖Ã⁻¹‖ ≤ 2‖E⁻¹‖ for the aligned branch
  bool fc_converged = true;
};

/// Lower-bound check at a node with a full second-difference stencil.
inline std::optional<LowerBoundEntry> lower_bound_check(const Model<2>& model, const FieldGrid& f, int i, int j) {
  const NodeGradients g = fd_gradients(model, f, i, j);
  if (!g.has_first || !g.has_second || g.one_sided) return std::nullopt;
  const int k = f.geometry.index(i, j);
  const auto& c = model.constants();
  LowerBoundEntry e;
  e.i = i;
  e.j = j;
  e.h_hat = f.fits[k].breakdown.total;
  const Mat<2> grad_tau = g.grad_tau;
  const double det_g = grad_tau.determinant();
  if (!(det_g > 0.0)) return std::nullopt;
  const double x_ratio = f.rho2[k] / f.rho[k];
  const double c_con = c.C_con(f.rho[k] / f.branch[k].aff_tilde.A.determinant());
  const double c_tilde = c.C_tilde_nabla(x_ratio, c_con);
  const FcResult fc = f_c(model, grad_tau, c_con, c_tilde);
  e.f_c = fc.value;
  e.f_c_upper = fc.upper_value;
  e.fc_converged = fc.converged;
  const double lambda = model.lambda();
  const double base = c_tilde * grad_tau.inverse().squaredNorm() * std::pow(lambda, 4) * g.hess_tau_norm2() * det_g;
  e.gradient_term = base / 5.0;
  e.gradient_term_half = base / 2.0;
  e.rhs_total = e.f_c + e.gradient_term;
  e.slack = e.h_hat - e.rhs_total;
  e.low_energy = e.h_hat <= model.params().eps_hat;
  e.b_condition = f.aligned[k].A.inverse().norm() <= 2.0 * model.params().E.inverse().norm();
  return e;
}

/// First gradient bound for the J-minimisers at a node:
/// λ²‖∇Ã‖² + ‖∇τ̃ − Ã‖² against J · factor.
struct GradientBoundEntry {
  double lhs = 0.0;
  double rhs = 0.0;

  bool holds(double tol = 1e-10) const { return lhs <= rhs + tol; }
};

inline std::optional<GradientBoundEntry> gradient_bound_check(const Model<2>& model, const FieldGrid& f, int i,
                                                              int j) {
  const NodeGradients g = fd_gradients(model, f, i, j);
  if (!g.has_first || g.one_sided) return std::nullopt;
  const int k = f.geometry.index(i, j);
  const auto& bp = f.branch[k];
  const auto& c = model.constants();
  const double lambda = model.lambda();
  GradientBoundEntry e;
  e.lhs = lambda * lambda * g.grad_A_norm2() + (g.grad_tau - bp.aff_tilde.A).squaredNorm();
  const double c_con = c.C_con(f.rho[k] / bp.aff_tilde.A.determinant());
  e.rhs = bp.j_value * c.gradient_bound_factor(c_con, bp.aff_tilde.A.inverse().norm(), f.rho[k], f.rho2[k], lambda);
  return e;
}

struct DefectCluster {
  std::vector<int> nodes;
  bool ringable = false;
  /// Ring rectangle in node indices (inclusive).
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;
  std::optional<LoopResult<2>> ring;
};

struct DefectMap {
  std::vector<bool> regular;
  std::vector<DefectCluster> clusters;
};

/// Counterclockwise rectangle of grid nodes (closed: first = last).
inline std::vector<std::array<int, 2>> ring_nodes(int i0, int j0, int i1, int j1) {
  std::vector<std::array<int, 2>> r;
  for (int i = i0; i < i1; ++i) r.push_back({i, j0});
  for (int j = j0; j < j1; ++j) r.push_back({i1, j});
  for (int i = i1; i > i0; --i) r.push_back({i, j1});
  for (int j = j1; j > j0; --j) r.push_back({i0, j});
  r.push_back({i0, j0});
  return r;
}

/// Loop product along a counterclockwise rectangle of valid grid fits.
inline std::optional<LoopResult<2>> ring_loop(const Model<2>& model, const FieldGrid& f, int i0, int j0, int i1,
                                              int j1) {
  const auto& g = f.geometry;
  std::vector<ChainPoint<2>> points;
  for (const auto& n : ring_nodes(i0, j0, i1, j1)) {
    if (!g.inside(n[0], n[1]) || !f.valid[g.index(n[0], n[1])]) return std::nullopt;
    points.push_back(ChainPoint<2>::from_fit(f.fits[g.index(n[0], n[1])]));
  }
  try {
    return loop_from_points(model, points);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Connected clusters of invalid nodes, each ringed by the smallest
/// enclosing rectangle of valid nodes that the grid admits.
inline DefectMap defect_map(const Model<2>& model, const FieldGrid& f) {
  const auto& g = f.geometry;
  DefectMap map;
  map.regular = f.valid;
  std::vector<int> label(g.size(), -1);
  for (int s = 0; s < g.size(); ++s) {
    if (f.valid[s] || label[s] >= 0) continue;
    DefectCluster cl;
    std::deque<int> queue{s};
    label[s] = static_cast<int>(map.clusters.size());
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      cl.nodes.push_back(u);
      const int ui = u % g.nx, uj = u / g.nx;
      const std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
      for (const auto& d : dirs) {
        const int vi = ui + d[0], vj = uj + d[1];
        if (!g.inside(vi, vj)) continue;
        const int v = g.index(vi, vj);
        if (f.valid[v] || label[v] >= 0) continue;
        label[v] = label[s];
        queue.push_back(v);
      }
    }
    int i0 = g.nx, j0 = g.ny, i1 = -1, j1 = -1;
    for (int u : cl.nodes) {
      i0 = std::min(i0, u % g.nx);
      i1 = std::max(i1, u % g.nx);
      j0 = std::min(j0, u / g.nx);
      j1 = std::max(j1, u / g.nx);
    }
    for (int grow = 1; i0 - grow >= 0 && j0 - grow >= 0 && i1 + grow < g.nx && j1 + grow < g.ny; ++grow) {
      auto loop = ring_loop(model, f, i0 - grow, j0 - grow, i1 + grow, j1 + grow);
      if (loop) {
        cl.ringable = true;
        cl.i0 = i0 - grow;
        cl.j0 = j0 - grow;
        cl.i1 = i1 + grow;
        cl.j1 = j1 + grow;
        cl.ring = std::move(loop);
        break;
      }
    }
    map.clusters.push_back(std::move(cl));
  }
  return map;
}

}  // namespace latfit
