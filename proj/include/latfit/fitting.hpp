#pragma once

// Minimisation of h_λ over 𝔄 (ĥ_λ), local minimisers of J_λ and their
// continuation along paths.

#include "latfit/model.hpp"
#include "latfit/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace latfit {

template <int Dim>
struct FitResult {
  Vec<Dim> x = Vec<Dim>::Zero();
  AffinePair<Dim> aff_hat;
  EnergyBreakdown breakdown;
  RegularityReport regularity;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
};

template <int Dim>
struct BranchPoint {
  Vec<Dim> x = Vec<Dim>::Zero();
  AffinePair<Dim> aff_tilde;
  /// Relabeling applied relative to the branch origin.
  Reparam<Dim> provenance;
  double j_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool start_regular = false;
};

template <int Dim>
struct TrackResult {
  std::vector<BranchPoint<Dim>> points;
  bool complete = true;
  std::string reason;
};

namespace detail {

template <int Dim>
struct NewtonOutcome {
  AffVec<Dim> v;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton in the ‖·‖_λ-scaled coordinates. `eval(v)` returns the
/// objective (+inf outside det A > 0); `derivs(v, g, H)` fills gradient and
/// Hessian. With `strict`, an indefinite Hessian throws instead of being
/// regularised.
template <int Dim, typename Eval, typename Derivs>
NewtonOutcome<Dim> newton(const AffVec<Dim>& v0, double lambda, const SolverOptions& opt,
                          bool strict, Eval&& eval, Derivs&& derivs) {
  constexpr int n = kAffSize<Dim>;
  const AffVec<Dim> scale = lambda_scaling<Dim>(lambda);
  NewtonOutcome<Dim> out;
  out.v = v0;
  out.value = eval(v0);
  AffVec<Dim> g;
  AffMat<Dim> h;
  for (;;) {
    derivs(out.v, g, h);
    out.grad_norm = g.norm();
    if (out.grad_norm <= opt.tol_grad) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= opt.max_iterations) return out;
    const AffVec<Dim> gs = g.cwiseQuotient(scale);
    const AffMat<Dim> hs = scale.cwiseInverse().asDiagonal() * h * scale.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<AffMat<Dim>> eig(hs);
    Eigen::Matrix<double, n, 1> ev = eig.eigenvalues();
    if (strict && !(ev(0) > 0.0)) throw Error("left convexity basin");
    const double floor = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) ev(i) = std::max(std::abs(ev(i)), floor);
    const auto& q = eig.eigenvectors();
    AffVec<Dim> ps = -(q * (q.transpose() * gs).cwiseQuotient(ev));
    const double decrement2 = -gs.dot(ps);
    // Predicted decrease at round-off level: nothing left to gain.
    if (decrement2 <= std::max(1e-26, 1e-15 * std::abs(out.value))) {
      out.converged = true;
      return out;
    }
    // Steps beyond half a lattice phase across the support jump between wells.
    const double len = ps.norm();
    if (len > 0.5) ps *= 0.5 / len;
    const AffVec<Dim> p = ps.cwiseQuotient(scale);
    const double slope = g.dot(p);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= opt.backtrack) {
      const AffVec<Dim> trial = out.v + t * p;
      const double f = eval(trial);
      if (f <= out.value + opt.armijo * t * slope && f < out.value) {
        out.v = trial;
        out.value = f;
        accepted = true;
        break;
      }
    }
    ++out.iterations;
    if (!accepted) {
      out.converged = decrement2 <= 1e-12 * std::max(1.0, std::abs(out.value));
      return out;
    }
  }
}

/// h with |det A − ρ| replaced by √((det A − ρ)² + ε²) − ε.
template <int Dim>
struct SmoothedEnergy {
  const Model<Dim>& model;
  const Neighborhood<Dim>& nb;
  double rho;
  double eps;

  double operator()(const AffVec<Dim>& v) const {
    const AffinePair<Dim> aff = unflatten<Dim>(v);
    const double det_a = aff.A.determinant();
    if (!(det_a > 0.0)) return std::numeric_limits<double>::infinity();
    const double diff = det_a - rho;
    return model.elastic().value(aff.A) + j_lambda(model, aff, nb) +
           model.params().vartheta * (std::sqrt(diff * diff + eps * eps) - eps);
  }

  void derivs(const AffVec<Dim>& v, AffVec<Dim>& g, AffMat<Dim>& h) const {
    constexpr int n = Dim * Dim;
    const AffinePair<Dim> aff = unflatten<Dim>(v);
    const auto jd = j_derivatives(model, aff, nb, true);
    g = jd.grad;
    h = jd.hess;
    const Mat<Dim> fg = model.elastic().gradient(aff.A);
    for (int k = 0; k < n; ++k) g(k) += fg(k / Dim, k % Dim);
    h.template topLeftCorner<n, n>() += model.elastic().hessian(aff.A);
    // ∂det/∂A_ij = det (A⁻¹)_ji; ∂²det = det((A⁻¹)_ji (A⁻¹)_lk − (A⁻¹)_li (A⁻¹)_jk).
    const double det_a = aff.A.determinant();
    const Mat<Dim> inv = aff.A.inverse();
    Eigen::Matrix<double, n, 1> dg;
    Eigen::Matrix<double, n, n> dh;
    for (int a = 0; a < n; ++a) {
      const int i = a / Dim, j = a % Dim;
      dg(a) = det_a * inv(j, i);
      for (int b = 0; b < n; ++b) {
        const int k = b / Dim, l = b % Dim;
        dh(a, b) = det_a * (inv(j, i) * inv(l, k) - inv(l, i) * inv(j, k));
      }
    }
    const double diff = det_a - rho;
    const double s = std::sqrt(diff * diff + eps * eps);
    const double theta = model.params().vartheta;
    g.template head<n>() += theta * diff / s * dg;
    h.template topLeftCorner<n, n>() +=
        theta * (eps * eps / (s * s * s) * dg * dg.transpose() + diff / s * dh);
  }
};

template <int Dim>
NewtonOutcome<Dim> continuation(const Model<Dim>& model, const Neighborhood<Dim>& nb,
                                const AffVec<Dim>& v0, double eps_start) {
  const auto& opt = model.params().solver;
  const double rho = nb.density(model.constants());
  const double eps_end = opt.eps_nu * std::max(rho, 1e-300);
  NewtonOutcome<Dim> out;
  out.v = v0;
  int total = 0;
  for (double eps = std::max(eps_start * rho, eps_end);; eps = std::max(eps * 1e-2, eps_end)) {
    SmoothedEnergy<Dim> energy{model, nb, rho, eps};
    out = newton<Dim>(
        out.v, nb.scale, opt, false, [&](const AffVec<Dim>& v) { return energy(v); },
        [&](const AffVec<Dim>& v, AffVec<Dim>& g, AffMat<Dim>& h) { energy.derivs(v, g, h); });
    total += out.iterations;
    if (eps <= eps_end) break;
  }
  out.iterations = total;
  return out;
}

template <int Dim>
double exact_energy(const Model<Dim>& model, const AffinePair<Dim>& aff, const Neighborhood<Dim>& nb) {
  if (!(aff.A.determinant() > 0.0)) return std::numeric_limits<double>::infinity();
  return pre_energy(model, aff, nb).total;
}

/// Canonical sign of a difference vector: first nonzero coordinate positive.
template <int Dim>
Vec<Dim> canonical_sign(const Vec<Dim>& v) {
  for (int k = 0; k < Dim; ++k) {
    if (v(k) > 0.0) return v;
    if (v(k) < 0.0) return -v;
  }
  return v;
}

/// Same lattice: V₁⁻¹V₂ is an integer matrix with det ±1.
template <int Dim>
bool same_lattice(const Mat<Dim>& v1, const Mat<Dim>& v2) {
  const Mat<Dim> m = v1.inverse() * v2;
  if (rounding_gap(m) > 0.2) return false;
  const std::int64_t det = int_det<Dim>(round_to_int<Dim>(m));
  return det == 1 || det == -1;
}

/// Pairwise Gauss reduction of the columns of V (the lattice basis A⁻¹):
/// subtract rounded projections until no column shortens. det is kept
/// positive.
template <int Dim>
Mat<Dim> reduce_basis(Mat<Dim> v) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool changed = false;
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) {
        if (i == j) continue;
        const double q = std::round(v.col(i).dot(v.col(j)) / v.col(j).squaredNorm());
        if (q == 0.0) continue;
        const Vec<Dim> next = v.col(i) - q * v.col(j);
        if (next.squaredNorm() < v.col(i).squaredNorm() * (1.0 - 1e-12)) {
          v.col(i) = next;
          changed = true;
        }
      }
    if (!changed) break;
  }
  if (v.determinant() < 0.0) v.col(0) *= -1.0;
  return v;
}

/// Relabels 𝔄 by the B ∈ SL_d(ℤ) with entries in [−1, 1] that minimises
/// F(BA); ties go to the smallest ‖BA − E‖.
template <int Dim>
AffinePair<Dim> relabel_towards_reference(const Model<Dim>& model, const AffinePair<Dim>& aff) {
  AffinePair<Dim> best = aff;
  double best_f = model.elastic().value(aff.A);
  double best_d = (aff.A - model.params().E).squaredNorm();
  for (const auto& b : enumerate_unimodular<Dim>(1)) {
    const AffinePair<Dim> cand = apply(Reparam<Dim>{b, IVec<Dim>::Zero()}, aff);
    const double f = model.elastic().value(cand.A);
    const double d = (cand.A - model.params().E).squaredNorm();
    if (f < best_f - 1e-12 || (std::abs(f - best_f) <= 1e-12 && d < best_d - 1e-12)) {
      best = cand;
      best_f = f;
      best_d = d;
    }
  }
  return best;
}

}  // namespace detail

/// Phase estimate τ_k = −arg(Σ φ exp(2πi (A(x_i − x))_k)) / 2π in [0, 1).
template <int Dim>
Vec<Dim> tau_init(const Mat<Dim>& a, const Neighborhood<Dim>& nb) {
  if (nb.size() == 0 || !(nb.weight_sum > 0.0)) throw Error("tau_init: no atoms in range");
  Vec<Dim> tau;
  for (int k = 0; k < Dim; ++k) {
    std::complex<double> sum = 0.0;
    for (std::size_t i = 0; i < nb.size(); ++i)
      sum += nb.weights[i] * std::polar(1.0, 2.0 * kPi * a.row(k).dot(nb.offsets[i]));
    tau(k) = -std::arg(sum) / (2.0 * kPi);
  }
  return wrap_unit<Dim>(tau);
}

template <int Dim>
Vec<Dim> tau_init(const Model<Dim>& model, const Mat<Dim>& a, const Configuration<Dim>& chi,
                  const Vec<Dim>& x) {
  return tau_init(a, Neighborhood<Dim>::gather(chi, x, model.lambda()));
}

/// Candidate matrices A whose lattice bases come from the k shortest distinct
/// difference vectors among atoms in B_λ(x). Ordered by how well the cell
/// volume matches the local density; one representative per lattice.
template <int Dim>
std::vector<Mat<Dim>> a_init_candidates(const Model<Dim>& model, const Configuration<Dim>& chi,
                                        const Vec<Dim>& x, int k) {
  std::vector<std::size_t> idx = chi.query(x, model.lambda());
  if (idx.size() < static_cast<std::size_t>(Dim + 1))
    throw Error("a_init_candidates: too few atoms near the sample point");
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return (chi.position(a) - x).squaredNorm() < (chi.position(b) - x).squaredNorm();
  });
  idx.resize(std::min<std::size_t>(idx.size(), Dim == 2 ? 48 : 96));

  std::vector<Vec<Dim>> diffs;
  for (std::size_t p = 0; p < idx.size(); ++p)
    for (std::size_t q = p + 1; q < idx.size(); ++q) {
      const Vec<Dim> v = chi.position(idx[q]) - chi.position(idx[p]);
      if (v.norm() > 1e-9) diffs.push_back(detail::canonical_sign<Dim>(v));
    }
  std::stable_sort(diffs.begin(), diffs.end(),
                   [](const Vec<Dim>& a, const Vec<Dim>& b) { return a.squaredNorm() < b.squaredNorm(); });
  const double shortest = diffs.front().norm();
  const double tol = 0.25 * shortest;

  struct Cluster {
    Vec<Dim> sum;
    int count;
    Vec<Dim> mean() const { return sum / count; }
  };
  std::vector<Cluster> clusters;
  for (const auto& v : diffs) {
    if (v.norm() > 3.0 * shortest) break;
    bool placed = false;
    for (auto& c : clusters) {
      const Vec<Dim> m = c.mean();
      if ((v - m).norm() < tol) {
        c.sum += v;
        ++c.count;
        placed = true;
        break;
      }
      if ((v + m).norm() < tol) {
        c.sum -= v;
        ++c.count;
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({v, 1});
  }
  std::vector<Vec<Dim>> basis;
  for (const auto& c : clusters) basis.push_back(c.mean());
  std::stable_sort(basis.begin(), basis.end(),
                   [](const Vec<Dim>& a, const Vec<Dim>& b) { return a.squaredNorm() < b.squaredNorm(); });
  if (basis.size() > static_cast<std::size_t>(k)) basis.resize(k);

  const double rho = local_density(model, chi, x);
  struct Candidate {
    Mat<Dim> v;
    double score;
    double length;
  };
  std::vector<Candidate> cands;
  std::array<std::size_t, Dim> pick{};
  for (std::size_t i = 0; i < Dim; ++i) pick[i] = i;
  const std::size_t nb = basis.size();
  if (nb >= static_cast<std::size_t>(Dim)) {
    for (;;) {
      Mat<Dim> v;
      double length = 0.0;
      for (int c = 0; c < Dim; ++c) {
        v.col(c) = basis[pick[c]];
        length += basis[pick[c]].norm();
      }
      double det = v.determinant();
      if (std::abs(det) > 0.1 * std::pow(shortest, Dim)) {
        if (det < 0.0) {
          v.col(0) *= -1.0;
          det = -det;
        }
        const double score = rho > 0.0 ? std::abs(std::log(det * rho)) : det;
        cands.push_back({v, score, length});
      }
      // Next combination of Dim indices out of nb.
      int c = Dim - 1;
      while (c >= 0 && pick[c] == nb - Dim + c) --c;
      if (c < 0) break;
      ++pick[c];
      for (int e = c + 1; e < Dim; ++e) pick[e] = pick[e - 1] + 1;
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (std::abs(a.score - b.score) > 1e-9) return a.score < b.score;
    return a.length < b.length;
  });
  std::vector<Mat<Dim>> kept;
  for (const auto& c : cands) {
    bool dup = false;
    for (const auto& v : kept)
      if (detail::same_lattice<Dim>(v, c.v)) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(c.v);
  }
  std::vector<Mat<Dim>> out;
  for (const auto& v : kept) out.push_back(detail::reduce_basis<Dim>(v).inverse());
  return out;
}

/// Refines (A, τ) by weighted least squares against the rounded lattice
/// labels of atoms in growing balls up to radius 2λ.
template <int Dim>
AffinePair<Dim> register_lattice(const AffinePair<Dim>& start, const Neighborhood<Dim>& nb) {
  AffinePair<Dim> aff = start;
  double radius = 2.0 * op_norm<Dim>(Mat<Dim>(aff.A.inverse()));
  const double rmax = 2.0 * nb.scale;
  for (;;) {
    radius = std::min(radius, rmax);
    Eigen::Matrix<double, Dim + 1, Dim + 1> normal = Eigen::Matrix<double, Dim + 1, Dim + 1>::Zero();
    Eigen::Matrix<double, Dim + 1, Dim> rhs = Eigen::Matrix<double, Dim + 1, Dim>::Zero();
    Eigen::Matrix<double, Dim + 1, 1> row;
    std::size_t used = 0;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const Vec<Dim>& y = nb.offsets[i];
      if (y.norm() >= radius) continue;
      const Vec<Dim> z = aff.A * y + aff.tau;
      Vec<Dim> label;
      for (int k = 0; k < Dim; ++k) label(k) = std::round(z(k));
      row.template head<Dim>() = y;
      row(Dim) = 1.0;
      normal.noalias() += nb.weights[i] * row * row.transpose();
      rhs.noalias() += nb.weights[i] * row * label.transpose();
      ++used;
    }
    if (used > static_cast<std::size_t>(2 * (Dim + 1))) {
      Eigen::LDLT<Eigen::Matrix<double, Dim + 1, Dim + 1>> ldlt(normal);
      if (ldlt.info() == Eigen::Success) {
        const Eigen::Matrix<double, Dim + 1, Dim> sol = ldlt.solve(rhs);
        AffinePair<Dim> next;
        next.A = sol.template topRows<Dim>().transpose();
        next.tau = sol.row(Dim).transpose();
        if (next.A.determinant() > 0.0 && next.A.allFinite() && next.tau.allFinite()) aff = next;
      }
    }
    if (radius >= rmax) break;
    radius *= 2.0;
  }
  return aff;
}

/// Newton continuation on h from a given start. The start's labeling is kept:
/// no canonicalisation of τ, no relabeling search.
template <int Dim>
FitResult<Dim> fit_from_start(const Model<Dim>& model, const Configuration<Dim>& chi,
                              const Vec<Dim>& x, const AffinePair<Dim>& start) {
  const auto nb = Neighborhood<Dim>::gather(chi, x, model.lambda());
  if (nb.size() == 0) throw Error("fit: no atoms in range");
  const auto outcome = detail::continuation(model, nb, flatten(start), 1e-2);
  FitResult<Dim> r;
  r.x = x;
  r.aff_hat = unflatten<Dim>(outcome.v);
  r.breakdown = pre_energy(model, r.aff_hat, nb);
  r.regularity = is_regular_pair(model, r.aff_hat, chi, nb, model.params().thresholds);
  r.iterations = outcome.iterations;
  r.converged = outcome.converged;
  r.grad_norm = outcome.grad_norm;
  return r;
}

/// Multistart minimisation of h_λ(·, χ, x). The returned ĥ is an upper bound
/// on the infimum over all 𝔄.
template <int Dim>
FitResult<Dim> fit_global(const Model<Dim>& model, const Configuration<Dim>& chi, const Vec<Dim>& x,
                          const std::vector<AffinePair<Dim>>& warm_starts = {}) {
  const auto& opt = model.params().solver;
  const auto nb = Neighborhood<Dim>::gather(chi, x, model.lambda());
  if (nb.size() == 0) throw Error("fit: no atoms in range");
  const double rho = nb.density(model.constants());

  std::vector<AffinePair<Dim>> starts = warm_starts;
  if (chi.query(x, model.lambda()).size() >= static_cast<std::size_t>(Dim + 1)) {
    auto mats = a_init_candidates(model, chi, x, opt.init_vectors);
    if (mats.size() > static_cast<std::size_t>(opt.max_candidates)) mats.resize(opt.max_candidates);
    for (const auto& a : mats) {
      AffinePair<Dim> aff{a, tau_init(a, nb)};
      starts.push_back(detail::relabel_towards_reference(model, register_lattice(aff, nb)));
    }
  }
  if (starts.empty()) throw Error("fit: no lattice candidates");

  // Coarse stage for every start.
  const Mat<Dim>& e = model.params().E;
  auto better = [&](const AffinePair<Dim>& a, double fa, const AffinePair<Dim>& b, double fb) {
    if (std::abs(fa - fb) > 1e-12) return fa < fb;
    const double da = (a.A - e).squaredNorm(), db = (b.A - e).squaredNorm();
    if (std::abs(da - db) > 1e-12) return da < db;
    if (lex_less(a.A, b.A)) return true;
    if (lex_less(b.A, a.A)) return false;
    return lex_less(wrap_unit<Dim>(a.tau), wrap_unit<Dim>(b.tau));
  };
  std::optional<AffinePair<Dim>> best;
  double best_f = std::numeric_limits<double>::infinity();
  SolverOptions coarse_opt = opt;
  coarse_opt.max_iterations = std::min(opt.max_iterations, 20);
  for (const auto& s : starts) {
    if (!(s.A.determinant() > 0.0)) continue;
    detail::SmoothedEnergy<Dim> energy{model, nb, rho, 1e-2 * rho};
    const auto out = detail::newton<Dim>(
        flatten(s), nb.scale, coarse_opt, false, [&](const AffVec<Dim>& v) { return energy(v); },
        [&](const AffVec<Dim>& v, AffVec<Dim>& g, AffMat<Dim>& h) { energy.derivs(v, g, h); });
    const AffinePair<Dim> aff = unflatten<Dim>(out.v);
    const double f = detail::exact_energy(model, aff, nb);
    if (!std::isfinite(f)) continue;
    if (!best || better(aff, f, *best, best_f)) {
      best = aff;
      best_f = f;
    }
  }
  if (!best) throw Error("fit: every lattice candidate diverged");

  // Relabel towards E: rank small unimodular B by F(BA), compare exact h on
  // the most promising few.
  {
    struct Option {
      AffinePair<Dim> aff;
      double f_el;
    };
    std::vector<Option> options;
    for (const auto& b : enumerate_unimodular<Dim>(1)) {
      const AffinePair<Dim> aff = apply(Reparam<Dim>{b, IVec<Dim>::Zero()}, *best);
      options.push_back({aff, model.elastic().value(aff.A)});
    }
    std::stable_sort(options.begin(), options.end(),
                     [](const Option& a, const Option& b) { return a.f_el < b.f_el; });
    for (std::size_t i = 0; i < std::min<std::size_t>(options.size(), 8); ++i) {
      const double f = detail::exact_energy(model, options[i].aff, nb);
      if (better(options[i].aff, f, *best, best_f)) {
        best = options[i].aff;
        best_f = f;
      }
    }
  }

  FitResult<Dim> r = fit_from_start(model, chi, x, *best);
  r.aff_hat.tau = wrap_unit<Dim>(r.aff_hat.tau);
  r.breakdown = pre_energy(model, r.aff_hat, nb);
  return r;
}

/// Damped Newton on J_λ alone from 𝔄₀; every accepted step decreases J.
template <int Dim>
BranchPoint<Dim> minimize_j_local(const Model<Dim>& model, const AffinePair<Dim>& aff0,
                                  const Configuration<Dim>& chi, const Vec<Dim>& x,
                                  double tol_grad) {
  const auto nb = Neighborhood<Dim>::gather(chi, x, model.lambda());
  SolverOptions opt = model.params().solver;
  opt.tol_grad = tol_grad;
  BranchPoint<Dim> bp;
  bp.x = x;
  bp.start_regular = is_regular_pair(model, aff0, chi, nb, model.params().thresholds).regular;
  const auto out = detail::newton<Dim>(
      flatten(aff0), nb.scale, opt, true,
      [&](const AffVec<Dim>& v) {
        const AffinePair<Dim> aff = unflatten<Dim>(v);
        if (!(aff.A.determinant() > 0.0)) return std::numeric_limits<double>::infinity();
        return j_lambda(model, aff, nb);
      },
      [&](const AffVec<Dim>& v, AffVec<Dim>& g, AffMat<Dim>& h) {
        const auto jd = j_derivatives(model, unflatten<Dim>(v), nb, true);
        g = jd.grad;
        h = jd.hess;
      });
  bp.aff_tilde = unflatten<Dim>(out.v);
  bp.j_value = out.value;
  bp.grad_norm = out.grad_norm;
  bp.iterations = out.iterations;
  bp.converged = out.converged;
  return bp;
}

template <int Dim>
BranchPoint<Dim> minimize_j_local(const Model<Dim>& model, const AffinePair<Dim>& aff0,
                                  const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return minimize_j_local(model, aff0, chi, x, model.params().solver.tol_grad);
}

/// Follows the J-minimiser branch along a path, predicting each step by
/// transporting τ with the current A.
template <int Dim>
TrackResult<Dim> track_minimizer(const Model<Dim>& model, const BranchPoint<Dim>& start,
                                 const std::vector<Vec<Dim>>& path, const Configuration<Dim>& chi) {
  const double lambda = model.lambda();
  const double delta = model.params().solver.delta_aff;
  TrackResult<Dim> res;
  res.points.push_back(start);
  Vec<Dim> prev_x = start.x;
  for (std::size_t s = 0; s < path.size(); ++s) {
    const Vec<Dim>& y = path[s];
    if ((y - prev_x).norm() > lambda / 4.0 + 1e-12)
      throw Error("track_minimizer: path steps must not exceed lambda/4");
    const BranchPoint<Dim>& last = res.points.back();
    AffinePair<Dim> pred{last.aff_tilde.A, last.aff_tilde.tau + last.aff_tilde.A * (y - prev_x)};
    BranchPoint<Dim> next;
    try {
      next = minimize_j_local(model, pred, chi, y);
    } catch (const Error& err) {
      res.complete = false;
      res.reason = "step " + std::to_string(s) + ": " + err.what();
      return res;
    }
    if (!next.start_regular) {
      res.complete = false;
      res.reason = "step " + std::to_string(s) + ": predictor is not a regular pair";
      return res;
    }
    if (lambda_norm(difference(next.aff_tilde, pred), lambda) >= delta) {
      res.complete = false;
      res.reason = "step " + std::to_string(s) + ": minimiser left the predictor basin";
      return res;
    }
    next.provenance = last.provenance;
    res.points.push_back(next);
    prev_x = y;
  }
  return res;
}

}  // namespace latfit
