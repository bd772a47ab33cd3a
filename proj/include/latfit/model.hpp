#pragma once

// The pre-energy h_λ = F + J_λ + ν_λ, its analytic (A, τ)-derivatives, the
// hard-core check and the regular/irregular classification.

#include "latfit/configuration.hpp"
#include "latfit/linalg.hpp"
#include "latfit/params.hpp"
#include "latfit/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace latfit {

/// Lattice parametrisation 𝔄 = (A, τ); the fitted lattice is A⁻¹(ℤᵈ − τ) + x.
template <int Dim>
struct AffinePair {
  Mat<Dim> A = Mat<Dim>::Identity();
  Vec<Dim> tau = Vec<Dim>::Zero();
};

/// Number of scalar unknowns in 𝔄: row-major A followed by τ.
template <int Dim>
inline constexpr int kAffSize = Dim * Dim + Dim;

template <int Dim>
using AffVec = Eigen::Matrix<double, kAffSize<Dim>, 1>;
template <int Dim>
using AffMat = Eigen::Matrix<double, kAffSize<Dim>, kAffSize<Dim>>;

template <int Dim>
AffVec<Dim> flatten(const AffinePair<Dim>& aff) {
  AffVec<Dim> v;
  for (int k = 0; k < Dim * Dim; ++k) v(k) = aff.A(k / Dim, k % Dim);
  for (int k = 0; k < Dim; ++k) v(Dim * Dim + k) = aff.tau(k);
  return v;
}

template <int Dim>
AffinePair<Dim> unflatten(const AffVec<Dim>& v) {
  AffinePair<Dim> aff;
  for (int k = 0; k < Dim * Dim; ++k) aff.A(k / Dim, k % Dim) = v(k);
  for (int k = 0; k < Dim; ++k) aff.tau(k) = v(Dim * Dim + k);
  return aff;
}

/// Diagonal of the ‖·‖_λ metric: λ on the A entries, 1 on τ.
template <int Dim>
AffVec<Dim> lambda_scaling(double lambda) {
  AffVec<Dim> d;
  d.template head<Dim * Dim>().setConstant(lambda);
  d.template tail<Dim>().setOnes();
  return d;
}

/// ‖𝔐‖_λ = (λ²‖M‖² + |μ|²)^{1/2}.
template <int Dim>
double lambda_norm(const AffinePair<Dim>& m, double lambda) {
  return std::sqrt(lambda * lambda * m.A.squaredNorm() + m.tau.squaredNorm());
}

template <int Dim>
AffinePair<Dim> difference(const AffinePair<Dim>& a, const AffinePair<Dim>& b) {
  return {a.A - b.A, a.tau - b.tau};
}

struct EnergyBreakdown {
  double f_term = 0.0;
  double j_term = 0.0;
  double nu_term = 0.0;
  double total = 0.0;
  double rho = 0.0;
};

/// Immutable bundle of parameters, derived constants and the elastic density.
template <int Dim>
class Model {
 public:
  explicit Model(const ModelParams<Dim>& params)
      : params_(params), constants_(derive_constants(params)),
        elastic_(params.E, params.c1_el, params.c2_el) {
    params_.validate();
  }

  const ModelParams<Dim>& params() const { return params_; }
  const DerivedConstants& constants() const { return constants_; }
  const ElasticDensity<Dim>& elastic() const { return elastic_; }
  double lambda() const { return params_.lambda; }

  /// Same model evaluated at another mesoscopic scale.
  Model with_lambda(double lambda) const {
    Model m = *this;
    m.params_.lambda = lambda;
    return m;
  }

 private:
  ModelParams<Dim> params_;
  DerivedConstants constants_;
  ElasticDensity<Dim> elastic_;
};

/// Atoms inside the support B_{2·scale}(x): offsets x_i − x and weights
/// φ(|x_i − x| / scale). Every per-point evaluation works on this view.
template <int Dim>
struct Neighborhood {
  Vec<Dim> center = Vec<Dim>::Zero();
  double scale = 1.0;
  std::vector<std::size_t> indices;
  std::vector<Vec<Dim>> offsets;
  std::vector<double> weights;
  double weight_sum = 0.0;

  static Neighborhood gather(const Configuration<Dim>& chi, const Vec<Dim>& x, double scale) {
    Neighborhood nb;
    nb.center = x;
    nb.scale = scale;
    for (std::size_t i : chi.query(x, 2.0 * scale)) {
      const Vec<Dim> y = chi.position(i) - x;
      const double w = Cutoff::value(y.norm() / scale);
      if (w <= 0.0) continue;
      nb.indices.push_back(i);
      nb.offsets.push_back(y);
      nb.weights.push_back(w);
      nb.weight_sum += w;
    }
    return nb;
  }

  std::size_t size() const { return offsets.size(); }

  /// 1 / (C_φ scaleᵈ).
  double normalization(const DerivedConstants& c) const {
    return 1.0 / (c.C_phi * std::pow(scale, Dim));
  }

  double density(const DerivedConstants& c) const { return weight_sum * normalization(c); }
};

/// ρ(χ, x) at the given scale.
template <int Dim>
double local_density(const Model<Dim>& model, const Configuration<Dim>& chi, const Vec<Dim>& x,
                     double scale) {
  return Neighborhood<Dim>::gather(chi, x, scale).density(model.constants());
}

template <int Dim>
double local_density(const Model<Dim>& model, const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return local_density(model, chi, x, model.lambda());
}

/// J together with its gradient and (optionally) Hessian in the flattened
/// (A, τ) coordinates.
template <int Dim>
struct JDerivatives {
  double value = 0.0;
  AffVec<Dim> grad = AffVec<Dim>::Zero();
  AffMat<Dim> hess = AffMat<Dim>::Zero();
};

namespace detail {

/// s(A) = ‖A⁻¹‖² with gradient and Hessian over row-major A.
template <int Dim>
struct InverseNorm {
  double value;
  Eigen::Matrix<double, Dim * Dim, 1> grad;
  Eigen::Matrix<double, Dim * Dim, Dim * Dim> hess;
};

template <int Dim>
InverseNorm<Dim> inverse_norm_jet(const Mat<Dim>& a, bool with_hessian) {
  const Mat<Dim> g = a.inverse();
  InverseNorm<Dim> s;
  s.value = g.squaredNorm();
  const Mat<Dim> grad = -2.0 * g.transpose() * g * g.transpose();
  for (int k = 0; k < Dim * Dim; ++k) s.grad(k) = grad(k / Dim, k % Dim);
  s.hess.setZero();
  if (!with_hessian) return s;
  // d²s[E, F] = 2⟨G F G, G E G⟩ + 2⟨G, G F G E G + G E G F G⟩.
  std::array<Mat<Dim>, Dim * Dim> geg;
  for (int k = 0; k < Dim * Dim; ++k) {
    Mat<Dim> e = Mat<Dim>::Zero();
    e(k / Dim, k % Dim) = 1.0;
    geg[k] = g * e * g;
  }
  for (int k = 0; k < Dim * Dim; ++k) {
    Mat<Dim> ek = Mat<Dim>::Zero();
    ek(k / Dim, k % Dim) = 1.0;
    for (int m = k; m < Dim * Dim; ++m) {
      Mat<Dim> em = Mat<Dim>::Zero();
      em(m / Dim, m % Dim) = 1.0;
      const double v = 2.0 * (geg[m].cwiseProduct(geg[k])).sum() +
                       2.0 * (g.cwiseProduct(geg[m] * ek * g + geg[k] * em * g)).sum();
      s.hess(k, m) = v;
      s.hess(m, k) = v;
    }
  }
  return s;
}

}  // namespace detail

template <int Dim>
JDerivatives<Dim> j_derivatives(const Model<Dim>& model, const AffinePair<Dim>& aff,
                                const Neighborhood<Dim>& nb, bool with_hessian = true) {
  constexpr int n = Dim * Dim;
  double sum = 0.0;
  AffVec<Dim> g_sum = AffVec<Dim>::Zero();
  // Per-component second moments Σ w h_k [y;1][y;1]ᵀ.
  std::array<Eigen::Matrix<double, Dim + 1, Dim + 1>, Dim> moments;
  for (auto& m : moments) m.setZero();
  Eigen::Matrix<double, Dim + 1, 1> ext;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    const Vec<Dim>& y = nb.offsets[i];
    const double w = nb.weights[i];
    const Vec<Dim> z = aff.A * y + aff.tau;
    double wz = 0.0;
    ext.template head<Dim>() = y;
    ext(Dim) = 1.0;
    for (int k = 0; k < Dim; ++k) {
      const double angle = 2.0 * kPi * z(k);
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      wz += 1.0 - c;
      const double gk = w * s / kPi;
      for (int l = 0; l < Dim; ++l) g_sum(k * Dim + l) += gk * y(l);
      g_sum(n + k) += gk;
      if (with_hessian) moments[k].noalias() += (w * 2.0 * c) * ext * ext.transpose();
    }
    sum += w * wz / (2.0 * kPi * kPi);
  }
  const double norm = nb.normalization(model.constants());
  const auto s = detail::inverse_norm_jet<Dim>(aff.A, with_hessian);
  JDerivatives<Dim> out;
  out.value = norm * s.value * sum;
  AffVec<Dim> gs = AffVec<Dim>::Zero();
  gs.template head<n>() = s.grad;
  out.grad = norm * (s.value * g_sum + sum * gs);
  if (!with_hessian) return out;
  AffMat<Dim> h_sum = AffMat<Dim>::Zero();
  for (int k = 0; k < Dim; ++k) {
    const auto& m = moments[k];
    for (int l = 0; l < Dim; ++l) {
      for (int q = 0; q < Dim; ++q) h_sum(k * Dim + l, k * Dim + q) = m(l, q);
      h_sum(k * Dim + l, n + k) = m(l, Dim);
      h_sum(n + k, k * Dim + l) = m(l, Dim);
    }
    h_sum(n + k, n + k) = m(Dim, Dim);
  }
  AffMat<Dim> hs = AffMat<Dim>::Zero();
  hs.template topLeftCorner<n, n>() = s.hess;
  out.hess = norm * (s.value * h_sum + gs * g_sum.transpose() + g_sum * gs.transpose() + sum * hs);
  return out;
}

/// J_λ(𝔄, χ, x) = ‖A⁻¹‖²/(C_φ λᵈ) Σ_i W(A(x_i − x) + τ) φ(|x_i − x|/λ).
template <int Dim>
double j_lambda(const Model<Dim>& model, const AffinePair<Dim>& aff, const Neighborhood<Dim>& nb) {
  double sum = 0.0;
  for (std::size_t i = 0; i < nb.size(); ++i)
    sum += nb.weights[i] * PeriodicPotential<Dim>::value(Vec<Dim>(aff.A * nb.offsets[i] + aff.tau));
  return nb.normalization(model.constants()) * aff.A.inverse().squaredNorm() * sum;
}

template <int Dim>
double j_lambda(const Model<Dim>& model, const AffinePair<Dim>& aff,
                const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return j_lambda(model, aff, Neighborhood<Dim>::gather(chi, x, model.lambda()));
}

template <int Dim>
AffVec<Dim> j_grad_aff(const Model<Dim>& model, const AffinePair<Dim>& aff,
                       const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return j_derivatives(model, aff, Neighborhood<Dim>::gather(chi, x, model.lambda()), false).grad;
}

template <int Dim>
AffMat<Dim> j_hess_aff(const Model<Dim>& model, const AffinePair<Dim>& aff,
                       const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return j_derivatives(model, aff, Neighborhood<Dim>::gather(chi, x, model.lambda()), true).hess;
}

/// ν_λ = ϑ |det A − ρ_λ|.
template <int Dim>
double nu_lambda(const Model<Dim>& model, const Mat<Dim>& a, double rho) {
  const double det_a = a.determinant();
  if (!(det_a > 0.0)) throw Error("nu_lambda: det A <= 0");
  return model.params().vartheta * std::abs(det_a - rho);
}

template <int Dim>
double nu_lambda(const Model<Dim>& model, const Mat<Dim>& a, const Configuration<Dim>& chi,
                 const Vec<Dim>& x) {
  return nu_lambda(model, a, local_density(model, chi, x));
}

template <int Dim>
EnergyBreakdown pre_energy(const Model<Dim>& model, const AffinePair<Dim>& aff,
                           const Neighborhood<Dim>& nb) {
  EnergyBreakdown e;
  e.rho = nb.density(model.constants());
  e.f_term = model.elastic().value(aff.A);
  e.j_term = j_lambda(model, aff, nb);
  e.nu_term = nu_lambda(model, aff.A, e.rho);
  e.total = e.f_term + e.j_term + e.nu_term;
  return e;
}

/// h_λ(𝔄, χ, x) = F(A) + J_λ + ν_λ with the parts reported separately.
template <int Dim>
EnergyBreakdown pre_energy(const Model<Dim>& model, const AffinePair<Dim>& aff,
                           const Configuration<Dim>& chi, const Vec<Dim>& x) {
  return pre_energy(model, aff, Neighborhood<Dim>::gather(chi, x, model.lambda()));
}

/// Pairs (i, j), i < j, of the given atoms closer than s0; sweep along the
/// first coordinate.
template <int Dim>
std::vector<std::pair<std::size_t, std::size_t>> hardcore_pairs(
    const Configuration<Dim>& chi, std::vector<std::size_t> subset, double s0) {
  std::sort(subset.begin(), subset.end(), [&](std::size_t a, std::size_t b) {
    const double xa = chi.position(a)(0), xb = chi.position(b)(0);
    return xa < xb || (xa == xb && a < b);
  });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = 0; p < subset.size(); ++p) {
    const Vec<Dim>& xi = chi.position(subset[p]);
    for (std::size_t q = p + 1; q < subset.size(); ++q) {
      const Vec<Dim>& xj = chi.position(subset[q]);
      if (xj(0) - xi(0) >= s0) break;
      if ((xj - xi).norm() < s0)
        out.emplace_back(std::min(subset[p], subset[q]), std::max(subset[p], subset[q]));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// All pairs closer than the hard-core radius s0; empty means V is finite.
template <int Dim>
std::vector<std::pair<std::size_t, std::size_t>> hardcore_violations(
    const Configuration<Dim>& chi, double s0) {
  std::vector<std::size_t> all(chi.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return hardcore_pairs(chi, std::move(all), s0);
}

/// Euclidean distance from the offset y to the lattice A⁻¹(ℤᵈ − τ). Exact:
/// enumerates every integer point that can beat the rounded candidate.
template <int Dim>
double distance_to_lattice(const AffinePair<Dim>& aff, const Vec<Dim>& y) {
  const Mat<Dim> inv = aff.A.inverse();
  const Vec<Dim> z = aff.A * y + aff.tau;
  Vec<Dim> base;
  for (int k = 0; k < Dim; ++k) base(k) = std::round(z(k));
  double best = (inv * (z - base)).norm();
  // |z − n| ≤ |A| · |A⁻¹(z − n)|, so better points lie within |A|·best of z.
  const int reach = static_cast<int>(std::ceil(op_norm<Dim>(aff.A) * best)) + 1;
  std::array<int, Dim> off{};
  off.fill(-reach);
  for (;;) {
    Vec<Dim> cand = base;
    for (int k = 0; k < Dim; ++k) cand(k) += off[k];
    best = std::min(best, (inv * (z - cand)).norm());
    int k = 0;
    while (k < Dim) {
      if (++off[k] <= reach) break;
      off[k] = -reach;
      ++k;
    }
    if (k == Dim) break;
  }
  return best;
}

template <int Dim>
struct RegularSplit {
  std::vector<std::size_t> regular;
  std::vector<std::size_t> irregular;
  double rho_reg = 0.0;
  double rho_irr = 0.0;
};

/// Default splitting distance β = min{Θ_W/|A|, s0/3}.
template <int Dim>
double default_beta(const Model<Dim>& model, const Mat<Dim>& a) {
  return std::min(model.constants().Theta_W / op_norm<Dim>(a), model.params().s0 / 3.0);
}

/// Partitions the atoms of B_{2λ}(x) by dist(x_i, χ_𝔄 + x) ≤ β.
template <int Dim>
RegularSplit<Dim> split_regular_atoms(const Model<Dim>& model, const AffinePair<Dim>& aff,
                                      const Neighborhood<Dim>& nb, double beta) {
  if (!(beta > 0.0)) throw Error("split_regular_atoms: beta must be positive");
  RegularSplit<Dim> out;
  double w_reg = 0.0, w_irr = 0.0;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    if (distance_to_lattice(aff, nb.offsets[i]) <= beta) {
      out.regular.push_back(nb.indices[i]);
      w_reg += nb.weights[i];
    } else {
      out.irregular.push_back(nb.indices[i]);
      w_irr += nb.weights[i];
    }
  }
  const double norm = nb.normalization(model.constants());
  out.rho_irr = w_irr * norm;
  out.rho_reg = nb.density(model.constants()) - out.rho_irr;
  return out;
}

template <int Dim>
RegularSplit<Dim> split_regular_atoms(const Model<Dim>& model, const Configuration<Dim>& chi,
                                      const AffinePair<Dim>& aff, double beta, const Vec<Dim>& x) {
  return split_regular_atoms(model, aff, Neighborhood<Dim>::gather(chi, x, model.lambda()), beta);
}

/// J_λ(𝔄) between multiples of S = (C_φλᵈ)⁻¹ Σ dist²(x_i, χ_𝔄 + x) φ, and
/// J_λ(𝔄) against J_λ(𝔅𝔄) for a relabeling 𝔅.
struct SandwichReport {
  double lower = 0.0;  // C₀^W S
  double j = 0.0;
  double upper = 0.0;  // C₁^W ‖A‖²‖A⁻¹‖² S
  double j_relabeled = 0.0;
  double relabel_bound = 0.0;  // C₁^W ‖A‖²‖A⁻¹‖² / C₀^W · J(𝔅𝔄)

  bool holds(double tol = 1e-12) const {
    const double slack = tol * std::max(1.0, upper);
    return lower <= j + slack && j <= upper + slack && j <= relabel_bound + tol * std::max(1.0, relabel_bound);
  }
};

template <int Dim>
SandwichReport reparam_sandwich(const Model<Dim>& model, const AffinePair<Dim>& aff, const AffinePair<Dim>& relabeled,
                                const Neighborhood<Dim>& nb) {
  const auto& c = model.constants();
  double s = 0.0;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    const double d = distance_to_lattice(aff, nb.offsets[i]);
    s += nb.weights[i] * d * d;
  }
  s *= nb.normalization(c);
  const double cond = aff.A.squaredNorm() * aff.A.inverse().squaredNorm();
  SandwichReport r;
  r.lower = c.C0_W * s;
  r.j = j_lambda(model, aff, nb);
  r.upper = c.C1_W * cond * s;
  r.j_relabeled = j_lambda(model, relabeled, nb);
  r.relabel_bound = c.C1_W * cond / c.C0_W * r.j_relabeled;
  return r;
}

/// Outcome of the four regular-pair conditions with their margins.
struct RegularityReport {
  bool regular = false;
  bool ainv_ok = false;
  bool density_ok = false;
  bool j_ok = false;
  bool hardcore_ok = false;
  double norm_ainv = 0.0;
  double C_A = 0.0;
  double rho = 0.0;
  double det_a = 0.0;
  double density_margin = 0.0;  // ε_ρ det A − |ρ − det A|
  double j_value = 0.0;
  double j_margin = 0.0;        // ε_J ρ − J
  std::size_t hardcore_count = 0;
};

template <int Dim>
RegularityReport is_regular_pair(const Model<Dim>& model, const AffinePair<Dim>& aff,
                                 const Configuration<Dim>& chi, const Neighborhood<Dim>& nb,
                                 const RegularityThresholds& th) {
  RegularityReport r;
  r.det_a = aff.A.determinant();
  r.C_A = th.C_A;
  r.rho = nb.density(model.constants());
  if (!(r.det_a > 0.0)) return r;
  r.norm_ainv = aff.A.inverse().norm();
  r.ainv_ok = r.norm_ainv < th.C_A;
  r.density_margin = th.eps_rho * r.det_a - std::abs(r.rho - r.det_a);
  r.density_ok = r.density_margin > 0.0;
  r.j_value = j_lambda(model, aff, nb);
  r.j_margin = th.eps_J * r.rho - r.j_value;
  r.j_ok = r.j_margin > 0.0;
  r.hardcore_count = hardcore_pairs(chi, nb.indices, model.params().s0).size();
  r.hardcore_ok = r.hardcore_count == 0;
  r.regular = r.ainv_ok && r.density_ok && r.j_ok && r.hardcore_ok;
  return r;
}

template <int Dim>
RegularityReport is_regular_pair(const Model<Dim>& model, const Vec<Dim>& x,
                                 const AffinePair<Dim>& aff, const Configuration<Dim>& chi,
                                 const RegularityThresholds& th) {
  return is_regular_pair(model, aff, chi, Neighborhood<Dim>::gather(chi, x, model.lambda()), th);
}

/// (J_λ, α_∇⁻¹ ‖A⁻¹‖² C_φ⁻¹ λ⁻ᵈ Σ|∇W|² φ); the first never falls below the
/// second.
template <int Dim>
std::pair<double, double> gradW_sum_diagnostic(const Model<Dim>& model, const AffinePair<Dim>& aff,
                                               const Neighborhood<Dim>& nb) {
  double sum = 0.0;
  for (std::size_t i = 0; i < nb.size(); ++i)
    sum += nb.weights[i] *
           PeriodicPotential<Dim>::gradient(Vec<Dim>(aff.A * nb.offsets[i] + aff.tau)).squaredNorm();
  const double rhs = nb.normalization(model.constants()) * aff.A.inverse().squaredNorm() * sum /
                     model.constants().alpha_nabla;
  return {j_lambda(model, aff, nb), rhs};
}

/// Smallest eigenvalue of ∂²_𝔄 J in the ‖·‖_λ metric against the convexity
/// bound C_con ‖A⁻¹‖² ρ.
struct ConvexityReport {
  double min_eigenvalue = 0.0;
  double bound = 0.0;
  double c_con = 0.0;
};

template <int Dim>
ConvexityReport convexity_report(const Model<Dim>& model, const AffinePair<Dim>& aff,
                                 const Neighborhood<Dim>& nb) {
  const auto jd = j_derivatives(model, aff, nb, true);
  const AffVec<Dim> inv_scale = lambda_scaling<Dim>(nb.scale).cwiseInverse();
  const AffMat<Dim> scaled = inv_scale.asDiagonal() * jd.hess * inv_scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<AffMat<Dim>> eig(scaled, Eigen::EigenvaluesOnly);
  ConvexityReport r;
  r.min_eigenvalue = eig.eigenvalues()(0);
  const double rho = nb.density(model.constants());
  r.c_con = model.constants().C_con(rho / aff.A.determinant());
  r.bound = r.c_con * aff.A.inverse().squaredNorm() * rho;
  return r;
}

}  // namespace latfit
