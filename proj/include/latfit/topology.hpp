#pragma once

// Integer reparametrisations between neighbouring fits, chain products,
// homotopy checks and Burgers loops.

#include "latfit/fitting.hpp"
#include "latfit/reparam.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace latfit {

/// A fitted pair (y, 𝔄) together with J_λ(𝔄, χ, y) and its regularity.
template <int Dim>
struct ChainPoint {
  Vec<Dim> y = Vec<Dim>::Zero();
  AffinePair<Dim> aff;
  double j = 0.0;
  bool regular = true;

  static ChainPoint from_fit(const FitResult<Dim>& fit) {
    return {fit.x, fit.aff_hat, fit.breakdown.j_term, fit.regularity.regular};
  }
};

template <int Dim>
struct ChainStep {
  Vec<Dim> y0 = Vec<Dim>::Zero();
  Vec<Dim> y1 = Vec<Dim>::Zero();
  AffinePair<Dim> aff0;
  AffinePair<Dim> aff1;
  Reparam<Dim> reparam;
  double rounding_gap = 0.0;
  double delta_A = 0.0;    // ‖id − A₀⁻¹BA₁‖
  double delta_tau = 0.0;  // |Bτ₁ + t − τ₀ − ((BA₁ + A₀)/2)(y₁ − y₀)|
  double bound_A = 0.0;
  double bound_tau = 0.0;

  bool within_bounds() const { return delta_A < bound_A && delta_tau < bound_tau; }
  bool exact() const { return delta_A == 0.0 && delta_tau == 0.0; }
};

enum class LoopClass { Trivial, TranslationDefect, RotationalDefect };

inline const char* to_string(LoopClass c) {
  switch (c) {
    case LoopClass::Trivial: return "trivial";
    case LoopClass::TranslationDefect: return "translation-defect";
    case LoopClass::RotationalDefect: return "rotational-defect";
  }
  return "unknown";
}

template <int Dim>
struct LoopResult {
  std::vector<Vec<Dim>> samples;
  std::vector<ChainStep<Dim>> steps;
  Reparam<Dim> product;
  LoopClass classification = LoopClass::Trivial;
  double max_residual_A = 0.0;
  double max_residual_tau = 0.0;
};

template <int Dim>
LoopClass classify(const Reparam<Dim>& product) {
  if (product.B != IMat<Dim>::Identity()) return LoopClass::RotationalDefect;
  if (!product.t.isZero()) return LoopClass::TranslationDefect;
  return LoopClass::Trivial;
}

namespace detail {

/// (2λ/(2λ − |Δy|))^{d/2}.
template <int Dim>
double support_factor(double lambda, double dist) {
  return std::pow(2.0 * lambda / (2.0 * lambda - dist), 0.5 * Dim);
}

template <int Dim>
Vec<Dim> tau_residual(const Reparam<Dim>& r, const AffinePair<Dim>& a0, const Vec<Dim>& y0,
                      const AffinePair<Dim>& a1, const Vec<Dim>& y1) {
  const Mat<Dim> b = r.B.template cast<double>();
  return b * a1.tau + r.t.template cast<double>() - a0.tau - 0.5 * (b * a1.A + a0.A) * (y1 - y0);
}

}  // namespace detail

/// The reparametrisation 𝔅 with 𝔅𝔄₂ ≈ 𝔄₁ after transport from y₂ to y₁,
/// residuals and the step bounds.
template <int Dim>
ChainStep<Dim> find_reparam(const Model<Dim>& model, const ChainPoint<Dim>& p1,
                            const ChainPoint<Dim>& p2) {
  const double lambda = model.lambda();
  const double dist = (p2.y - p1.y).norm();
  if (dist > 1.5 * lambda + 1e-12) throw Error("find_reparam: points farther apart than 3*lambda/2");
  if (!(p1.aff.A.determinant() > 0.0 && p2.aff.A.determinant() > 0.0))
    throw Error("find_reparam: fits must have det A > 0");
  ChainStep<Dim> s;
  s.y0 = p1.y;
  s.y1 = p2.y;
  s.aff0 = p1.aff;
  s.aff1 = p2.aff;
  const Mat<Dim> b_real = p1.aff.A * p2.aff.A.inverse();
  s.reparam.B = round_to_int<Dim>(b_real);
  const Mat<Dim> b = s.reparam.B.template cast<double>();
  const Vec<Dim> t_real = p1.aff.tau + 0.5 * (b * p2.aff.A + p1.aff.A) * (p2.y - p1.y) - b * p2.aff.tau;
  s.reparam.t = round_to_int<Dim>(t_real);
  s.rounding_gap = std::max(rounding_gap(b_real), rounding_gap(t_real));
  if (int_det<Dim>(s.reparam.B) != 1) throw Error("find_reparam: orientation/volume mismatch");
  if (s.rounding_gap > 0.25) throw Error("find_reparam: ambiguous reparametrisation");

  s.delta_A = (Mat<Dim>::Identity() - p1.aff.A.inverse() * b * p2.aff.A).norm();
  s.delta_tau = detail::tau_residual(s.reparam, p1.aff, p1.y, p2.aff, p2.y).norm();
  const double factor = detail::support_factor<Dim>(lambda, dist);
  const double sqrt_j = std::sqrt(std::max(p1.j, p2.j));
  const double root_det = std::sqrt(p2.aff.A.determinant());
  const auto& c = model.constants();
  s.bound_A = c.cA_J / root_det * factor * sqrt_j / lambda;
  s.bound_tau = c.ctau_J * op_norm<Dim>(p1.aff.A) / root_det * factor * sqrt_j;
  return s;
}

template <int Dim>
std::vector<ChainStep<Dim>> chain_steps(const Model<Dim>& model, const std::vector<ChainPoint<Dim>>& chain) {
  std::vector<ChainStep<Dim>> steps;
  for (std::size_t j = 1; j < chain.size(); ++j) steps.push_back(find_reparam(model, chain[j - 1], chain[j]));
  return steps;
}

template <int Dim>
Reparam<Dim> chain_product(const std::vector<ChainStep<Dim>>& steps) {
  Reparam<Dim> acc;
  for (const auto& s : steps) acc = compose(acc, s.reparam);
  return acc;
}

/// B₁₃ = B₁₂B₂₃ and t₁₃ = B₁₂t₂₃ + t₁₂, exactly.
template <int Dim>
bool triangle_check(const Model<Dim>& model, const ChainPoint<Dim>& p1, const ChainPoint<Dim>& p2,
                    const ChainPoint<Dim>& p3) {
  const auto r12 = find_reparam(model, p1, p2).reparam;
  const auto r23 = find_reparam(model, p2, p3).reparam;
  const auto r13 = find_reparam(model, p1, p3).reparam;
  return r13 == compose(r12, r23);
}

/// Inserting `point` before chain[index] leaves the chain product unchanged.
/// Irregular insertions are refused.
template <int Dim>
bool chain_refinement_invariance(const Model<Dim>& model, const std::vector<ChainPoint<Dim>>& chain,
                                 std::size_t index, const ChainPoint<Dim>& point) {
  if (index == 0 || index >= chain.size()) throw Error("chain refinement: index must be interior");
  if (!point.regular) throw Error("chain refinement: inserted fit is not regular");
  std::vector<ChainPoint<Dim>> refined = chain;
  refined.insert(refined.begin() + static_cast<std::ptrdiff_t>(index), point);
  return chain_product(chain_steps(model, chain)) == chain_product(chain_steps(model, refined));
}

/// Inserts linearly interpolated points so that consecutive samples are at
/// most max_step apart.
template <int Dim>
std::vector<Vec<Dim>> densify_loop(const std::vector<Vec<Dim>>& points, double max_step) {
  if (!(max_step > 0.0)) throw Error("densify_loop: step must be positive");
  std::vector<Vec<Dim>> out;
  if (points.empty()) return out;
  out.push_back(points.front());
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Vec<Dim> a = points[i - 1], b = points[i];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / max_step - 1e-12)));
    for (int k = 1; k <= pieces; ++k) out.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
  }
  return out;
}

/// Twice the signed area enclosed by a closed planar polyline; positive when
/// counterclockwise.
inline double signed_area2(const std::vector<Vec<2>>& loop) {
  double a = 0.0;
  for (std::size_t i = 1; i < loop.size(); ++i)
    a += loop[i - 1](0) * loop[i](1) - loop[i](0) * loop[i - 1](1);
  return a;
}

template <int Dim>
LoopResult<Dim> loop_from_points(const Model<Dim>& model, const std::vector<ChainPoint<Dim>>& points) {
  LoopResult<Dim> res;
  for (const auto& p : points) res.samples.push_back(p.y);
  res.steps = chain_steps(model, points);
  res.product = chain_product(res.steps);
  res.classification = classify(res.product);
  for (const auto& s : res.steps) {
    res.max_residual_A = std::max(res.max_residual_A, s.delta_A);
    res.max_residual_tau = std::max(res.max_residual_tau, s.delta_tau);
  }
  return res;
}

/// Fits every sample of a closed loop and folds the step reparametrisations.
template <int Dim>
LoopResult<Dim> burgers_loop(const Model<Dim>& model, const Configuration<Dim>& chi,
                             const std::vector<Vec<Dim>>& loop) {
  if (loop.size() < 2) throw Error("burgers_loop: loop needs at least two points");
  if ((loop.front() - loop.back()).norm() > 1e-9) throw Error("burgers_loop: loop is not closed");
  std::vector<ChainPoint<Dim>> points;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const auto fit = fit_global(model, chi, loop[i]);
    if (!fit.regularity.regular)
      throw Error("burgers_loop: sample " + std::to_string(i) + " is not a regular fit");
    points.push_back(ChainPoint<Dim>::from_fit(fit));
  }
  return loop_from_points(model, points);
}

struct DriftReport {
  double lhs_A = 0.0;
  double rhs_A = 0.0;
  double lhs_tau = 0.0;
  double rhs_tau = 0.0;

  bool holds() const { return lhs_A <= rhs_A && lhs_tau <= rhs_tau; }
};

/// Accumulated drift of 𝔄 along a chain of regular fits against its bound.
template <int Dim>
DriftReport chain_drift_bound(const Model<Dim>& model, const std::vector<ChainPoint<Dim>>& chain) {
  if (chain.size() < 2) return {};
  const double lambda = model.lambda();
  const auto& c = model.constants();
  const auto steps = chain_steps(model, chain);
  const Reparam<Dim> total = chain_product(steps);
  double sum_b = 0.0, path = 0.0;
  for (std::size_t j = 1; j < chain.size(); ++j) {
    const double dist = (chain[j].y - chain[j - 1].y).norm();
    sum_b += detail::support_factor<Dim>(lambda, dist) / std::sqrt(chain[j].aff.A.determinant()) *
             std::sqrt(std::max(chain[j].j, chain[j - 1].j));
    path += dist;
  }
  const auto& first = chain.front();
  const auto& last = chain.back();
  DriftReport r;
  const Mat<Dim> b = total.B.template cast<double>();
  r.lhs_A = op_norm<Dim>(Mat<Dim>(Mat<Dim>::Identity() - first.aff.A.inverse() * b * last.aff.A));
  const double ka = c.cA_J / lambda * sum_b;
  r.rhs_A = ka * std::exp(ka);
  r.lhs_tau = detail::tau_residual(total, first.aff, first.y, last.aff, last.y).norm();
  r.rhs_tau = (c.C_A * c.C_absA * c.ctau_J + c.cA_J / lambda * path) * op_norm<Dim>(first.aff.A) *
              sum_b * std::exp(c.C_A / lambda * sum_b);
  return r;
}

}  // namespace latfit
