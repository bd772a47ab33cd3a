#pragma once

#include "latfit/linalg.hpp"
#include "latfit/model.hpp"

#include <vector>

namespace latfit {

/// Integer relabeling 𝔅 = (B, t) with det B = 1. Acts on fits by
/// 𝔅𝔄 = (BA, Bτ + t), which leaves the lattice point set unchanged.
template <int Dim>
struct Reparam {
  IMat<Dim> B = IMat<Dim>::Identity();
  IVec<Dim> t = IVec<Dim>::Zero();

  static Reparam identity() { return {}; }

  bool is_identity() const { return B == IMat<Dim>::Identity() && t.isZero(); }

  friend bool operator==(const Reparam& a, const Reparam& b) { return a.B == b.B && a.t == b.t; }
  friend bool operator!=(const Reparam& a, const Reparam& b) { return !(a == b); }
};

/// (B₁, t₁)(B₂, t₂) = (B₁B₂, B₁t₂ + t₁).
template <int Dim>
Reparam<Dim> compose(const Reparam<Dim>& b1, const Reparam<Dim>& b2) {
  return {b1.B * b2.B, b1.B * b2.t + b1.t};
}

template <int Dim>
Reparam<Dim> inverse(const Reparam<Dim>& b) {
  const IMat<Dim> inv = int_inverse<Dim>(b.B);
  return {inv, -(inv * b.t)};
}

template <int Dim>
AffinePair<Dim> apply(const Reparam<Dim>& b, const AffinePair<Dim>& aff) {
  const Mat<Dim> bd = b.B.template cast<double>();
  return {bd * aff.A, bd * aff.tau + b.t.template cast<double>()};
}

/// Left fold 𝔅₀₁𝔅₁₂⋯𝔅_{N−1,N}.
template <int Dim>
Reparam<Dim> fold(const std::vector<Reparam<Dim>>& chain) {
  Reparam<Dim> acc;
  for (const auto& b : chain) acc = compose(acc, b);
  return acc;
}

}  // namespace latfit
