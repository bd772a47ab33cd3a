#pragma once

#include "latfit/linalg.hpp"

#include <cmath>
#include <string>

namespace latfit {

/// Thresholds of a regular pair (x, 𝔄): ‖A⁻¹‖ < C_A, |ρ − det A| < ε_ρ det A,
/// J_λ < ε_J ρ, and no hard-core overlap inside B_{2λ}(x).
struct RegularityThresholds {
  double eps_rho = 0.125;
  double eps_J = 0.01;
  double C_A = 3.0;
};

/// Numerical options of the damped Newton solvers.
struct SolverOptions {
  double tol_grad = 1e-10;
  int max_iterations = 50;
  double armijo = 1e-4;
  double backtrack = 0.5;
  /// Basin radius δ_𝔄 in ‖·‖_λ units.
  double delta_aff = 0.2;
  /// Relative smoothing of |det A − ρ| used while fitting.
  double eps_nu = 1e-8;
  /// Number of shortest difference vectors considered by a_init_candidates.
  int init_vectors = 8;
  /// Cap on distinct lattice candidates passed to the Newton stage.
  int max_candidates = 4;
};

template <int Dim>
struct ModelParams {
  double lambda = 8.0;
  double s0 = 0.5;
  double vartheta = 1.0;
  Mat<Dim> E = Mat<Dim>::Identity();
  double c1_el = 1.0;
  double c2_el = 1.0;
  RegularityThresholds thresholds{};
  /// Low-energy cutoff ε̂: fits with ĥ ≤ ε̂ are expected to be regular.
  double eps_hat = 0.0025;
  /// B-enumeration range for F_C.
  int fc_b_range = Dim == 2 ? 2 : 1;
  /// Factor multiplying ‖∇⁴√φ̃‖²∞ inside C_∇2.
  double c_nabla2_factor = 4.0;
  SolverOptions solver{};

  /// ¼ min{C1 det E², C2 |E|², ϑ det E}: the largest admissible ε̂.
  double low_energy_cap() const {
    const double det_e = E.determinant();
    const double norm_e = op_norm<Dim>(E);
    return 0.25 * std::min({c1_el * det_e * det_e, c2_el * norm_e * norm_e, vartheta * det_e});
  }

  /// C_A = 3^{d−1}|E|^{d−1} / (2^{d−2} det E).
  double default_C_A() const {
    const double norm_e = op_norm<Dim>(E);
    return std::pow(3.0 * norm_e, Dim - 1) / (std::pow(2.0, Dim - 2) * E.determinant());
  }

  /// Thresholds under which every point with ĥ ≤ ε̂ is regular.
  RegularityThresholds low_energy_thresholds() const {
    const double det_e = E.determinant();
    return {2.0 * eps_hat / (vartheta * det_e), 4.0 * eps_hat / det_e, default_C_A()};
  }

  /// Defaults tied to E and ε̂: ε_J = 4ε̂/det E and C_A from default_C_A().
  static ModelParams with_defaults(double lambda, double s0 = 0.5) {
    ModelParams p;
    p.lambda = lambda;
    p.s0 = s0;
    p.refresh_thresholds();
    return p;
  }

  void refresh_thresholds() {
    thresholds.eps_J = 4.0 * eps_hat / E.determinant();
    thresholds.C_A = default_C_A();
  }

  void validate() const {
    if (!(lambda > 0.0 && s0 > 0.0 && vartheta > 0.0 && c1_el > 0.0 && c2_el > 0.0))
      throw Error("model parameters must be positive");
    if (lambda < 10.0 * s0) throw Error("lambda must be at least 10 * s0");
    if (!(E.determinant() > 0.0)) throw Error("reference matrix E must have det E > 0");
    if (!(thresholds.eps_rho > 0.0 && thresholds.eps_J >= 0.0 && thresholds.C_A > 0.0))
      throw Error("regularity thresholds must be positive");
    if (!(eps_hat > 0.0)) throw Error("eps_hat must be positive");
  }
};

}  // namespace latfit
