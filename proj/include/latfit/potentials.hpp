#pragma once

// Concrete periodic potential W, cut-off φ and elastic density F, plus every
// constant derived from them.

#include "latfit/linalg.hpp"
#include "latfit/params.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <limits>

namespace latfit {

/// W(z) = Σ_k (1 − cos 2πz_k) / (2π²). Separable, periodic under ℤᵈ, even,
/// and equal to |z|² to second order at the lattice points.
template <int Dim>
struct PeriodicPotential {
  static double value(const Vec<Dim>& z) {
    double w = 0.0;
    for (int k = 0; k < Dim; ++k) w += 1.0 - std::cos(2.0 * kPi * z(k));
    return w / (2.0 * kPi * kPi);
  }

  static Vec<Dim> gradient(const Vec<Dim>& z) {
    Vec<Dim> g;
    for (int k = 0; k < Dim; ++k) g(k) = std::sin(2.0 * kPi * z(k)) / kPi;
    return g;
  }

  /// The Hessian is diagonal; only the diagonal is returned.
  static Vec<Dim> hessian_diag(const Vec<Dim>& z) {
    Vec<Dim> h;
    for (int k = 0; k < Dim; ++k) h(k) = 2.0 * std::cos(2.0 * kPi * z(k));
    return h;
  }

  static Mat<Dim> hessian(const Vec<Dim>& z) { return hessian_diag(z).asDiagonal(); }

  // Closed-form constants of this W.
  static constexpr double C0 = 4.0 / (kPi * kPi);
  static constexpr double C1 = 1.0;
  static constexpr double Theta = 1.0 / 6.0;
  static constexpr double c_theta0 = 1.0;
  static constexpr double c_theta1 = 2.0;
  static double grad_inf() { return std::sqrt(static_cast<double>(Dim)) / kPi; }
  static constexpr double hess_inf = 2.0;
};

/// Radial cut-off: φ = 1 on [0,1], 0 on [2,∞), and the C^∞ logistic
/// transition 1/(1 + exp(1/(2−r) − 1/(r−1))) in between.
struct Cutoff {
  /// Values of ψ = φ^p and its first two radial derivatives.
  struct Jet {
    double value;
    double d1;
    double d2;
  };

  static double value(double r) {
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    return logistic(-transition(r - 1.0));
  }

  static double derivative(double r) { return power_jet(r, 1.0).d1; }
  static double second_derivative(double r) { return power_jet(r, 1.0).d2; }

  /// φ^p with derivatives, evaluated in the log domain so that roots of φ
  /// stay finite up to the support edge.
  static Jet power_jet(double r, double p) {
    if (r <= 1.0) return {1.0, 0.0, 0.0};
    if (r >= 2.0) return {0.0, 0.0, 0.0};
    const double u = r - 1.0;
    const double q = transition(u);
    const double dq = 1.0 / ((1.0 - u) * (1.0 - u)) + 1.0 / (u * u);
    const double ddq = 2.0 / std::pow(1.0 - u, 3) - 2.0 / (u * u * u);
    const double phi = logistic(-q);
    const double one_minus = logistic(q);
    const double dphi = -phi * one_minus * dq;
    const double log_psi = -p * softplus(q);
    const double psi = log_psi < -700.0 ? 0.0 : std::exp(log_psi);
    const double dl = -p * one_minus * dq;
    const double ddl = p * dphi * dq - p * one_minus * ddq;
    if (psi == 0.0) return {0.0, 0.0, 0.0};
    return {psi, psi * dl, psi * (dl * dl + ddl)};
  }

 private:
  static double transition(double u) { return 1.0 / (1.0 - u) - 1.0 / u; }
  static double logistic(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
  }
  static double softplus(double q) {
    return q > 0.0 ? q + std::log1p(std::exp(-q)) : std::log1p(std::exp(q));
  }
};

/// F(A) = C1 (det E − det A)² + C2 dist²(A, E·SO_d).
template <int Dim>
class ElasticDensity {
 public:
  ElasticDensity(const Mat<Dim>& e, double c1, double c2) : e_(e), c1_(c1), c2_(c2) {}

  double value(const Mat<Dim>& a) const {
    const double det_a = a.determinant();
    if (!(det_a > 0.0)) throw Error("elastic density: det A <= 0 (orientation-reversing fit)");
    const double vol = e_.determinant() - det_a;
    return c1_ * vol * vol + c2_ * dist2_rotations(a);
  }

  /// dist²(A, E·SO_d) = ‖A‖² + ‖E‖² − 2 max_R tr(Rᵀ EᵀA).
  double dist2_rotations(const Mat<Dim>& a) const {
    const double d2 = a.squaredNorm() + e_.squaredNorm() -
                      2.0 * max_rotation_trace<Dim>(Mat<Dim>(e_.transpose() * a));
    return std::max(d2, 0.0);
  }

  Mat<Dim> gradient(const Mat<Dim>& a) const {
    const double det_a = a.determinant();
    if (!(det_a > 0.0)) throw Error("elastic density: det A <= 0 (orientation-reversing fit)");
    const Mat<Dim> cof = det_a * a.inverse().transpose();
    const Mat<Dim> rot = nearest_rotation<Dim>(Mat<Dim>(e_.transpose() * a));
    return -2.0 * c1_ * (e_.determinant() - det_a) * cof + 2.0 * c2_ * (a - e_ * rot);
  }

  /// Hessian over row-major entries of A, by central differences of the
  /// analytic gradient.
  Eigen::Matrix<double, Dim * Dim, Dim * Dim> hessian(const Mat<Dim>& a) const {
    Eigen::Matrix<double, Dim * Dim, Dim * Dim> h;
    const double step = 1e-6 * std::max(1.0, a.norm());
    for (int k = 0; k < Dim * Dim; ++k) {
      Mat<Dim> ap = a, am = a;
      ap(k / Dim, k % Dim) += step;
      am(k / Dim, k % Dim) -= step;
      const Mat<Dim> diff = (gradient(ap) - gradient(am)) / (2.0 * step);
      for (int m = 0; m < Dim * Dim; ++m) h(m, k) = diff(m / Dim, m % Dim);
    }
    return 0.5 * (h + h.transpose());
  }

  const Mat<Dim>& reference() const { return e_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }

 private:
  Mat<Dim> e_;
  double c1_;
  double c2_;
};

/// Constants of the model that depend only on d, W, φ and the parameters.
struct DerivedConstants {
  int d = 2;
  double C_phi = 0.0;   // ∫ φ(|x|) dx
  double C_phi2 = 0.0;  // ∫ y_k² φ(|y|) dy
  double C0_W = 0.0, C1_W = 0.0, Theta_W = 0.0;
  double c_theta0 = 0.0, c_theta1 = 0.0;
  double norm_gradW_inf = 0.0;
  double norm_hessW_inf = 0.0;
  double rho_max = 0.0;
  double cA_J = 0.0;
  double ctau_J = 0.0;
  double alpha_nabla = 0.0;
  double C_A = 0.0;
  double C_rep = 0.0;
  double C_absA = 0.0;
  double w_d = 0.0;
  double w_dm1 = 0.0;
  // Sup norms of the radial roots of φ̃.
  double grad_phi_inf = 0.0;        // ‖∇φ̃‖∞
  double grad_sqrt_phi_inf = 0.0;   // ‖∇√φ̃‖∞
  double hess_sqrt_phi_inf = 0.0;   // ‖∇²√φ̃‖∞
  double grad_qrt_phi_inf = 0.0;    // ‖∇⁴√φ̃‖∞
  double c_nabla2_factor = 4.0;

  /// C_con at a point with density ratio ρ_λ / det A.
  double C_con(double rho_over_det) const {
    const double second = c_theta0 * C_phi * C_phi /
                          (4.0 * (9.0 + d) * w_dm1 * w_dm1 * std::pow(4.0, d)) * rho_over_det *
                          rho_over_det;
    return c_theta0 * std::min(1.0 / 12.0, second);
  }

  /// C_∇2(X) for X = ρ_{2λ}/ρ_λ.
  double C_nabla2(double x, double c_con) const {
    const double sa = std::sqrt(alpha_nabla);
    const double g2 = grad_sqrt_phi_inf * grad_sqrt_phi_inf;
    const double q2 = grad_qrt_phi_inf * grad_qrt_phi_inf;
    const double inv_sqrt = sa / c_con * (g2 + hess_sqrt_phi_inf + c_nabla2_factor * q2) * d *
                                std::sqrt(std::pow(2.0, d) * x) +
                            sa / (c_con * c_con) * std::sqrt(std::pow(2.0, d) * g2) *
                                (16.0 * std::pow(2.0, 0.5 * d) * x + std::sqrt(8.0 * d * x));
    return 1.0 / (inv_sqrt * inv_sqrt);
  }

  /// C̃_∇(X).
  double C_tilde_nabla(double x, double c_con) const {
    const double inv = C_rep * (1.0 / C_nabla2(x, c_con) +
                                alpha_nabla * std::pow(2.0, d) * grad_sqrt_phi_inf *
                                    grad_sqrt_phi_inf / (c_con * c_con * x));
    return 1.0 / inv;
  }

  /// Multiplier of J in the first gradient bound of the local minimizers:
  /// λ²‖∇Ã‖² + ‖∇τ̃ − Ã‖² ≤ J · gradient_bound_factor(...).
  double gradient_bound_factor(double c_con, double norm_ainv, double rho, double rho2,
                               double lambda) const {
    return alpha_nabla * std::pow(2.0, d) * grad_sqrt_phi_inf * grad_sqrt_phi_inf * rho2 /
           (c_con * c_con * norm_ainv * norm_ainv * rho * rho * lambda * lambda);
  }
};

namespace detail {

inline double radial_integral(double power) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [power](double r) { return Cutoff::value(r) * std::pow(r, power); };
  double total = 0.0;
  const std::array<double, 4> knots{0.0, 1.0, 1.5, 2.0};
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    total += gauss_kronrod<double, 61>::integrate(f, knots[i], knots[i + 1], 15, 1e-13);
  return total;
}

struct RootNorms {
  double grad_phi = 0.0, grad_sqrt = 0.0, hess_sqrt = 0.0, grad_qrt = 0.0;
};

inline RootNorms root_sup_norms() {
  RootNorms n;
  constexpr int samples = 200000;
  for (int i = 1; i < samples; ++i) {
    const double r = 1.0 + static_cast<double>(i) / samples;
    const auto j1 = Cutoff::power_jet(r, 1.0);
    const auto j2 = Cutoff::power_jet(r, 0.5);
    const auto j4 = Cutoff::power_jet(r, 0.25);
    n.grad_phi = std::max(n.grad_phi, std::abs(j1.d1));
    n.grad_sqrt = std::max(n.grad_sqrt, std::abs(j2.d1));
    // Radial Hessian ψ'' r̂r̂ᵀ + (ψ'/r)(I − r̂r̂ᵀ) has operator norm max(|ψ''|, |ψ'|/r).
    n.hess_sqrt = std::max({n.hess_sqrt, std::abs(j2.d2), std::abs(j2.d1) / r});
    n.grad_qrt = std::max(n.grad_qrt, std::abs(j4.d1));
  }
  return n;
}

}  // namespace detail

/// Evaluates every derived constant. Deterministic; quadrature reaches well
/// below 1e-8 relative error.
template <int Dim>
DerivedConstants derive_constants(const ModelParams<Dim>& params) {
  using W = PeriodicPotential<Dim>;
  DerivedConstants c;
  c.d = Dim;
  c.C_phi = unit_sphere_area(Dim) * detail::radial_integral(Dim - 1);
  c.C_phi2 = unit_sphere_area(Dim) / Dim * detail::radial_integral(Dim + 1);
  c.C0_W = W::C0;
  c.C1_W = W::C1;
  c.Theta_W = W::Theta;
  c.c_theta0 = W::c_theta0;
  c.c_theta1 = W::c_theta1;
  c.norm_gradW_inf = W::grad_inf();
  c.norm_hessW_inf = W::hess_inf;
  c.w_d = unit_ball_volume(Dim);
  c.w_dm1 = unit_ball_volume(Dim - 1);
  c.rho_max = std::pow(2.0, Dim) / (c.w_d * std::pow(params.s0, Dim));
  c.cA_J = 1.5 * std::sqrt(8.0 * Dim * c.C_phi / (c.C_phi2 * c.C0_W));
  c.ctau_J = std::sqrt(10.0 / c.C0_W);
  c.alpha_nabla = 64.0 * std::max(c.norm_gradW_inf * c.norm_gradW_inf /
                                      (c.C0_W * c.Theta_W * c.Theta_W),
                                  c.c_theta1 * c.c_theta1 / c.c_theta0);
  c.C_A = params.thresholds.C_A;
  const double det_e = params.E.determinant();
  c.C_rep = 9.0 / c.C0_W * std::pow(4.0, Dim - 1) * std::pow(c.C_A, 2 * Dim) * det_e * det_e;
  c.C_absA = 8.0 * std::pow(c.C_A, Dim) / 7.0 * c.rho_max;
  const auto roots = detail::root_sup_norms();
  c.grad_phi_inf = roots.grad_phi;
  c.grad_sqrt_phi_inf = roots.grad_sqrt;
  c.hess_sqrt_phi_inf = roots.hess_sqrt;
  c.grad_qrt_phi_inf = roots.grad_qrt;
  c.c_nabla2_factor = params.c_nabla2_factor;
  return c;
}

}  // namespace latfit
