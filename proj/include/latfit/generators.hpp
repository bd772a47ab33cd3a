#pragma once

// Synthetic atom configurations with their analytic ground truth.

#include "latfit/configuration.hpp"
#include "latfit/linalg.hpp"
#include "latfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace latfit {

enum class GeneratorKind { Perfect, Noise, Vacancies, EdgeDislocation, Shear, Bend, Wave, GrainBoundary };

inline GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "perfect") return GeneratorKind::Perfect;
  if (s == "noise") return GeneratorKind::Noise;
  if (s == "vacancies") return GeneratorKind::Vacancies;
  if (s == "edge_dislocation") return GeneratorKind::EdgeDislocation;
  if (s == "shear") return GeneratorKind::Shear;
  if (s == "bend") return GeneratorKind::Bend;
  if (s == "wave") return GeneratorKind::Wave;
  if (s == "grain_boundary") return GeneratorKind::GrainBoundary;
  throw Error("unknown generator kind '" + s + "'");
}

inline const char* to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Perfect: return "perfect";
    case GeneratorKind::Noise: return "noise";
    case GeneratorKind::Vacancies: return "vacancies";
    case GeneratorKind::EdgeDislocation: return "edge_dislocation";
    case GeneratorKind::Shear: return "shear";
    case GeneratorKind::Bend: return "bend";
    case GeneratorKind::Wave: return "wave";
    case GeneratorKind::GrainBoundary: return "grain_boundary";
  }
  return "unknown";
}

/// Dislocation core: position and Burgers vector (in length units).
template <int Dim>
struct Core {
  Vec<Dim> position = Vec<Dim>::Zero();
  Vec<Dim> burgers = Vec<Dim>::Unit(0);
};

template <int Dim>
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::Perfect;
  /// Undeformed lattice A⁻¹(ℤᵈ − τ).
  Mat<Dim> A = Mat<Dim>::Identity();
  Vec<Dim> tau = Vec<Dim>::Zero();
  Box<Dim> box{Vec<Dim>::Zero(), Vec<Dim>::Constant(40.0)};
  /// Width of the boundary band around Ω (at most 4λ).
  double band = 32.0;
  double sigma = 0.0;             // Gaussian noise, in units of the cell size
  double vacancy_fraction = 0.0;
  std::vector<Core<Dim>> cores;
  double poisson = 0.3;
  double gamma = 0.0;             // simple shear x += γ y
  double kappa = 0.0;             // bending curvature
  double amplitude = 0.0;         // wave: u_y = a sin(2π x / wavelength)
  double wavelength = 1.0;
  double angle = 0.0;             // grain boundary misorientation (radians)
  double s0 = 0.5;
  std::uint64_t seed = 1;
};

/// Analytic description of the generated field.
template <int Dim>
struct GroundTruth {
  GeneratorSpec<Dim> spec;
  Vec<Dim> net_burgers = Vec<Dim>::Zero();

  /// Displacement u(X) of the reference point X (noise excluded).
  Vec<Dim> displacement(const Vec<Dim>& X) const {
    Vec<Dim> u = Vec<Dim>::Zero();
    const auto& s = spec;
    switch (s.kind) {
      case GeneratorKind::Shear:
        u(0) = s.gamma * X(1);
        break;
      case GeneratorKind::EdgeDislocation:
        if constexpr (Dim == 2) {
          const double nu = s.poisson;
          for (const auto& c : s.cores) {
            // Burgers vector along e₁ in the core's frame; rotated fields are
            // not needed by the generator suite.
            const double b = c.burgers(0);
            const double x = X(0) - c.position(0), y = X(1) - c.position(1);
            const double r2 = x * x + y * y;
            const double theta = std::atan2(y, x);
            u(0) += b / (2.0 * kPi) * (theta + x * y / (2.0 * (1.0 - nu) * r2));
            u(1) -= b / (2.0 * kPi) *
                    ((1.0 - 2.0 * nu) / (4.0 * (1.0 - nu)) * std::log(r2) +
                     (x * x - y * y) / (4.0 * (1.0 - nu) * r2));
          }
        }
        break;
      case GeneratorKind::Bend:
        if constexpr (Dim == 2) {
          const Vec<Dim> c = 0.5 * (s.box.lo + s.box.hi);
          const double x = X(0) - c(0), y = X(1) - c(1);
          const double radius = 1.0 / s.kappa;
          u(0) = (radius + y) * std::sin(s.kappa * x) - x;
          u(1) = (radius + y) * std::cos(s.kappa * x) - radius - y;
        }
        break;
      case GeneratorKind::Wave:
        u(Dim - 1) = s.amplitude * std::sin(2.0 * kPi * X(0) / s.wavelength);
        break;
      default:
        break;
    }
    return u;
  }

  /// Reference point X with X + u(X) = x (Newton on the smooth fields).
  Vec<Dim> reference_of(const Vec<Dim>& x) const {
    Vec<Dim> X = x;
    for (int it = 0; it < 50; ++it) {
      const Vec<Dim> r = X + displacement(X) - x;
      if (r.norm() < 1e-13) break;
      X -= deformation_gradient(X).inverse() * r;
    }
    return X;
  }

  /// I + ∇u at the reference point X (central differences).
  Mat<Dim> deformation_gradient(const Vec<Dim>& X) const {
    Mat<Dim> f = Mat<Dim>::Identity();
    const double h = 1e-5;
    for (int k = 0; k < Dim; ++k) {
      Vec<Dim> e = Vec<Dim>::Zero();
      e(k) = h;
      f.col(k) += (displacement(X + e) - displacement(X - e)) / (2.0 * h);
    }
    return f;
  }

  /// Local lattice matrix at the spatial point x. Grain boundaries report the
  /// grain containing x.
  Mat<Dim> A_at(const Vec<Dim>& x) const {
    if (spec.kind == GeneratorKind::GrainBoundary) return grain_A(x);
    return spec.A * deformation_gradient(reference_of(x)).inverse();
  }

  /// Lagrangian label field τ(x) = A X(x) + τ₀ (not reduced mod ℤᵈ).
  Vec<Dim> tau_at(const Vec<Dim>& x) const {
    if (spec.kind == GeneratorKind::GrainBoundary) return grain_A(x) * (x - grain_origin()) + spec.tau;
    return spec.A * reference_of(x) + spec.tau;
  }

  Vec<Dim> grain_origin() const { return 0.5 * (spec.box.lo + spec.box.hi); }

  Mat<Dim> grain_A(const Vec<Dim>& x) const {
    const double half = (x(Dim - 1) >= grain_origin()(Dim - 1) ? 0.5 : -0.5) * spec.angle;
    Mat<Dim> rot = Mat<Dim>::Identity();
    rot(0, 0) = std::cos(half);
    rot(0, 1) = -std::sin(half);
    rot(1, 0) = std::sin(half);
    rot(1, 1) = std::cos(half);
    // Lattice rotated by R has matrix A Rᵀ.
    return spec.A * rot.transpose();
  }
};

template <int Dim>
struct Generated {
  Configuration<Dim> config;
  GroundTruth<Dim> truth;
};

namespace detail {

/// Reference lattice points A⁻¹(n − τ) inside the axis box [lo, hi].
template <int Dim>
std::vector<Vec<Dim>> lattice_points(const Mat<Dim>& a, const Vec<Dim>& tau, const Vec<Dim>& lo,
                                     const Vec<Dim>& hi) {
  const Mat<Dim> inv = a.inverse();
  // Integer label range: image of the box corners under X ↦ AX + τ.
  Vec<Dim> nlo = Vec<Dim>::Constant(1e300), nhi = Vec<Dim>::Constant(-1e300);
  for (int corner = 0; corner < (1 << Dim); ++corner) {
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) p(k) = (corner >> k) & 1 ? hi(k) : lo(k);
    const Vec<Dim> n = a * p + tau;
    nlo = nlo.cwiseMin(n);
    nhi = nhi.cwiseMax(n);
  }
  std::array<std::int64_t, Dim> lo_i{}, hi_i{}, cur{};
  for (int k = 0; k < Dim; ++k) {
    lo_i[k] = static_cast<std::int64_t>(std::floor(nlo(k))) - 1;
    hi_i[k] = static_cast<std::int64_t>(std::ceil(nhi(k))) + 1;
  }
  cur = lo_i;
  std::vector<Vec<Dim>> out;
  for (;;) {
    Vec<Dim> n;
    for (int k = 0; k < Dim; ++k) n(k) = static_cast<double>(cur[k]);
    const Vec<Dim> X = inv * (n - tau);
    if ((X.array() >= lo.array()).all() && (X.array() < hi.array()).all()) out.push_back(X);
    int k = 0;
    while (k < Dim) {
      if (++cur[k] <= hi_i[k]) break;
      cur[k] = lo_i[k];
      ++k;
    }
    if (k == Dim) break;
  }
  return out;
}

}  // namespace detail

/// Builds the configuration described by `spec`. Interior atoms fill Ω,
/// boundary atoms the band of width spec.band around it.
template <int Dim>
Generated<Dim> generate(const GeneratorSpec<Dim>& spec, double cell_edge) {
  if (!(spec.A.determinant() > 0.0)) throw Error("generate: lattice matrix must have det A > 0");
  if (!(spec.band >= 0.0)) throw Error("generate: band must be non-negative");
  if (spec.sigma < 0.0) throw Error("generate: sigma must be non-negative");
  if (spec.vacancy_fraction < 0.0 || spec.vacancy_fraction >= 1.0)
    throw Error("generate: vacancy fraction must lie in [0, 1)");
  const bool planar_only = spec.kind == GeneratorKind::EdgeDislocation || spec.kind == GeneratorKind::Bend ||
                           spec.kind == GeneratorKind::GrainBoundary;
  if (planar_only && Dim != 2) throw Error(std::string("generate: ") + to_string(spec.kind) + " is two-dimensional");
  if (spec.kind == GeneratorKind::Bend && !(spec.kappa > 0.0)) throw Error("generate: bend needs kappa > 0");
  if (spec.kind == GeneratorKind::Wave && !(spec.wavelength > 0.0)) throw Error("generate: wave needs wavelength > 0");

  GroundTruth<Dim> truth;
  truth.spec = spec;
  for (const auto& c : spec.cores) truth.net_burgers += c.burgers;

  const Vec<Dim> lo = spec.box.lo - Vec<Dim>::Constant(spec.band);
  const Vec<Dim> hi = spec.box.hi + Vec<Dim>::Constant(spec.band);
  // Reference points cover a margin so displaced atoms still fill the band.
  const double margin = 2.0 + (spec.kind == GeneratorKind::Bend ? 0.5 * spec.kappa * (hi - lo).squaredNorm() : 0.0);
  std::vector<Vec<Dim>> raw;
  if (spec.kind == GeneratorKind::GrainBoundary) {
    const Vec<Dim> o = truth.grain_origin();
    for (int side = 0; side < 2; ++side) {
      const Vec<Dim> probe = o + Vec<Dim>::Unit(Dim - 1) * (side == 0 ? 1.0 : -1.0);
      const Mat<Dim> a = truth.grain_A(probe);
      for (const auto& p : detail::lattice_points<Dim>(a, spec.tau - a * o, lo, hi)) {
        const bool upper = p(Dim - 1) >= o(Dim - 1);
        if (upper == (side == 0)) raw.push_back(p);
      }
    }
  } else {
    const Vec<Dim> pad = Vec<Dim>::Constant(margin);
    for (const auto& X : detail::lattice_points<Dim>(spec.A, spec.tau, lo - pad, hi + pad))
      raw.push_back(X + truth.displacement(X));
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double cell = std::pow(1.0 / spec.A.determinant(), 1.0 / Dim);
  std::vector<Vec<Dim>> pos;
  std::vector<AtomKind> kinds;
  for (auto p : raw) {
    if (spec.sigma > 0.0)
      for (int k = 0; k < Dim; ++k) p(k) += spec.sigma * cell * normal(rng);
    if (spec.box.contains(p)) {
      pos.push_back(p);
      kinds.push_back(AtomKind::Interior);
    } else if (spec.box.distance(p) < spec.band) {
      pos.push_back(p);
      kinds.push_back(AtomKind::Boundary);
    }
  }

  if (spec.vacancy_fraction > 0.0) {
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < pos.size(); ++i)
      if (kinds[i] == AtomKind::Interior) interior.push_back(i);
    std::shuffle(interior.begin(), interior.end(), rng);
    const auto remove = static_cast<std::size_t>(std::floor(spec.vacancy_fraction * interior.size()));
    std::vector<bool> drop(pos.size(), false);
    for (std::size_t i = 0; i < remove; ++i) drop[interior[i]] = true;
    std::vector<Vec<Dim>> kept_pos;
    std::vector<AtomKind> kept_kinds;
    for (std::size_t i = 0; i < pos.size(); ++i)
      if (!drop[i]) {
        kept_pos.push_back(pos[i]);
        kept_kinds.push_back(kinds[i]);
      }
    pos.swap(kept_pos);
    kinds.swap(kept_kinds);
  }

  if (spec.kind == GeneratorKind::GrainBoundary) {
    // Drop the later atom of every pair that overlaps across the boundary.
    Configuration<Dim> tmp(pos, kinds, spec.box, cell_edge);
    std::vector<bool> drop(pos.size(), false);
    for (const auto& pr : hardcore_violations(tmp, spec.s0))
      if (!drop[pr.first]) drop[pr.second] = true;
    std::vector<Vec<Dim>> kept_pos;
    std::vector<AtomKind> kept_kinds;
    for (std::size_t i = 0; i < pos.size(); ++i)
      if (!drop[i]) {
        kept_pos.push_back(pos[i]);
        kept_kinds.push_back(kinds[i]);
      }
    pos.swap(kept_pos);
    kinds.swap(kept_kinds);
  }

  Configuration<Dim> config(std::move(pos), std::move(kinds), spec.box, cell_edge);
  const auto bad = hardcore_violations(config, spec.s0);
  if (!bad.empty())
    throw Error("generate: hard-core violation between atoms " + std::to_string(bad.front().first) + " and " +
                std::to_string(bad.front().second));
  return {std::move(config), std::move(truth)};
}

/// Atoms of one lattice row, walked in the +x direction from the atom
/// nearest to `start` until x exceeds x_end. Each step moves to the atom
/// with 0.5·a < Δx < 1.5·a and |Δy| < 0.5·a closest to one spacing ahead.
inline std::vector<Vec<2>> walk_row(const Configuration<2>& chi, const Vec<2>& start, double x_end,
                                    double spacing) {
  std::size_t cur = chi.size();
  double best = 1e300;
  for (std::size_t i : chi.query(start, spacing)) {
    const double d = (chi.position(i) - start).norm();
    if (d < best) {
      best = d;
      cur = i;
    }
  }
  if (cur == chi.size()) throw Error("walk_row: no atom near the row start");
  std::vector<Vec<2>> row;
  for (;;) {
    const Vec<2> p = chi.position(cur);
    row.push_back(p);
    if (p(0) > x_end) break;
    std::size_t next = chi.size();
    double score = 1e300;
    for (std::size_t i : chi.query(p, 1.6 * spacing)) {
      const Vec<2> d = chi.position(i) - p;
      if (d(0) > 0.5 * spacing && d(0) < 1.5 * spacing && std::abs(d(1)) < 0.5 * spacing) {
        const double sc = (d - Vec<2>(spacing, 0.0)).norm();
        if (sc < score) {
          score = sc;
          next = i;
        }
      }
    }
    if (next == chi.size()) throw Error("walk_row: row interrupted");
    cur = next;
  }
  return row;
}

/// Half-plane count: atoms of the row at height center + offset minus atoms
/// of the row at center − offset, both between the same two cut abscissae.
/// The cuts are snapped to midpoints between neighbours of the upper row.
inline int half_plane_count(const Configuration<2>& chi, const Vec<2>& center, double offset, double x_lo,
                            double x_hi, double spacing) {
  const auto upper = walk_row(chi, Vec<2>(x_lo - 2.0 * spacing, center(1) + offset), x_hi + 2.0 * spacing, spacing);
  const auto lower = walk_row(chi, Vec<2>(x_lo - 2.0 * spacing, center(1) - offset), x_hi + 2.0 * spacing, spacing);
  auto snap = [&](double x) {
    for (std::size_t i = 1; i < upper.size(); ++i)
      if (upper[i](0) >= x) return 0.5 * (upper[i - 1](0) + upper[i](0));
    throw Error("half_plane_count: cut outside the walked row");
  };
  const double lo = snap(x_lo), hi = snap(x_hi);
  auto count = [&](const std::vector<Vec<2>>& row) {
    return static_cast<int>(std::count_if(row.begin(), row.end(),
                                          [&](const Vec<2>& p) { return p(0) > lo && p(0) < hi; }));
  };
  return count(upper) - count(lower);
}

/// Winding number of a closed planar polyline around p.
inline int winding_number(const std::vector<Vec<2>>& loop, const Vec<2>& p) {
  double total = 0.0;
  for (std::size_t i = 1; i < loop.size(); ++i) {
    const Vec<2> a = loop[i - 1] - p, b = loop[i] - p;
    total += std::atan2(a(0) * b(1) - a(1) * b(0), a.dot(b));
  }
  return static_cast<int>(std::lround(total / (2.0 * kPi)));
}

}  // namespace latfit
