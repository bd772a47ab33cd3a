#pragma once

// Invariant suite over a configuration: step bounds, plaquettes, energy
// sandwiches, convexity, low-energy regularity, lower bound, gradient bound
// and chain drift.

#include "latfit/fields.hpp"

#include <string>
#include <vector>

namespace latfit {

struct CheckTally {
  std::string name;
  std::size_t checked = 0;
  std::size_t failed = 0;
  /// Most negative margin seen (margin < 0 is a failure).
  double worst_margin = std::numeric_limits<double>::infinity();

  void record(double margin) {
    ++checked;
    if (margin < 0.0) ++failed;
    worst_margin = std::min(worst_margin, margin);
  }
};

struct CheckReport {
  std::vector<CheckTally> tallies;
  std::size_t points = 0;
  std::size_t valid_points = 0;
  std::vector<DefectCluster> clusters;

  bool ok() const {
    for (const auto& t : tallies)
      if (t.failed) return false;
    return true;
  }
  CheckTally& tally(const std::string& name) {
    for (auto& t : tallies)
      if (t.name == name) return t;
    tallies.push_back({name});
    return tallies.back();
  }
};

/// Per-point checks on a fitted, regular pair.
template <int Dim>
void check_point(const Model<Dim>& model, const Configuration<Dim>& chi, const FitResult<Dim>& fit,
                 const Reparam<Dim>& relabel, double tol, CheckReport& report) {
  const auto nb = Neighborhood<Dim>::gather(chi, fit.x, model.lambda());
  const auto& aff = fit.aff_hat;
  const auto& c = model.constants();

  const auto sw = reparam_sandwich(model, aff, apply(relabel, aff), nb);
  report.tally("sandwich").record(sw.holds() ? 0.0 : -1.0);

  const double beta = default_beta(model, aff.A);
  const auto split = split_regular_atoms(model, aff, nb, beta);
  const double irr_bound = j_lambda(model, aff, nb) / (c.C0_W * beta * beta);
  report.tally("irregular_density").record(irr_bound - split.rho_irr + tol);

  const auto conv = convexity_report(model, aff, nb);
  report.tally("convexity").record(std::min(conv.min_eigenvalue, conv.min_eigenvalue - conv.bound));

  const auto [lhs, rhs] = gradW_sum_diagnostic(model, aff, nb);
  report.tally("gradW_lower").record(lhs - rhs + tol);

  if (fit.breakdown.total <= model.params().eps_hat) {
    const auto reg = is_regular_pair(model, aff, chi, nb, model.params().low_energy_thresholds());
    report.tally("low_energy_regular").record(reg.regular ? 0.0 : -1.0);
  }
}

/// Grid-based suite in the plane.
inline CheckReport run_checks(const Model<2>& model, const Configuration<2>& chi, const GridGeometry& geo,
                              const IMat<2>& sandwich_B, double tol) {
  CheckReport report;
  for (const char* name : {"step_bounds", "plaquettes", "sandwich", "irregular_density", "convexity", "gradW_lower",
                           "low_energy_regular", "lower_bound", "gradient_bound", "drift"})
    report.tally(name);
  const FieldGrid f = evaluate_grid(model, chi, geo);
  report.points = static_cast<std::size_t>(geo.size());
  const Reparam<2> relabel{sandwich_B, IVec<2>::Unit(0)};
  for (int k = 0; k < geo.size(); ++k) {
    if (!f.valid[k]) continue;
    ++report.valid_points;
    check_point(model, chi, f.fits[k], relabel, tol, report);
  }
  for (int j = 0; j < geo.ny; ++j)
    for (int i = 0; i < geo.nx; ++i) {
      const int k = geo.index(i, j);
      if (!f.valid[k]) continue;
      const auto pk = ChainPoint<2>::from_fit(f.fits[k]);
      for (const auto& d : {std::array<int, 2>{1, 0}, std::array<int, 2>{0, 1}}) {
        if (!geo.inside(i + d[0], j + d[1])) continue;
        const int n = geo.index(i + d[0], j + d[1]);
        if (!f.valid[n]) continue;
        try {
          const auto s = find_reparam(model, pk, ChainPoint<2>::from_fit(f.fits[n]));
          report.tally("step_bounds").record(std::min(s.bound_A - s.delta_A, s.bound_tau - s.delta_tau));
        } catch (const Error&) {
          report.tally("step_bounds").record(-1.0);
        }
      }
      try {
        if (const auto p = plaquette_product(model, f, i, j))
          report.tally("plaquettes").record(p->is_identity() ? 0.0 : -1.0);
      } catch (const Error&) {
        report.tally("plaquettes").record(-1.0);
      }
      if (const auto e = lower_bound_check(model, f, i, j)) report.tally("lower_bound").record(e->slack + tol);
      if (const auto g = gradient_bound_check(model, f, i, j)) report.tally("gradient_bound").record(g->rhs - g->lhs + tol);
    }
  // Drift along every maximal run of valid nodes in a grid row, in chains of
  // at most eleven points.
  for (int j = 0; j < geo.ny; ++j) {
    std::vector<ChainPoint<2>> chain;
    auto flush = [&] {
      if (chain.size() >= 2) {
        try {
          const auto r = chain_drift_bound(model, chain);
          report.tally("drift").record(std::min(r.rhs_A - r.lhs_A, r.rhs_tau - r.lhs_tau));
        } catch (const Error&) {
          report.tally("drift").record(-1.0);
        }
      }
      chain.clear();
    };
    for (int i = 0; i < geo.nx; ++i) {
      const int k = geo.index(i, j);
      if (!f.valid[k]) {
        flush();
        continue;
      }
      chain.push_back(ChainPoint<2>::from_fit(f.fits[k]));
      if (chain.size() == 11) {
        const auto last = chain.back();
        flush();
        chain.push_back(last);
      }
    }
    flush();
  }
  report.clusters = defect_map(model, f).clusters;
  return report;
}

/// Pointwise suite at the given sample points (any dimension).
template <int Dim>
CheckReport run_point_checks(const Model<Dim>& model, const Configuration<Dim>& chi, const std::vector<Vec<Dim>>& pts,
                             double tol) {
  CheckReport report;
  for (const char* name : {"sandwich", "irregular_density", "convexity", "gradW_lower", "low_energy_regular"})
    report.tally(name);
  IMat<Dim> b = IMat<Dim>::Identity();
  b(0, 1) = 1;
  const Reparam<Dim> relabel{b, IVec<Dim>::Unit(0)};
  for (const auto& x : pts) {
    ++report.points;
    FitResult<Dim> fit;
    try {
      fit = fit_global(model, chi, x);
    } catch (const Error&) {
      continue;
    }
    if (!fit.converged || !fit.regularity.regular) continue;
    ++report.valid_points;
    check_point(model, chi, fit, relabel, tol, report);
  }
  return report;
}

}  // namespace latfit
