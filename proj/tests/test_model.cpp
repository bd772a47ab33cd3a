#include "latfit/model.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace latfit;
using namespace latfit::testing;

namespace {

/// Exact lattice parameters at x for χ = A⁻¹(ℤ² − τ₀).
AffinePair<2> exact_at(const Mat<2>& a, const Vec<2>& tau0, const Vec<2>& x) { return {a, a * x + tau0}; }

/// J by direct summation over every atom, without the neighbourhood view.
double j_brute(const Model<2>& m, const AffinePair<2>& aff, const Configuration<2>& chi, const Vec<2>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < chi.size(); ++i) {
    const Vec<2> y = chi.position(i) - x;
    const double w = Cutoff::value(y.norm() / m.lambda());
    const Vec<2> z = aff.A * y + aff.tau;
    s += w * ((1 - std::cos(2 * kPi * z(0))) + (1 - std::cos(2 * kPi * z(1)))) / (2 * kPi * kPi);
  }
  return aff.A.inverse().squaredNorm() * s / (m.constants().C_phi * m.lambda() * m.lambda());
}

}  // namespace

TEST(Neighborhood, QueryMatchesBruteForce) {
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 30.0, 0.07, 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 35.0);
  for (int t = 0; t < 30; ++t) {
    const Vec<2> x(u(rng), u(rng));
    for (double r : {0.7, 3.0, 16.0}) {
      std::vector<std::size_t> brute;
      for (std::size_t i = 0; i < g.config.size(); ++i)
        if ((g.config.position(i) - x).norm() < r) brute.push_back(i);
      EXPECT_EQ(g.config.query(x, r), brute);
    }
  }
}

TEST(LocalDensity, ExactLatticeApproachesDeterminant) {
  const Mat<2> a = (Mat<2>() << 1.1, 0.2, -0.1, 0.9).finished();
  const auto g = planar(GeneratorKind::Perfect, a, 40.0, 0.0, 1, 16.0);
  const Model<2> m(ModelParams<2>::with_defaults(16.0));
  for (const Vec<2>& x : {Vec<2>(20.0, 20.0), Vec<2>(13.3, 27.1)})
    EXPECT_LT(std::abs(local_density(m, g.config, x) - a.determinant()), 20.0 / (16.0 * 16.0));
}

TEST(JLambda, MatchesBruteForceAndVanishesOnExactLattice) {
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.05, 4);
  const auto& m = model8();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(15.0, 25.0);
  for (int t = 0; t < 10; ++t) {
    const Vec<2> x(u(rng), u(rng));
    const AffinePair<2> aff{random_near_identity(rng, 0.05), Vec<2>(u(rng), u(rng))};
    EXPECT_NEAR(j_lambda(m, aff, g.config, x), j_brute(m, aff, g.config, x), 1e-12);
  }
  const auto p = planar(GeneratorKind::Perfect);
  EXPECT_NEAR(j_lambda(m, exact_at(Mat<2>::Identity(), Vec<2>::Zero(), Vec<2>(20.3, 21.7)), p.config, Vec<2>(20.3, 21.7)),
              0.0, 1e-20);
}

TEST(JLambda, InvariantUnderIntegerPhaseShiftAndTranslation) {
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.05, 5);
  const auto& m = model8();
  const Vec<2> x(20.0, 19.0);
  const AffinePair<2> aff{Mat<2>::Identity(), Vec<2>(0.3, -0.2)};
  const double j0 = j_lambda(m, aff, g.config, x);
  EXPECT_NEAR(j_lambda(m, AffinePair<2>{aff.A, aff.tau + Vec<2>(3, -2)}, g.config, x), j0, 1e-14);
  // Shift χ and x together.
  const Vec<2> s(0.37, -1.21);
  std::vector<Vec<2>> moved;
  for (const auto& p : g.config.positions()) moved.push_back(p + s);
  const Configuration<2> shifted(moved, g.config.kinds(), g.config.box(), g.config.cell_edge());
  EXPECT_NEAR(j_lambda(m, aff, shifted, Vec<2>(x + s)), j0, 1e-13);
  EXPECT_NEAR(local_density(m, shifted, Vec<2>(x + s)), local_density(m, g.config, x), 1e-13);
}

TEST(JLambda, AnalyticDerivativesMatchFiniteDifferences) {
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.05, 6);
  const auto& m = model8();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  const Vec<2> x(20.0, 20.0);
  const auto nb = Neighborhood<2>::gather(g.config, x, m.lambda());
  for (int t = 0; t < 10; ++t) {
    const AffinePair<2> aff{random_near_identity(rng, 0.02), Vec<2>(u(rng), u(rng)) + x};
    const AffVec<2> grad = j_derivatives(m, aff, nb, false).grad;
    const AffMat<2> hess = j_derivatives(m, aff, nb, true).hess;
    const AffVec<2> v0 = flatten(aff);
    const double h = 1e-6;
    for (int k = 0; k < kAffSize<2>; ++k) {
      AffVec<2> vp = v0, vm = v0;
      vp(k) += h;
      vm(k) -= h;
      const double fd = (j_lambda(m, unflatten<2>(vp), nb) - j_lambda(m, unflatten<2>(vm), nb)) / (2 * h);
      EXPECT_NEAR(grad(k), fd, 1e-6 * std::max(1.0, std::abs(fd)));
      const AffVec<2> gd = (j_derivatives(m, unflatten<2>(vp), nb, false).grad - j_derivatives(m, unflatten<2>(vm), nb, false).grad) / (2 * h);
      for (int l = 0; l < kAffSize<2>; ++l) EXPECT_NEAR(hess(l, k), gd(l), 1e-5 * std::max(1.0, std::abs(gd(l))));
    }
  }
}

TEST(PreEnergy, PartsAreNonNegativeAndSum) {
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.03, 8);
  const auto& m = model8();
  const Vec<2> x(20.0, 20.0);
  const AffinePair<2> aff{Mat<2>::Identity() * 1.01, Vec<2>(0.1, 0.2)};
  const auto e = pre_energy(m, aff, g.config, x);
  EXPECT_GE(e.f_term, 0.0);
  EXPECT_GE(e.j_term, 0.0);
  EXPECT_GE(e.nu_term, 0.0);
  EXPECT_NEAR(e.total, e.f_term + e.j_term + e.nu_term, 1e-15);
  EXPECT_NEAR(e.nu_term, m.params().vartheta * std::abs(aff.A.determinant() - e.rho), 1e-15);
  EXPECT_THROW(nu_lambda(m, (Mat<2>() << 1, 0, 0, -1).finished(), 1.0), Error);
}

TEST(PreEnergy, ExactLatticeLeavesOnlyTheDensityResidual) {
  const auto p = planar(GeneratorKind::Perfect, Mat<2>::Identity(), 40.0, 0.0, 1, 16.0);
  const Model<2> m(ModelParams<2>::with_defaults(16.0));
  const Vec<2> x(20.0, 20.0);
  const auto e = pre_energy(m, exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x), p.config, x);
  EXPECT_NEAR(e.f_term, 0.0, 1e-20);
  EXPECT_LT(e.j_term, 1e-20);
  EXPECT_LT(e.total, 20.0 / (16.0 * 16.0));
}

TEST(Hardcore, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Vec<2>> pos;
  for (int i = 0; i < 300; ++i) pos.emplace_back(u(rng), u(rng));
  pos.push_back(pos[5]);
  const Configuration<2> chi(pos, std::vector<AtomKind>(pos.size(), AtomKind::Interior),
                             Box<2>{Vec<2>::Zero(), Vec<2>::Constant(10.0)}, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> brute;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      if ((pos[i] - pos[j]).norm() < 0.3) brute.emplace_back(i, j);
  auto found = hardcore_violations(chi, 0.3);
  std::sort(found.begin(), found.end());
  EXPECT_EQ(found, brute);
  EXPECT_TRUE(hardcore_violations(planar(GeneratorKind::Perfect).config, 0.5).empty());
}

TEST(DistanceToLattice, MatchesEnumeration) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const AffinePair<2> aff{random_near_identity(rng, 0.4), Vec<2>(u(rng), u(rng))};
    const Vec<2> y(u(rng), u(rng));
    const Mat<2> inv = aff.A.inverse();
    double best = 1e300;
    for (int i = -12; i <= 12; ++i)
      for (int j = -12; j <= 12; ++j) best = std::min(best, (y - inv * (Vec<2>(i, j) - aff.tau)).norm());
    EXPECT_NEAR(distance_to_lattice(aff, y), best, 1e-12);
  }
}

TEST(SplitRegularAtoms, DisplacedAtomIsTheOnlyIrregularOne) {
  auto p = planar(GeneratorKind::Perfect, Mat<2>::Identity(), 40.0);
  auto pos = p.config.positions();
  const Vec<2> x(20.0, 20.0);
  const std::size_t moved = p.config.query(x, 0.5).front();
  const double beta = 0.1;
  pos[moved] += Vec<2>(2.0 * beta, 0.0);
  const Configuration<2> chi(pos, p.config.kinds(), p.config.box(), p.config.cell_edge());
  const auto& m = model8();
  const auto split = split_regular_atoms(m, chi, exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x), beta, x);
  ASSERT_EQ(split.irregular.size(), 1u);
  EXPECT_EQ(split.irregular.front(), moved);
  EXPECT_NEAR(split.rho_reg + split.rho_irr, local_density(m, chi, x), 1e-14);
}

TEST(SplitRegularAtoms, IrregularDensityBoundedByJ) {
  const auto& m = model8();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.08, seed);
    const Vec<2> x(20.0, 20.0);
    const AffinePair<2> aff = exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x);
    const double beta = default_beta(m, aff.A);
    const auto split = split_regular_atoms(m, g.config, aff, beta, x);
    EXPECT_LE(split.rho_irr, j_lambda(m, aff, g.config, x) / (m.constants().C0_W * beta * beta) + 1e-14);
  }
}

TEST(RegularPair, ExactLatticeIsRegularAndZeroToleranceFlagsJ) {
  auto p = planar(GeneratorKind::Perfect, Mat<2>::Identity(), 40.0);
  const auto& m = model8();
  const Vec<2> x(20.0, 20.0);
  const auto aff = exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x);
  EXPECT_TRUE(is_regular_pair(m, x, aff, p.config, m.params().thresholds).regular);
  auto pos = p.config.positions();
  pos[p.config.query(x, 0.5).front()] += Vec<2>(0.2, 0.0);
  const Configuration<2> chi(pos, p.config.kinds(), p.config.box(), p.config.cell_edge());
  RegularityThresholds th = m.params().thresholds;
  th.eps_J = 0.0;
  const auto r = is_regular_pair(m, x, aff, chi, th);
  EXPECT_FALSE(r.regular);
  EXPECT_FALSE(r.j_ok);
  EXPECT_TRUE(r.ainv_ok && r.density_ok && r.hardcore_ok);
}

TEST(Diagnostics, GradWLowerBoundAndSandwichOnNoisyLattices) {
  const auto& m = model8();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  const IMat<2> relabel_B = (IMat<2>() << 2, 1, 1, 1).finished();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.05, seed);
    const Vec<2> x(20.0 + u(rng), 20.0 + u(rng));
    const auto nb = Neighborhood<2>::gather(g.config, x, m.lambda());
    const AffinePair<2> aff{random_near_identity(rng, 0.02), x + Vec<2>(u(rng), u(rng))};
    const auto [lhs, rhs] = gradW_sum_diagnostic(m, aff, nb);
    EXPECT_GE(lhs, rhs);
    const Mat<2> b = relabel_B.cast<double>();
    const auto sw = reparam_sandwich(m, aff, AffinePair<2>{b * aff.A, b * aff.tau + Vec<2>(1, 0)}, nb);
    EXPECT_TRUE(sw.holds()) << sw.lower << " " << sw.j << " " << sw.upper;
  }
}

TEST(Diagnostics, TransferToNearbyPointWithSmallerScale) {
  const auto& m = model8();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 40.0, 0.03, seed);
    const Vec<2> x(20.0, 20.0);
    const auto aff = exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x);
    for (const Vec<2>& d : {Vec<2>(2.0, 0.0), Vec<2>(-1.5, 3.0), Vec<2>(0.0, -6.0)}) {
      const Vec<2> y = x + d;
      const double lt = m.lambda() - d.norm();
      const AffinePair<2> moved{aff.A, aff.tau + aff.A * d};
      EXPECT_LE(j_lambda(m.with_lambda(lt), moved, g.config, y),
                std::pow(m.lambda() / lt, 2) * j_lambda(m, aff, g.config, x) * (1 + 1e-12));
    }
  }
}

TEST(Convexity, ExactLatticeHessianExceedsBound) {
  const auto p = planar(GeneratorKind::Perfect);
  const auto& m = model8();
  const Vec<2> x(20.0, 20.0);
  const auto r = convexity_report(m, exact_at(Mat<2>::Identity(), Vec<2>::Zero(), x),
                                  Neighborhood<2>::gather(p.config, x, m.lambda()));
  EXPECT_GT(r.min_eigenvalue, 0.0);
  EXPECT_GE(r.min_eigenvalue, r.bound);
}
