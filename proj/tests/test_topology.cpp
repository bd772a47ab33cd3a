#include "latfit/topology.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace latfit;
using namespace latfit::testing;

namespace {

Generated<2> dislocations(const std::vector<Core<2>>& cores, double width, double height) {
  GeneratorSpec<2> s;
  s.kind = GeneratorKind::EdgeDislocation;
  s.box = {Vec<2>::Zero(), Vec<2>(width, height)};
  s.band = 17.0;
  s.cores = cores;
  s.seed = 7;
  return generate(s, 16.0);
}

/// Counterclockwise square with the given corners, closed.
std::vector<Vec<2>> square(double lo_x, double lo_y, double hi_x, double hi_y) {
  return {Vec<2>(lo_x, lo_y), Vec<2>(hi_x, lo_y), Vec<2>(hi_x, hi_y), Vec<2>(lo_x, hi_y), Vec<2>(lo_x, lo_y)};
}

std::vector<ChainPoint<2>> fit_points(const Model<2>& m, const Configuration<2>& chi,
                                      const std::vector<Vec<2>>& ys) {
  std::vector<ChainPoint<2>> out;
  for (const auto& y : ys) out.push_back(ChainPoint<2>::from_fit(fit_global(m, chi, y)));
  return out;
}

IMat<2> random_unimodular(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(-3, 3);
  for (;;) {
    const IMat<2> b = (IMat<2>() << u(rng), u(rng), u(rng), u(rng)).finished();
    if (int_det<2>(b) == 1) return b;
  }
}

}  // namespace

TEST(FindReparam, RecoversRandomRelabelingsOfExactPairs) {
  const auto& m = model8();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> ut(-5, 5);
  for (int t = 0; t < 300; ++t) {
    const Mat<2> a = random_near_identity(rng, 0.2);
    const Vec<2> tau(u(rng), u(rng));
    const Vec<2> y(20.0 * u(rng), 20.0 * u(rng));
    const Vec<2> d(3.0 * u(rng), 3.0 * u(rng));
    const Reparam<2> r{random_unimodular(rng), IVec<2>(ut(rng), ut(rng))};
    // The same lattice seen from y + d and relabeled by r⁻¹.
    const ChainPoint<2> p1{y, {a, tau}, 0.0, true};
    const ChainPoint<2> p2{y + d, apply(inverse(r), AffinePair<2>{a, Vec<2>(tau + a * d)}), 0.0, true};
    const auto s = find_reparam(m, p1, p2);
    EXPECT_EQ(s.reparam, r);
    EXPECT_LT(s.delta_A, 1e-10);
    EXPECT_LT(s.delta_tau, 1e-9);
    EXPECT_LT(s.rounding_gap, 1e-9);
  }
}

TEST(FindReparam, RejectsDistantAndAmbiguousPairs) {
  const auto& m = model8();
  const AffinePair<2> id{Mat<2>::Identity(), Vec<2>::Zero()};
  EXPECT_THROW(find_reparam(m, ChainPoint<2>{Vec<2>::Zero(), id}, ChainPoint<2>{Vec<2>(13.0, 0.0), id}), Error);
  const AffinePair<2> half{Mat<2>::Identity(), Vec<2>(0.5, 0.0)};
  EXPECT_THROW(find_reparam(m, ChainPoint<2>{Vec<2>::Zero(), id}, ChainPoint<2>{Vec<2>::Zero(), half}), Error);
  const AffinePair<2> skew{(Mat<2>() << 1.0, 0.5, 0.0, 1.0).finished(), Vec<2>::Zero()};
  EXPECT_THROW(find_reparam(m, ChainPoint<2>{Vec<2>::Zero(), id}, ChainPoint<2>{Vec<2>::Zero(), skew}), Error);
}

TEST(Reparam, GroupLaws) {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> ut(-4, 4);
  for (int t = 0; t < 200; ++t) {
    const Reparam<2> a{random_unimodular(rng), IVec<2>(ut(rng), ut(rng))};
    const Reparam<2> b{random_unimodular(rng), IVec<2>(ut(rng), ut(rng))};
    const Reparam<2> c{random_unimodular(rng), IVec<2>(ut(rng), ut(rng))};
    EXPECT_EQ(compose(compose(a, b), c), compose(a, compose(b, c)));
    EXPECT_TRUE(compose(a, inverse(a)).is_identity());
    // Action is a left action: (ab)𝔄 = a(b𝔄).
    const AffinePair<2> aff{random_near_identity(rng, 0.3), Vec<2>(0.3, -0.7)};
    const auto lhs = apply(compose(a, b), aff);
    const auto rhs = apply(a, apply(b, aff));
    EXPECT_LT((lhs.A - rhs.A).norm(), 1e-12);
    EXPECT_LT((lhs.tau - rhs.tau).norm(), 1e-10);
  }
  EXPECT_EQ(fold<2>({}), Reparam<2>::identity());
}

TEST(ChainConsistency, TriangleAndRefinementOnNoisyLattice) {
  const auto& m = model8();
  const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 48.0, 0.02, 31);
  const auto pts = fit_points(m, g.config, {Vec<2>(20.0, 20.0), Vec<2>(24.0, 21.0), Vec<2>(22.0, 25.0),
                                            Vec<2>(27.0, 24.0)});
  for (const auto& p : pts) ASSERT_TRUE(p.regular);
  EXPECT_TRUE(triangle_check(m, pts[0], pts[1], pts[2]));
  EXPECT_TRUE(triangle_check(m, pts[1], pts[2], pts[3]));
  const std::vector<ChainPoint<2>> chain{pts[0], pts[1], pts[3]};
  EXPECT_TRUE(chain_refinement_invariance(m, chain, 1, pts[2]));
  EXPECT_TRUE(chain_refinement_invariance(m, chain, 2, pts[2]));
  ChainPoint<2> bad = pts[2];
  bad.regular = false;
  EXPECT_THROW(chain_refinement_invariance(m, chain, 1, bad), Error);
  for (const auto& s : chain_steps(m, chain)) EXPECT_TRUE(s.within_bounds());
}

TEST(DensifyLoop, BoundsGapsAndKeepsVertices) {
  const auto loop = square(0.0, 0.0, 10.0, 7.0);
  const auto d = densify_loop(loop, 2.0);
  EXPECT_EQ(d.front(), loop.front());
  EXPECT_EQ(d.back(), loop.back());
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_LE((d[i] - d[i - 1]).norm(), 2.0 + 1e-12);
  for (const auto& v : loop) {
    bool kept = false;
    for (const auto& p : d) kept = kept || (p - v).norm() < 1e-12;
    EXPECT_TRUE(kept);
  }
  // 10/2 + 7/2 rounded up, twice.
  EXPECT_EQ(d.size(), 1u + 2u * (5u + 4u));
  EXPECT_THROW(densify_loop(loop, 0.0), Error);
}

TEST(Oracles, WindingNumberAndSignedArea) {
  const auto ccw = square(0.0, 0.0, 2.0, 2.0);
  std::vector<Vec<2>> cw(ccw.rbegin(), ccw.rend());
  EXPECT_EQ(winding_number(ccw, Vec<2>(1.0, 1.0)), 1);
  EXPECT_EQ(winding_number(cw, Vec<2>(1.0, 1.0)), -1);
  EXPECT_EQ(winding_number(ccw, Vec<2>(3.0, 1.0)), 0);
  EXPECT_DOUBLE_EQ(signed_area2(ccw), 8.0);
  EXPECT_DOUBLE_EQ(signed_area2(cw), -8.0);
}

TEST(BurgersLoop, PerfectLatticeIsTrivial) {
  const auto& m = model8();
  const auto g = planar(GeneratorKind::Perfect);
  const auto res = burgers_loop(m, g.config, densify_loop(square(14.0, 14.0, 34.0, 34.0), 2.0));
  EXPECT_EQ(res.classification, LoopClass::Trivial);
  EXPECT_LT(res.max_residual_A, 1e-5);
}

TEST(BurgersLoop, SingleDislocationMatchesHalfPlaneCount) {
  const auto& m = model8();
  const Vec<2> core(24.5, 24.5);
  const auto g = dislocations({Core<2>{core, Vec<2>::Unit(0)}}, 48.0, 48.0);
  const int extra = half_plane_count(g.config, core, 14.0, 10.5, 38.5, 1.0);
  ASSERT_NE(extra, 0);

  const auto ccw = densify_loop(square(10.5, 10.5, 38.5, 38.5), 2.0);
  const std::vector<Vec<2>> cw(ccw.rbegin(), ccw.rend());
  for (const auto* loop : {&ccw, &cw}) {
    const auto res = burgers_loop(m, g.config, *loop);
    const int w = winding_number(*loop, core);
    EXPECT_EQ(res.classification, LoopClass::TranslationDefect);
    EXPECT_EQ(res.product.B, IMat<2>::Identity());
    EXPECT_EQ(res.product.t, IVec<2>(-w * extra, 0));
    for (const auto& s : res.steps) EXPECT_LT(s.rounding_gap, 0.25);
  }

  // A loop that stays clear of the core on one side.
  const auto away = burgers_loop(m, g.config, densify_loop(square(1.5, 8.5, 7.5, 38.5), 2.0));
  EXPECT_EQ(winding_number(away.samples, core), 0);
  EXPECT_EQ(away.classification, LoopClass::Trivial);
}

TEST(BurgersLoop, ProductIsAHomomorphismUnderConcatenation) {
  const auto& m = model8();
  const Vec<2> core(24.5, 24.5);
  const auto g = dislocations({Core<2>{core, Vec<2>::Unit(0)}}, 48.0, 48.0);
  const auto loop = densify_loop(square(10.5, 10.5, 38.5, 38.5), 2.0);
  const auto pts = fit_points(m, g.config, loop);
  const auto once = loop_from_points(m, pts);
  std::vector<ChainPoint<2>> twice = pts;
  twice.insert(twice.end(), pts.begin() + 1, pts.end());
  const auto res = loop_from_points(m, twice);
  EXPECT_EQ(res.product, compose(once.product, once.product));
  EXPECT_EQ(res.product.t, IVec<2>(2 * once.product.t(0), 2 * once.product.t(1)));
  // Reversal inverts the product.
  const std::vector<ChainPoint<2>> back(pts.rbegin(), pts.rend());
  EXPECT_EQ(loop_from_points(m, back).product, inverse(once.product));
}

TEST(BurgersLoop, DipoleCancelsWhenBothCoresAreEnclosed) {
  const auto& m = model8();
  // Stacked vertically so that neither core's slip plane crosses the other's
  // counting window.
  const Vec<2> c1(24.5, 20.5), c2(24.5, 60.5);
  const auto g = dislocations({Core<2>{c1, Vec<2>::Unit(0)}, Core<2>{c2, -Vec<2>::Unit(0)}}, 48.0, 80.0);
  const auto both = densify_loop(square(10.5, 6.5, 38.5, 74.5), 2.0);
  EXPECT_EQ(burgers_loop(m, g.config, both).classification, LoopClass::Trivial);

  const auto lower = densify_loop(square(10.5, 6.5, 38.5, 34.5), 2.0);
  const auto upper = densify_loop(square(10.5, 46.5, 38.5, 74.5), 2.0);
  const int n1 = half_plane_count(g.config, c1, 14.0, 10.5, 38.5, 1.0);
  const int n2 = half_plane_count(g.config, c2, 14.0, 10.5, 38.5, 1.0);
  ASSERT_NE(n1, 0);
  EXPECT_EQ(n1, -n2);
  EXPECT_EQ(burgers_loop(m, g.config, lower).product.t, IVec<2>(-n1, 0));
  EXPECT_EQ(burgers_loop(m, g.config, upper).product.t, IVec<2>(-n2, 0));
}

TEST(ChainDrift, BoundHoldsAlongNoisyChains) {
  const auto& m = model8();
  for (double sigma : {0.0, 0.01, 0.02}) {
    const auto g = planar(GeneratorKind::Noise, Mat<2>::Identity(), 48.0, sigma, 41);
    std::vector<Vec<2>> ys;
    for (int k = 0; k <= 10; ++k) ys.push_back(Vec<2>(17.0 + 1.5 * k, 22.0 + 0.4 * k));
    const auto pts = fit_points(m, g.config, ys);
    for (const auto& p : pts) ASSERT_TRUE(p.regular);
    const auto r = chain_drift_bound(m, pts);
    EXPECT_TRUE(r.holds()) << sigma << " A " << r.lhs_A << " <= " << r.rhs_A << " tau " << r.lhs_tau
                           << " <= " << r.rhs_tau;
  }
}
