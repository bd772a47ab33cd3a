#pragma once

#include "latfit/generators.hpp"
#include "latfit/model.hpp"

#include <random>

namespace latfit::testing {

inline const Model<2>& model8() {
  static const Model<2> m(ModelParams<2>::with_defaults(8.0));
  return m;
}

/// Generated planar configuration on [0, size]² with a 2λ + 1 boundary band.
inline Generated<2> planar(GeneratorKind kind, const Mat<2>& a = Mat<2>::Identity(), double size = 48.0,
                           double sigma = 0.0, std::uint64_t seed = 1, double lambda = 8.0) {
  GeneratorSpec<2> g;
  g.kind = kind;
  g.A = a;
  g.box = {Vec<2>::Zero(), Vec<2>::Constant(size)};
  g.band = 2.0 * lambda + 1.0;
  g.sigma = sigma;
  g.seed = seed;
  return generate(g, 2.0 * lambda);
}

inline Mat<2> random_near_identity(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  return Mat<2>::Identity() + (Mat<2>() << u(rng), u(rng), u(rng), u(rng)).finished();
}

}  // namespace latfit::testing
