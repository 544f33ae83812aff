#include <gtest/gtest.h>

#include <cmath>

#include "ellipgen/core.hpp"
#include "ellipgen/generator.hpp"

namespace eg = ellipgen;

namespace {

eg::Generator exp_generator(int d, const eg::UniformGrid& grid = eg::default_generator_grid()) {
  return eg::tabulate_generator(d, grid, [](double t) { return std::exp(-t); });
}

eg::Generator gauss_generator(int d, double t_max = 25.0) {
  auto count = static_cast<std::size_t>(std::llround(t_max / 0.005)) + 1;
  eg::UniformGrid grid(0.0, 0.005, count);
  const double c = std::pow(2.0 * eg::kPi, -0.5 * d);
  return eg::tabulate_generator(d, grid, [c](double t) { return c * std::exp(-0.5 * t); });
}

double sup_diff_with(const eg::TabulatedFunction& f, double lo, double hi,
                     double (*ref)(double)) {
  double sup = 0.0;
  for (double x = lo; x <= hi; x += 1e-3) sup = std::max(sup, std::abs(f(x) - ref(x)));
  return sup;
}

}  // namespace

TEST(UniformGrid, Invariants) {
  EXPECT_THROW(eg::UniformGrid(0.0, 0.0, 10), eg::InvariantError);
  EXPECT_THROW(eg::UniformGrid(0.0, 0.1, 1), eg::InvariantError);
  eg::UniformGrid g(0.0, 0.005, 2001);
  EXPECT_DOUBLE_EQ(g.back(), 10.0);
  EXPECT_DOUBLE_EQ(g.node(3), 0.015);
}

TEST(TabulatedFunction, EvaluationContract) {
  eg::UniformGrid g(1.0, 0.5, 3);  // nodes 1, 1.5, 2
  eg::TabulatedFunction f(g, {2.0, 3.0, 5.0});
  EXPECT_DOUBLE_EQ(f(0.0), 2.0);   // below start -> first value
  EXPECT_DOUBLE_EQ(f(1.0), 2.0);
  EXPECT_DOUBLE_EQ(f(1.25), 2.5);  // linear between nodes
  EXPECT_DOUBLE_EQ(f(2.0), 5.0);   // last node keeps its value
  EXPECT_DOUBLE_EQ(f(2.0001), 0.0);  // above last node -> 0
  EXPECT_THROW(eg::TabulatedFunction(g, {1.0, 2.0}), eg::InvariantError);
}

TEST(MomentIntegrals, ExponentialClosedForm) {
  // I1 = Gamma(1) = 1, I2 = Gamma(1/2) = sqrt(pi)
  auto m = eg::moment_integrals(exp_generator(2));
  EXPECT_NEAR(m.I1, 1.0, 1e-3);
  EXPECT_NEAR(m.I2, std::sqrt(eg::kPi), 1e-3);
  EXPECT_FALSE(m.tail_warning());
}

TEST(MomentIntegrals, IndicatorByHand) {
  // g = 1 on [0,1]: I1 = 1, I2 = int_0^1 t^{-1/2} dt = 2
  auto grid = eg::default_generator_grid();
  auto g = eg::tabulate_generator(2, grid, [](double t) { return t <= 1.0 ? 1.0 : 0.0; });
  auto m = eg::moment_integrals(g);
  EXPECT_NEAR(m.I1, 1.0, 5e-3);
  EXPECT_NEAR(m.I2, 2.0, 5e-3);
}

TEST(MomentIntegrals, ZeroGenerator) {
  auto g = eg::tabulate_generator(2, eg::default_generator_grid(), [](double) { return 0.0; });
  EXPECT_THROW(eg::moment_integrals(g), eg::ZeroGeneratorError);
}

TEST(MomentIntegrals, TailWarningForSlowDecay) {
  auto g = eg::tabulate_generator(2, eg::default_generator_grid(),
                                  [](double t) { return 1.0 / (1.0 + t * t); });
  EXPECT_TRUE(eg::moment_integrals(g).tail_warning());
}

TEST(Normalize, ExponentialClosedForm) {
  // normalize(e^{-x}, b=1) = e^{-pi t} for every d; the input carries its
  // tail on [0,20] so the t^{d/2-1} weight is fully integrated, the output
  // lives on the default [0,10] lattice
  eg::UniformGrid long_grid(0.0, 0.005, 4001);
  for (int d : {2, 3, 5}) {
    auto ng = eg::normalize(exp_generator(d, long_grid), 1.0, 1e-6,
                            eg::default_generator_grid());
    double worst = 0.0;
    const auto& grid = ng.base().grid();
    for (std::size_t k = 0; k < grid.count; ++k) {
      double t = grid.node(k);
      worst = std::max(worst, std::abs(ng.base().table().values()[k] - std::exp(-eg::kPi * t)));
    }
    EXPECT_LT(worst, 1e-3) << "d = " << d;
    EXPECT_LE(std::abs(ng.residuals().first), 1e-6);
    EXPECT_LE(std::abs(ng.residuals().second), 1e-6);
  }
}

TEST(Normalize, GeneralBClosedForm) {
  // normalize(e^{-x}, b) = b^d e^{-pi b^2 t}
  const double b = 0.7;
  const int d = 3;
  auto ng = eg::normalize(exp_generator(d), b);
  const auto& grid = ng.base().grid();
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.count; ++k) {
    double t = grid.node(k);
    double ref = std::pow(b, d) * std::exp(-eg::kPi * b * b * t);
    worst = std::max(worst, std::abs(ng.base()(t) - ref));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Normalize, Idempotence) {
  auto first = eg::normalize(exp_generator(3), 1.0);
  auto second = eg::normalize(first.base(), 1.0);
  for (std::size_t k = 0; k < first.base().grid().count; ++k)
    EXPECT_NEAR(second.base().table().values()[k], first.base().table().values()[k], 2e-6);
}

TEST(Normalize, ScaleCollapse) {
  // scale-family collapse: normalize(g_a, b) = normalize(g, b). For a < 1 the
  // scaled table needs a longer grid to carry the same support.
  auto g = exp_generator(2);
  auto out = eg::default_generator_grid();
  auto ref = eg::normalize(g, 1.0, 1e-6, out);
  for (double a : {0.25, 0.5, 2.0, 4.0}) {
    auto count = static_cast<std::size_t>(std::llround(10.0 / a / 0.005)) + 1;
    eg::UniformGrid cover(0.0, 0.005, count);
    auto scaled = eg::tabulate_generator(
        2, cover, [&](double t) { return a * g(a * t); });  // a^{d/2} = a at d=2
    auto ng = eg::normalize(scaled, 1.0, 1e-6, out);
    double worst = 0.0;
    for (std::size_t k = 0; k < out.count; ++k)
      worst = std::max(worst, std::abs(ng.base().table().values()[k] -
                                       ref.base().table().values()[k]));
    EXPECT_LT(worst, 1e-3) << "a = " << a;
  }
  // the in-place variant collapses as well once the support fits the grid
  auto half = eg::normalize(eg::scale_generator(g, 2.0), 1.0, 1e-6, out);
  for (std::size_t k = 0; k < out.count; ++k)
    EXPECT_NEAR(half.base().table().values()[k], ref.base().table().values()[k], 1e-3);
}

TEST(Normalize, ResidualsAssertedOnConstruction) {
  auto g = exp_generator(2);
  EXPECT_THROW(
      eg::NormalizedGenerator(g, 1.0, {1e-2, 0.0}, 1e-6),
      eg::InvariantError);
}

TEST(Normalize, GridTooShortOnCompression) {
  // target grid 10x shorter than the support of a slowly-decaying input
  auto g = eg::tabulate_generator(2, eg::UniformGrid(0.0, 0.005, 2001),
                                  [](double t) { return std::exp(-0.05 * t); });
  eg::UniformGrid tiny(0.0, 0.005, 21);  // [0, 0.1]
  EXPECT_THROW(eg::normalize(g, 1.0, 1e-6, tiny), eg::GridTooShortError);
}

TEST(ScaleGenerator, Basics) {
  auto g = exp_generator(2);
  auto same = eg::scale_generator(g, 1.0);
  for (std::size_t k = 0; k < g.grid().count; ++k)
    EXPECT_DOUBLE_EQ(same.table().values()[k], g.table().values()[k]);

  auto doubled = eg::scale_generator(g, 2.0);  // d=2: 2 e^{-2t}
  for (double t : {0.0, 0.3, 1.7}) EXPECT_NEAR(doubled(t), 2.0 * std::exp(-2.0 * t), 1e-4);

  // composition law (g_a)_b = g_{ab}, within interpolation tolerance
  auto ab = eg::scale_generator(eg::scale_generator(g, 2.0), 0.5);
  for (std::size_t k = 0; k < g.grid().count; ++k)
    EXPECT_NEAR(ab.table().values()[k], g.table().values()[k], 5e-5);

  EXPECT_THROW(eg::scale_generator(g, 0.0), eg::InvariantError);
}

TEST(MarginalDensity, GaussianOracle) {
  // standard Gaussian generator has the standard normal marginal, any d
  for (int d : {2, 4}) {
    auto law = eg::marginal_density(gauss_generator(d));
    double sup = sup_diff_with(law.density, 0.0, 3.0, +[](double t) {
      return std::exp(-0.5 * t * t) / std::sqrt(2.0 * eg::kPi);
    });
    EXPECT_LT(sup, 1e-4) << "d = " << d;
    EXPECT_NEAR(law.mass, 1.0, 1e-3);
    EXPECT_TRUE(law.warnings.empty());
  }
}

TEST(MarginalDensity, EvenExtensionAndCenterValue) {
  auto ng = eg::normalize(exp_generator(2), 1.0);
  auto law = eg::marginal_density(ng.base());
  EXPECT_NEAR(law.density_at(0.0), 1.0, 1e-4);  // f_g(0) = b = 1
  for (double t : {0.2, 0.9, 2.3}) EXPECT_DOUBLE_EQ(law.density_at(-t), law.density_at(t));
}

TEST(MarginalCdf, SymmetryAndTail) {
  auto ng = eg::normalize(exp_generator(2), 1.0);  // e^{-pi t}: marginal N(0, 1/(2pi))
  auto law = eg::marginal_law(ng.base());
  EXPECT_DOUBLE_EQ(law.cdf_at(0.0), 0.5);
  EXPECT_GE(law.cdf_at(law.x_max()), 0.999);
  for (double x : {0.1, 0.5, 1.2}) EXPECT_NEAR(law.cdf_at(-x), 1.0 - law.cdf_at(x), 1e-12);
  // closed form F(x) = Phi(x sqrt(2 pi)); the 0.005 lattice carries a
  // systematic interpolation bias of order 1e-5
  for (double x : {0.1, 0.3, 0.8})
    EXPECT_NEAR(law.cdf_at(x), eg::norm_cdf(x * std::sqrt(2.0 * eg::kPi)), 3e-5);
}

TEST(MarginalQuantile, ClosedFormAndRoundTrip) {
  auto ng = eg::normalize(exp_generator(2), 1.0);
  auto law = eg::marginal_law(ng.base());
  EXPECT_DOUBLE_EQ(eg::marginal_quantile(law, 0.5), 0.0);
  // marginal is N(0, 1/(2pi)): Q(Phi(1)) = 1/sqrt(2 pi)
  EXPECT_NEAR(eg::marginal_quantile(law, eg::norm_cdf(1.0)), 1.0 / std::sqrt(2.0 * eg::kPi),
              5e-5);
  // odd symmetry
  for (double u : {0.01, 0.2, 0.47})
    EXPECT_NEAR(eg::marginal_quantile(law, 1.0 - u), -eg::marginal_quantile(law, u), 1e-9);
  // round trip through the same table
  double worst = 0.0;
  for (double u = 0.01; u <= 0.99; u += 0.005) {
    double x = eg::marginal_quantile(law, u);
    worst = std::max(worst, std::abs(law.cdf_at(x) - u));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(MarginalQuantile, DomainAndClamp) {
  auto ng = eg::normalize(exp_generator(2), 1.0);
  auto law = eg::marginal_law(ng.base());
  EXPECT_THROW(eg::marginal_quantile(law, 0.0), eg::OutOfDomainError);
  EXPECT_THROW(eg::marginal_quantile(law, 1.0), eg::OutOfDomainError);

  // a short table leaves genuine tail mass outside [-x_max, x_max]; quantile
  // arguments beyond the tabulated cdf range clamp and are counted
  eg::UniformGrid short_grid(0.0, 0.005, 201);  // T_max = 1
  auto short_gauss = eg::tabulate_generator(
      2, short_grid, [](double t) { return std::exp(-eg::kPi * t); });
  auto short_law = eg::marginal_law(short_gauss);
  EXPECT_FALSE(short_law.warnings.empty());
  std::size_t clamps = 0;
  double q = eg::marginal_quantile(short_law, 1e-4, &clamps);
  EXPECT_DOUBLE_EQ(q, -short_law.x_max());
  double q_hi = eg::marginal_quantile(short_law, 1.0 - 1e-4, &clamps);
  EXPECT_DOUBLE_EQ(q_hi, short_law.x_max());
  EXPECT_EQ(clamps, 2u);
}

TEST(SubvectorGenerator, MarginalConsistency) {
  // g_1(t^2) equals the marginal density, checked on 100 points
  auto ng = eg::normalize(exp_generator(3), 1.0);
  auto g1 = eg::subvector_generator(ng.base(), 1);
  auto law = eg::marginal_density(ng.base());
  for (int k = 0; k < 100; ++k) {
    double t = 0.01 + 0.03 * k;
    EXPECT_NEAR(g1(t * t), law.density_at(t), 1e-4) << "t = " << t;
  }
}

TEST(SubvectorGenerator, GaussianClosedForm) {
  // d=4 Gaussian, m=2: g_2(u) = e^{-u/2} / (2 pi)
  auto g2 = eg::subvector_generator(gauss_generator(4, 25.0), 2);
  EXPECT_EQ(g2.dim(), 2);
  for (double u : {0.0, 0.5, 2.0, 5.0})
    EXPECT_NEAR(g2(u), std::exp(-0.5 * u) / (2.0 * eg::kPi), 1e-5);
}

TEST(SubvectorGenerator, DomainChecks) {
  auto g = exp_generator(3);
  EXPECT_THROW(eg::subvector_generator(g, 3), eg::InvariantError);
  EXPECT_THROW(eg::subvector_generator(g, 0), eg::InvariantError);
}

TEST(Generator, Invariants) {
  eg::UniformGrid g(0.0, 0.5, 3);
  EXPECT_THROW(eg::Generator(2, eg::TabulatedFunction(g, {1.0, -0.1, 0.0})),
               eg::InvariantError);
  EXPECT_THROW(eg::Generator(0, eg::TabulatedFunction(g, {1.0, 0.5, 0.0})),
               eg::InvariantError);
}

TEST(ScaleGenerator, TruncationWarningForSmallA) {
  auto g = exp_generator(2);
  eg::Warnings w;
  eg::scale_generator(g, 0.25, &w);  // output reaches the input only to 2.5
  EXPECT_FALSE(w.empty());
  w.clear();
  eg::scale_generator(g, 2.0, &w);  // compression keeps everything
  EXPECT_TRUE(w.empty());
}

TEST(SubvectorGenerator, TailWarningPropagates) {
  auto heavy = eg::tabulate_generator(3, eg::default_generator_grid(),
                                      [](double t) { return 1.0 / (1.0 + t * t); });
  eg::Warnings w;
  eg::subvector_generator(heavy, 1, &w);
  EXPECT_FALSE(w.empty());
}
