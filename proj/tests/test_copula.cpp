#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ellipgen/copula.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/rng.hpp"

namespace eg = ellipgen;

namespace {

eg::NormalizedGenerator normalized_gauss(int d) {
  auto g = eg::tabulate_generator(d, eg::default_generator_grid(),
                                  [](double t) { return std::exp(-t); });
  return eg::normalize(g, 1.0);
}

Eigen::MatrixXd corr2(double rho) {
  Eigen::MatrixXd S(2, 2);
  S << 1.0, rho, rho, 1.0;
  return S;
}

}  // namespace

TEST(PseudoObservations, HandRanks) {
  Eigen::MatrixXd X(3, 1);
  X << 3.1, 1.2, 2.5;
  auto U = eg::pseudo_observations(eg::DataMatrix(X));
  EXPECT_DOUBLE_EQ(U(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(U(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(U(2, 0), 0.50);
}

TEST(PseudoObservations, TiesGetAverageRanks) {
  Eigen::MatrixXd X(4, 1);
  X << 2.0, 1.0, 2.0, 5.0;
  auto U = eg::pseudo_observations(eg::DataMatrix(X));
  EXPECT_DOUBLE_EQ(U(0, 0), 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(U(1, 0), 1.0 / 5.0);
  EXPECT_DOUBLE_EQ(U(2, 0), 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(U(3, 0), 4.0 / 5.0);
}

TEST(PseudoObservations, MissingStaysMissingAndRanksSkipIt) {
  Eigen::MatrixXd X(4, 2);
  X << 1.0, 9.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0;
  std::vector<std::uint8_t> mask = {0, 0, 0, 1, 0, 0, 0, 0};
  auto U = eg::pseudo_observations(eg::DataMatrix(X, mask));
  EXPECT_TRUE(U.is_missing(1, 1));
  // column 2 ranks computed over the 3 observed entries
  EXPECT_DOUBLE_EQ(U(3, 1), 0.25);
  EXPECT_DOUBLE_EQ(U(2, 1), 0.50);
  EXPECT_DOUBLE_EQ(U(0, 1), 0.75);
}

TEST(PseudoObservations, StrictlyInterior) {
  eg::Rng rng(1);
  Eigen::MatrixXd X(50, 3);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
  auto U = eg::pseudo_observations(eg::DataMatrix(X));
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 3; ++j) {
      EXPECT_GT(U(i, j), 0.0);
      EXPECT_LT(U(i, j), 1.0);
    }
}

TEST(PseudoObservations, RankInvarianceUnderMonotoneTransform) {
  eg::Rng rng(2);
  Eigen::MatrixXd X(40, 2);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 2; ++j) X(i, j) = rng.normal();
  auto U1 = eg::pseudo_observations(eg::DataMatrix(X));
  Eigen::MatrixXd Y = X.array().exp().matrix();
  auto U2 = eg::pseudo_observations(eg::DataMatrix(Y));
  EXPECT_TRUE(U1.entries() == U2.entries());
}

TEST(PseudoObservations, DegenerateColumn) {
  Eigen::MatrixXd X(3, 1);
  X << 2.0, 2.0, 2.0;
  EXPECT_THROW(eg::pseudo_observations(eg::DataMatrix(X)), eg::DegenerateColumnError);
}

TEST(KendallTau, HandValues) {
  {
    Eigen::MatrixXd X(4, 2);
    X << 1, 1, 2, 3, 3, 2, 4, 4;
    auto tau = eg::kendall_tau_matrix(eg::DataMatrix(X));
    EXPECT_NEAR(tau(0, 1), 2.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(tau(0, 0), 1.0);
  }
  {
    Eigen::MatrixXd X(5, 2);
    X.col(0) << 1, 2, 3, 4, 5;
    X.col(1) = X.col(0);
    EXPECT_DOUBLE_EQ(eg::kendall_tau_matrix(eg::DataMatrix(X))(0, 1), 1.0);
    X.col(1) << 5, 4, 3, 2, 1;
    EXPECT_DOUBLE_EQ(eg::kendall_tau_matrix(eg::DataMatrix(X))(0, 1), -1.0);
  }
}

TEST(KendallTau, PairwiseComplete) {
  // third row only complete for the pair (0,1)
  Eigen::MatrixXd X(4, 3);
  X << 1, 1, 1, 2, 3, 4, 3, 2, 2, 4, 4, 3;
  std::vector<std::uint8_t> mask(12, 0);
  mask[2 * 3 + 2] = 1;  // X(2,2) missing
  auto tau = eg::kendall_tau_matrix(eg::DataMatrix(X, mask));
  // pair (0,1) uses all 4 rows: hand count gives 2/3
  EXPECT_NEAR(tau(0, 1), 2.0 / 3.0, 1e-15);
  // pair (0,2) uses rows {0,1,3}: values (1,1),(2,4),(4,3): concordant pairs
  // (0,1),(0,3) and discordant (1,3) -> (2-1)/3
  EXPECT_NEAR(tau(0, 2), 1.0 / 3.0, 1e-15);
}

TEST(KendallTau, BruteForceMatchesKnight) {
  eg::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 50 + static_cast<std::size_t>(rng.uniform01() * 200);
    std::vector<double> x(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
      // coarse rounding produces plenty of ties
      x[i] = std::floor(rng.uniform01() * 20.0);
      y[i] = std::floor(x[i] + rng.normal() * 5.0);
    }
    double a = eg::detail::kendall_tau_bruteforce(x, y);
    double b = eg::detail::kendall_tau_knight(x, y);
    EXPECT_NEAR(a, b, 1e-13) << "trial " << trial;
  }
}

TEST(CorrFromTau, SinMapValues) {
  Eigen::MatrixXd tau = Eigen::MatrixXd::Identity(2, 2);
  tau(0, 1) = tau(1, 0) = 0.0;
  EXPECT_DOUBLE_EQ(eg::corr_from_tau(tau)(0, 1), 0.0);
  tau(0, 1) = tau(1, 0) = 1.0 / 3.0;
  EXPECT_NEAR(eg::corr_from_tau(tau)(0, 1), 0.5, 1e-15);
  // tau = 1 maps to a singular matrix; the mandatory PSD repair leaves the
  // off-diagonal at 1 up to the invertibility margin
  tau(0, 1) = tau(1, 0) = 1.0;
  EXPECT_NEAR(eg::corr_from_tau(tau)(0, 1), 1.0, 2e-6);
}

TEST(CorrFromTau, ProjectionKicksIn) {
  // an inconsistent tau triple whose sin image is indefinite
  Eigen::MatrixXd tau = Eigen::MatrixXd::Identity(3, 3);
  auto set = [&](int i, int j, double v) { tau(i, j) = tau(j, i) = v; };
  set(0, 1, 0.9);
  set(1, 2, 0.9);
  set(0, 2, -0.9);
  auto S = eg::corr_from_tau(tau);
  EXPECT_GE(S.min_eigenvalue(), eg::kEpsInv - 1e-10);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(S(i, i), 1.0);
}

TEST(ProjectPsd, FixedPointForPd) {
  Eigen::MatrixXd M = corr2(0.3);
  auto r = eg::project_psd_raw(M, eg::kEpsInv);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.matrix - M).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ProjectPsd, ClipsTwoByTwo) {
  Eigen::MatrixXd M = corr2(1.2);
  auto S = eg::project_psd(M, 1e-4);
  EXPECT_DOUBLE_EQ(S(0, 0), 1.0);
  EXPECT_LE(std::abs(S(0, 1)), 1.0 - 1e-5);
  EXPECT_GE(S.min_eigenvalue(), 1e-4 - 1e-10);
}

TEST(ProjectPsd, IdempotentOnOwnOutput) {
  Eigen::MatrixXd M(3, 3);
  M << 1.0, 0.95, -0.8, 0.95, 1.0, 0.6, -0.8, 0.6, 1.0;
  auto first = eg::project_psd_raw(M, eg::kEpsInv);
  auto second = eg::project_psd_raw(first.matrix, eg::kEpsInv);
  EXPECT_LT((second.matrix - first.matrix).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(CopulaDensity, IndependenceIsUnit) {
  auto ng = normalized_gauss(2);
  eg::CopulaDensity c(ng, eg::CorrMatrix::identity(2));
  eg::Rng rng(3);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd u(2);
    u << 0.01 + 0.98 * rng.uniform01(), 0.01 + 0.98 * rng.uniform01();
    worst = std::max(worst, std::abs(c(u) - 1.0));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(CopulaDensity, CenterValue) {
  // c(1/2,...,1/2) = g(0) / (|Sigma|^{1/2} b^d)
  auto ng = normalized_gauss(2);
  eg::CorrMatrix sigma(corr2(0.2));
  eg::CopulaDensity c(ng, sigma);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(2, 0.5);
  double expected = ng.base()(0.0) / std::sqrt(1.0 - 0.2 * 0.2);
  EXPECT_NEAR(c(u), expected, 1e-6);
}

TEST(CopulaDensity, GaussianCopulaClosedForm) {
  // the meta-elliptical copula of the Gaussian generator is the Gaussian
  // copula; compare against its closed form at a few points
  auto ng = normalized_gauss(2);
  const double rho = 0.2;
  eg::CopulaDensity c(ng, eg::CorrMatrix(corr2(rho)));
  auto gauss_copula = [&](double u1, double u2) {
    double x = eg::norm_quantile(u1), y = eg::norm_quantile(u2);
    double det = 1.0 - rho * rho;
    return std::exp(-(rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * det)) /
           std::sqrt(det);
  };
  for (double u1 : {0.2, 0.5, 0.85})
    for (double u2 : {0.1, 0.6, 0.9}) {
      Eigen::VectorXd u(2);
      u << u1, u2;
      EXPECT_NEAR(c(u), gauss_copula(u1, u2), 2e-3) << u1 << "," << u2;
    }
}

TEST(CopulaDensity, ScaleFamilyInvariance) {
  // c_g = c_{g_a}: the scale family leaves the copula density unchanged
  auto ng = normalized_gauss(2);
  eg::CorrMatrix sigma(corr2(0.2));
  eg::CopulaDensity c_ref(ng, sigma);
  eg::Rng rng(8);
  for (double a : {0.5, 2.0}) {
    auto scaled = eg::scale_generator(ng.base(), a);
    // g_a keeps unit mass and has f_{g_a}(0) = sqrt(a) b
    auto ng_a = eg::normalize(scaled, std::sqrt(a), 1e-3);
    eg::CopulaDensity c_a(ng_a, sigma);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd u(2);
      u << 0.01 + 0.98 * rng.uniform01(), 0.01 + 0.98 * rng.uniform01();
      worst = std::max(worst, std::abs(c_ref(u) - c_a(u)));
    }
    EXPECT_LT(worst, 1e-3) << "a = " << a;
  }
}

TEST(CopulaDensity, BoundaryRejected) {
  auto ng = normalized_gauss(2);
  eg::CopulaDensity c(ng, eg::CorrMatrix::identity(2));
  Eigen::VectorXd u(2);
  u << 0.0, 0.5;
  EXPECT_THROW(c(u), eg::OutOfDomainError);
  u << 0.5, 1.0;
  EXPECT_THROW(c(u), eg::OutOfDomainError);
}

TEST(CopulaDensity, MonteCarloMassNearOne) {
  // mean of c over uniform points on (0,1)^2 approximates its total mass
  auto ng = normalized_gauss(2);
  eg::CopulaDensity c(ng, eg::CorrMatrix(corr2(0.2)));
  eg::Rng rng(12345);
  double acc = 0.0;
  const int n = 100000;
  Eigen::VectorXd u(2);
  for (int k = 0; k < n; ++k) {
    u << rng.uniform01(), rng.uniform01();
    if (u(0) <= 0.0 || u(1) <= 0.0) {
      ++acc;
      continue;
    }
    acc += c(u);
  }
  EXPECT_NEAR(acc / n, 1.0, 0.02);
}

TEST(SampleMetaElliptical, EmptyAndUniformMargins) {
  auto ng = normalized_gauss(2);
  eg::CorrMatrix sigma(corr2(0.2));
  eg::Rng rng0(5);
  EXPECT_EQ(eg::sample_meta_elliptical(ng.base(), sigma, 0, rng0).n(), 0);

  const Eigen::Index n = 10000;
  eg::Rng rng(2718);
  auto U = eg::sample_meta_elliptical(ng.base(), sigma, n, rng);
  // KS uniformity per column at the 1% level
  for (int j = 0; j < 2; ++j) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = U(i, j);
    std::sort(col.begin(), col.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      worst = std::max(worst, std::abs(col[i] - static_cast<double>(i) / n));
      worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - col[i]));
    }
    EXPECT_LT(worst, 1.628 / std::sqrt(static_cast<double>(n))) << "column " << j;
  }
}

TEST(SampleMetaElliptical, KendallTauMatchesSinInverse) {
  // tau = (2/pi) arcsin(rho) = 0.12819... at rho = 0.2
  auto ng = normalized_gauss(2);
  eg::CorrMatrix sigma(corr2(0.2));
  eg::Rng rng(31415);
  auto U = eg::sample_meta_elliptical(ng.base(), sigma, 10000, rng);
  auto tau = eg::kendall_tau_matrix(U);
  EXPECT_NEAR(tau(0, 1), 2.0 / eg::kPi * std::asin(0.2), 0.03);
}

TEST(CorrMatrix, InvariantChecks) {
  Eigen::MatrixXd bad = corr2(0.2);
  bad(0, 0) = 0.9;
  EXPECT_THROW(eg::CorrMatrix{bad}, eg::InvariantError);
  Eigen::MatrixXd asym = corr2(0.2);
  asym(0, 1) = 0.3;
  EXPECT_THROW(eg::CorrMatrix{asym}, eg::InvariantError);
  EXPECT_THROW(eg::CorrMatrix{corr2(1.0)}, eg::InvariantError);  // singular
  EXPECT_NO_THROW(eg::CorrMatrix{corr2(0.999)});
}

TEST(DataMatrix, InvariantChecks) {
  Eigen::MatrixXd X(2, 2);
  X << 1, 2, 3, 4;
  std::vector<std::uint8_t> full_row = {1, 1, 0, 0};
  EXPECT_THROW(eg::DataMatrix(X, full_row).validate(), eg::InvariantError);
  std::vector<std::uint8_t> thin_col = {0, 1, 0, 1};
  EXPECT_THROW(eg::DataMatrix(X, thin_col).validate(), eg::InvariantError);
  EXPECT_NO_THROW(eg::DataMatrix(X).validate());
}

TEST(CorrFromTau, NearBoundaryChainStaysValid) {
  // rank pipeline on data from a nearly singular correlation still yields a
  // matrix satisfying every CorrMatrix invariant
  Eigen::MatrixXd S(3, 3);
  S << 1.0, -0.9, 0.2, -0.9, 1.0, 0.2, 0.2, 0.2, 1.0;
  auto g = eg::tabulate_generator(3, eg::default_generator_grid(),
                                  [](double t) { return std::exp(-t); });
  auto ng = eg::normalize(g, 1.0);
  eg::EllipticalModel model(Eigen::VectorXd::Zero(3), S, ng.base());
  eg::Rng rng(606);
  auto X = eg::sample_elliptical(model, 400, rng);
  auto est = eg::corr_from_tau(eg::kendall_tau_matrix(X));
  EXPECT_GE(est.min_eigenvalue(), eg::kEpsInv - 1e-10);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(est(i, i), 1.0);
  EXPECT_NEAR(est(0, 1), -0.9, 0.08);
}

TEST(CopulaDensity, InfiniteSentinelOnVanishingMarginal) {
  // compact-support generator: the marginal density vanishes at x_max, so a
  // quantile clamped to the edge drives c to the flagged infinity
  auto grid = eg::default_generator_grid();
  auto box = eg::tabulate_generator(2, grid, [](double t) { return t <= 1.0 ? 1.0 : 0.0; });
  auto ng = eg::normalize(box, 1.0, 1e-3);
  eg::CopulaDensity c(ng, eg::CorrMatrix::identity(2));
  Eigen::VectorXd u(2);
  u << 1.0 - 1e-12, 0.5;
  bool infinite = false;
  double v = c(u, &infinite);
  EXPECT_TRUE(infinite);
  EXPECT_TRUE(std::isinf(v));
}
