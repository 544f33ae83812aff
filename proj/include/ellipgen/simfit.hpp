#ifndef ELLIPGEN_SIMFIT_HPP
#define ELLIPGEN_SIMFIT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ellipgen/copula.hpp"
#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/elliptical.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/rng.hpp"

namespace ellipgen {

// ---------------------------------------------------------------------------
// Parametric generator families.
//   pearson7: g(t) = (1 + t/m)^{-N},  m > 0; N > d/2 keeps the generator
//             integrable (identifiability theory asks for N > 1 + d/2, but
//             candidates down to the integrability bound remain valid
//             densities and are legal grid points)
//   kotz:     g(t) = exp(-lambda t^beta),  lambda > 0, 0 < beta <= 1
// Generators are tabulated on an extended lattice and normalized with b = 1;
// the multiplicative family constant is absorbed by the normalization.
// ---------------------------------------------------------------------------

enum class FamilyKind { Pearson7, Kotz };

struct ThetaPair {
  double p1 = 0.0;  // pearson7: m,     kotz: lambda
  double p2 = 0.0;  // pearson7: N,     kotz: beta
};

inline bool theta_admissible(FamilyKind kind, const ThetaPair& theta, int d) {
  if (kind == FamilyKind::Pearson7) return theta.p1 > 0.0 && theta.p2 > 0.5 * d;
  return theta.p1 > 0.0 && theta.p2 > 0.0 && theta.p2 <= 1.0;
}

/// Grid long enough to carry the slow Pearson-VII tails before normalization.
inline UniformGrid extended_family_grid() { return UniformGrid(0.0, 0.005, 20001); }

inline NormalizedGenerator family_generator(FamilyKind kind, const ThetaPair& theta, int d,
                                            const UniformGrid& grid = extended_family_grid()) {
  if (!theta_admissible(kind, theta, d))
    throw InadmissibleThetaError("family_generator: parameters outside the admissible set");
  Generator raw = (kind == FamilyKind::Pearson7)
                      ? tabulate_generator(d, grid,
                                           [&](double t) {
                                             return std::pow(1.0 + t / theta.p1, -theta.p2);
                                           })
                      : tabulate_generator(d, grid, [&](double t) {
                          return std::exp(-theta.p1 * std::pow(t, theta.p2));
                        });
  return normalize(raw, 1.0, 1e-3);
}

struct ParametricFamily {
  FamilyKind kind = FamilyKind::Pearson7;
  std::vector<ThetaPair> grid;
};

// ---------------------------------------------------------------------------
// Empirical copula of the pseudo-observations:
//   C_n(u) = n^{-1} sum_i 1(U_i <= u componentwise).
// ---------------------------------------------------------------------------

inline double empirical_copula(const PseudoObs& U, const Eigen::VectorXd& u) {
  if (U.any_missing()) throw InvariantError("empirical_copula: data must be complete");
  if (u.size() != U.d()) throw InvariantError("empirical_copula: point dimension mismatch");
  const Eigen::Index n = U.n(), d = U.d();
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool dominated = true;
    for (Eigen::Index j = 0; j < d; ++j)
      if (U(i, j) > u(j)) {
        dominated = false;
        break;
      }
    if (dominated) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Discrepancies between the data copula and a simulated candidate
// ---------------------------------------------------------------------------

enum class DiscrepancyKind { Emp, Chi };

struct DiscrepancyConfig {
  DiscrepancyKind kind = DiscrepancyKind::Emp;
  Eigen::Index n_sim = 10000;
  int bins_per_dim = 4;  // chi only
  std::uint64_t seed = 0;

  void validate() const {
    if (n_sim < 100) throw InvariantError("DiscrepancyConfig: N_sim must be >= 100");
    if (kind == DiscrepancyKind::Chi && bins_per_dim < 1)
      throw InvariantError("DiscrepancyConfig: bins_per_dim must be >= 1");
  }
};

namespace detail {

/// Pooled marginal ecdf over all d * N simulated coordinates.
class PooledEcdf {
 public:
  explicit PooledEcdf(const Eigen::MatrixXd& Y) {
    pooled_.reserve(static_cast<std::size_t>(Y.size()));
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      for (Eigen::Index j = 0; j < Y.cols(); ++j) pooled_.push_back(Y(i, j));
    std::sort(pooled_.begin(), pooled_.end());
  }
  double operator()(double y) const {
    auto it = std::upper_bound(pooled_.begin(), pooled_.end(), y);
    return static_cast<double>(it - pooled_.begin()) / static_cast<double>(pooled_.size());
  }

 private:
  std::vector<double> pooled_;
};

/// H^(Y_i) = N^{-1} #{l : Y_l <= Y_i componentwise} for every sample point.
inline std::vector<double> joint_ecdf_at_points(const Eigen::MatrixXd& Y) {
  const Eigen::Index n = Y.rows(), d = Y.cols();
  std::vector<double> out(static_cast<std::size_t>(n));
  if (d == 2) {
    // sweep in x order with a Fenwick tree over y ranks
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (Y(a, 0) != Y(b, 0)) return Y(a, 0) < Y(b, 0);
      return Y(a, 1) < Y(b, 1);
    });
    std::vector<double> ys(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ys[static_cast<std::size_t>(i)] = Y(i, 1);
    std::sort(ys.begin(), ys.end());
    auto yrank = [&](double v) {  // 1-based rank of the last element <= v
      return static_cast<std::size_t>(std::upper_bound(ys.begin(), ys.end(), v) - ys.begin());
    };
    std::vector<Eigen::Index> fen(static_cast<std::size_t>(n) + 1, 0);
    auto fen_add = [&](std::size_t pos) {
      for (; pos <= static_cast<std::size_t>(n); pos += pos & (~pos + 1)) fen[pos] += 1;
    };
    auto fen_sum = [&](std::size_t pos) {
      Eigen::Index s = 0;
      for (; pos > 0; pos -= pos & (~pos + 1)) s += fen[pos];
      return s;
    };
    std::size_t k = 0;
    while (k < idx.size()) {
      std::size_t e = k;
      while (e + 1 < idx.size() && Y(idx[e + 1], 0) == Y(idx[k], 0)) ++e;
      for (std::size_t t = k; t <= e; ++t) fen_add(yrank(Y(idx[t], 1)));
      for (std::size_t t = k; t <= e; ++t)
        out[static_cast<std::size_t>(idx[t])] =
            static_cast<double>(fen_sum(yrank(Y(idx[t], 1)))) / static_cast<double>(n);
      k = e + 1;
    }
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    for (Eigen::Index l = 0; l < n; ++l) {
      bool dom = true;
      for (Eigen::Index j = 0; j < d; ++j)
        if (Y(l, j) > Y(i, j)) {
          dom = false;
          break;
        }
      if (dom) ++c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<double>(c) / static_cast<double>(n);
  }
  return out;
}

}  // namespace detail

/// Simulation-based discrepancy between the empirical copula of the data and
/// the candidate law E_d(0, Sigma^, g_theta), using common random numbers:
/// the same seed reproduces the same simulated sample for every theta.
inline double discrepancy(FamilyKind kind, const ThetaPair& theta, const PseudoObs& U,
                          const CorrMatrix& sigma, const DiscrepancyConfig& cfg) {
  cfg.validate();
  const int d = static_cast<int>(U.d());
  NormalizedGenerator g = family_generator(kind, theta, d);
  Rng rng(cfg.seed);
  EllipticalModel model(Eigen::VectorXd::Zero(d), sigma.mat(), g.base());
  DataMatrix sim = sample_elliptical(model, cfg.n_sim, rng);
  const Eigen::MatrixXd& Y = sim.entries();
  detail::PooledEcdf fhat(Y);

  if (cfg.kind == DiscrepancyKind::Emp) {
    std::vector<double> H = detail::joint_ecdf_at_points(Y);
    double acc = 0.0;
    Eigen::VectorXd v(d);
    for (Eigen::Index l = 0; l < Y.rows(); ++l) {
      for (int j = 0; j < d; ++j) v(j) = fhat(Y(l, j));
      double diff = empirical_copula(U, v) - H[static_cast<std::size_t>(l)];
      acc += diff * diff;
    }
    return acc / static_cast<double>(Y.rows());
  }

  // chi-squared style: per-dimension cuts at empirical quantiles of the
  // simulated sample; compare box masses of C_n o F^ and of H^.
  const int L = cfg.bins_per_dim;
  const Eigen::Index N = Y.rows();
  std::vector<std::vector<double>> cuts(static_cast<std::size_t>(d));
  std::vector<std::vector<double>> corner_u(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::vector<double> col(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) col[static_cast<std::size_t>(i)] = Y(i, j);
    std::sort(col.begin(), col.end());
    auto& c = cuts[static_cast<std::size_t>(j)];
    auto& cu = corner_u[static_cast<std::size_t>(j)];
    cu.push_back(0.0);  // -inf corner
    for (int q = 1; q < L; ++q) {
      double cut = col[static_cast<std::size_t>((static_cast<long long>(q) * N) / L)];
      c.push_back(cut);
      cu.push_back(fhat(cut));
    }
    cu.push_back(1.0);  // +inf corner
  }

  // values of C_n o F^ on the corner lattice
  const std::size_t corners_per_dim = static_cast<std::size_t>(L) + 1;
  std::size_t total_corners = 1;
  for (int j = 0; j < d; ++j) total_corners *= corners_per_dim;
  std::vector<double> corner_val(total_corners);
  Eigen::VectorXd v(d);
  for (std::size_t idx = 0; idx < total_corners; ++idx) {
    std::size_t rest = idx;
    bool zero = false;
    for (int j = 0; j < d; ++j) {
      std::size_t c = rest % corners_per_dim;
      rest /= corners_per_dim;
      double uj = corner_u[static_cast<std::size_t>(j)][c];
      if (uj <= 0.0) zero = true;
      v(j) = uj;
    }
    corner_val[idx] = zero ? 0.0 : empirical_copula(U, v);
  }

  // box masses of H^ by direct binning
  std::size_t total_boxes = 1;
  for (int j = 0; j < d; ++j) total_boxes *= static_cast<std::size_t>(L);
  std::vector<double> box_mass(total_boxes, 0.0);
  for (Eigen::Index i = 0; i < N; ++i) {
    std::size_t idx = 0, mult = 1;
    for (int j = 0; j < d; ++j) {
      const auto& c = cuts[static_cast<std::size_t>(j)];
      std::size_t bin =
          static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), Y(i, j)) - c.begin());
      // point on a cut belongs to the lower box (boxes are (c_{k-1}, c_k])
      if (bin > 0 && Y(i, j) <= c[bin - 1]) --bin;
      idx += bin * mult;
      mult *= static_cast<std::size_t>(L);
    }
    box_mass[idx] += 1.0;
  }
  for (double& bm : box_mass) bm /= static_cast<double>(N);

  double acc = 0.0;
  for (std::size_t b = 0; b < total_boxes; ++b) {
    std::size_t rest = b;
    std::vector<std::size_t> lo(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      lo[static_cast<std::size_t>(j)] = rest % static_cast<std::size_t>(L);
      rest /= static_cast<std::size_t>(L);
    }
    double inc = 0.0;
    for (std::size_t m = 0; m < (std::size_t{1} << d); ++m) {
      std::size_t idx = 0, mult = 1;
      int ones = 0;
      for (int j = 0; j < d; ++j) {
        std::size_t bit = (m >> j) & 1u;
        ones += static_cast<int>(bit);
        idx += (lo[static_cast<std::size_t>(j)] + bit) * mult;
        mult *= corners_per_dim;
      }
      double sign = ((d - ones) % 2 == 0) ? 1.0 : -1.0;
      inc += sign * corner_val[idx];
    }
    acc += std::abs(inc - box_mass[b]);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Grid-search fit
// ---------------------------------------------------------------------------

struct SimFitResult {
  ThetaPair theta_hat;
  std::vector<std::pair<ThetaPair, double>> table;
  CorrMatrix sigma;

  explicit SimFitResult(CorrMatrix s) : sigma(std::move(s)) {}
};

inline SimFitResult simfit_estimate(const DataMatrix& X, const ParametricFamily& family,
                                    const DiscrepancyConfig& cfg) {
  if (family.grid.empty()) throw InvariantError("simfit_estimate: empty parameter grid");
  X.validate();
  PseudoObs U = pseudo_observations(X);
  CorrMatrix sigma = corr_from_tau(kendall_tau_matrix(X));

  SimFitResult result(sigma);
  double best = std::numeric_limits<double>::infinity();
  for (const ThetaPair& theta : family.grid) {
    double v = discrepancy(family.kind, theta, U, sigma, cfg);
    result.table.emplace_back(theta, v);
    if (v < best) {
      best = v;
      result.theta_hat = theta;
    }
  }
  return result;
}

}  // namespace ellipgen

#endif  // ELLIPGEN_SIMFIT_HPP
