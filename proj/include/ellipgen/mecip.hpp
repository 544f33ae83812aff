#ifndef ELLIPGEN_MECIP_HPP
#define ELLIPGEN_MECIP_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
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

enum class InitKind { Gaussian, Identity, InvPhi };
enum class EstimatorKind { Liebscher, StuteWerner };

struct MecipConfig {
  double b = 1.0;
  double a = 1.0;
  double h = 0.1;
  UniformGrid grid = default_generator_grid();
  InitKind init = InitKind::Identity;
  EstimatorKind estimator = EstimatorKind::Liebscher;
  int n_max = 10;
  double tol = 1e-4;
  std::uint64_t seed = 0;
  double tol_norm = 1e-3;  // residual tolerance for estimated (noisy) generators

  void validate() const {
    if (!(a > 0.0 && h > 0.0 && b > 0.0))
      throw InvariantError("MecipConfig: a, h, b must be > 0");
    if (n_max < 1) throw InvariantError("MecipConfig: N_max must be >= 1");
    if (!(tol > 0.0)) throw InvariantError("MecipConfig: tol must be > 0");
  }
};

using EstimatorFn = std::function<Generator(const DataMatrix&, const CorrMatrix&)>;

inline EstimatorFn make_estimator(const MecipConfig& cfg) {
  if (cfg.estimator == EstimatorKind::Liebscher) {
    KernelConfig kc(cfg.a, cfg.h, cfg.grid);
    return [kc](const DataMatrix& Z, const CorrMatrix& sigma) {
      return liebscher_estimate(Z, sigma, kc);
    };
  }
  double h = cfg.h;
  UniformGrid grid = cfg.grid;
  return [h, grid](const DataMatrix& Z, const CorrMatrix& sigma) {
    return stute_werner_estimate(Z, sigma, h, grid);
  };
}

// ---------------------------------------------------------------------------
// Initialization strategies
// ---------------------------------------------------------------------------

namespace detail {

/// Rows of U with no missing entry, as a plain data matrix.
inline DataMatrix complete_rows(const PseudoObs& U) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < U.n(); ++i) {
    bool ok = true;
    for (Eigen::Index j = 0; j < U.d(); ++j)
      if (U.is_missing(i, j)) {
        ok = false;
        break;
      }
    if (ok) rows.push_back(i);
  }
  if (rows.size() < 2)
    throw InvariantError("initialize: fewer than 2 complete rows for a data-based start");
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), U.d());
  for (std::size_t k = 0; k < rows.size(); ++k) M.row(static_cast<Eigen::Index>(k)) = U.entries().row(rows[k]);
  return DataMatrix(std::move(M));
}

}  // namespace detail

/// The three initializations: the closed-form Gaussian start
/// (normalize(e^{-x}, b) = b^d e^{-pi b^2 t} via I1 = Gamma(d/2),
/// I2 = Gamma((d-1)/2)), the "identity" start (estimator applied to the
/// pseudo-observations as if they lived on R^d), and the inv-Phi start
/// (estimator applied to the normal scores of the pseudo-observations).
inline NormalizedGenerator initialize(const MecipConfig& cfg, const PseudoObs& U,
                                      const CorrMatrix& sigma) {
  cfg.validate();
  const int d = static_cast<int>(U.d());
  switch (cfg.init) {
    case InitKind::Gaussian: {
      const double beta = kPi * cfg.b * cfg.b;
      const double alpha = std::pow(cfg.b, d);
      Generator g = tabulate_generator(d, cfg.grid,
                                       [&](double t) { return alpha * std::exp(-beta * t); });
      return normalize(g, cfg.b, cfg.tol_norm);
    }
    case InitKind::Identity: {
      DataMatrix Z = detail::complete_rows(U);
      return normalize(make_estimator(cfg)(Z, sigma), cfg.b, cfg.tol_norm);
    }
    case InitKind::InvPhi: {
      DataMatrix Z = detail::complete_rows(U);
      Eigen::MatrixXd M = Z.entries();
      for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = norm_quantile(M(i, j));
      DataMatrix scores(std::move(M));
      return normalize(make_estimator(cfg)(scores, sigma), cfg.b, cfg.tol_norm);
    }
  }
  throw InvariantError("initialize: unknown initialization");
}

// ---------------------------------------------------------------------------
// Missing-entry completion: each incomplete row is completed with a draw from
// the conditional elliptical law given its observed entries (mu = 0,
// dispersion = sigma, generator = the current normalized estimate).
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd impute_missing(const Eigen::MatrixXd& Z,
                                      const std::vector<std::uint8_t>& mask,
                                      const CorrMatrix& sigma, const NormalizedGenerator& g,
                                      Rng& rng) {
  const Eigen::Index n = Z.rows(), d = Z.cols();
  Eigen::MatrixXd out = Z;
  if (mask.empty()) return out;
  EllipticalModel base(Eigen::VectorXd::Zero(d), sigma.mat(), g.base());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<int> obs, miss;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (mask[static_cast<std::size_t>(i * d + j)])
        miss.push_back(static_cast<int>(j));
      else
        obs.push_back(static_cast<int>(j));
    }
    if (miss.empty()) continue;
    if (obs.empty()) throw InvariantError("impute_missing: fully missing row");
    Eigen::VectorXd z_obs(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) z_obs(static_cast<Eigen::Index>(k)) = Z(i, obs[k]);
    EllipticalModel cond = conditional_model(base, obs, z_obs);
    DataMatrix draw = sample_elliptical(cond, 1, rng);
    for (std::size_t k = 0; k < miss.size(); ++k) out(i, miss[k]) = draw(0, static_cast<Eigen::Index>(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iteration state and result
// ---------------------------------------------------------------------------

struct MecipState {
  int iteration = 0;
  NormalizedGenerator g_current;
  Eigen::MatrixXd z_current;
  CorrMatrix sigma;
  std::vector<double> history;  // successive L2 grid distances
  std::size_t clamp_count = 0;

  MecipState(NormalizedGenerator g, CorrMatrix s)
      : g_current(std::move(g)), sigma(std::move(s)) {}
};

struct MecipResult {
  NormalizedGenerator g_final;
  NormalizedGenerator g_init;
  CorrMatrix sigma;
  std::vector<double> history;
  bool converged = false;
  int iterations = 0;
  std::size_t clamp_count = 0;
  Warnings warnings;

  MecipResult(NormalizedGenerator gf, NormalizedGenerator gi, CorrMatrix s)
      : g_final(std::move(gf)), g_init(std::move(gi)), sigma(std::move(s)) {}
};

/// One MECIP iteration: quantile-transform the pseudo-observations through
/// the current generator, complete missing entries, re-estimate, normalize,
/// and record the L2 distance moved.
inline MecipState mecip_step(MecipState state, const PseudoObs& U, const MecipConfig& cfg,
                             Rng& rng, const EstimatorFn& estimator) {
  const Eigen::Index n = U.n(), d = U.d();
  const double lo = 1.0 / (2.0 * static_cast<double>(n));
  const double hi = 1.0 - lo;

  MarginalLaw law = marginal_law(state.g_current.base());
  Eigen::MatrixXd Z(n, d);
  std::size_t clamps = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (U.is_missing(i, j)) {
        Z(i, j) = 0.0;  // replaced by the imputation below
        continue;
      }
      double u = U(i, j);
      if (u < lo || u > hi) {
        u = std::clamp(u, lo, hi);
        ++clamps;
      }
      Z(i, j) = marginal_quantile(law, u, &clamps);
    }
  if (U.any_missing()) Z = impute_missing(Z, U.mask(), state.sigma, state.g_current, rng);

  DataMatrix data(Z);
  NormalizedGenerator g_new =
      normalize(estimator(data, state.sigma), cfg.b, cfg.tol_norm, cfg.grid);
  double dist = grid_l2_distance(g_new.base().table(), state.g_current.base().table());

  state.z_current = std::move(Z);
  state.g_current = std::move(g_new);
  state.history.push_back(dist);
  state.clamp_count += clamps;
  state.iteration += 1;
  return state;
}

/// Full MECIP run: pseudo-observations, Kendall-tau correlation with PSD
/// repair, initialization, then iterations until the L2 move falls below tol
/// or the iteration cap is reached.
inline MecipResult mecip_estimate(const DataMatrix& X, const MecipConfig& cfg) {
  cfg.validate();
  X.validate();
  PseudoObs U = pseudo_observations(X);
  CorrMatrix sigma = corr_from_tau(kendall_tau_matrix(X));
  NormalizedGenerator g0 = initialize(cfg, U, sigma);
  EstimatorFn estimator = make_estimator(cfg);
  Rng rng(cfg.seed);

  MecipState state(g0, sigma);
  bool converged = false;
  while (state.iteration < cfg.n_max) {
    state = mecip_step(std::move(state), U, cfg, rng, estimator);
    if (state.history.back() < cfg.tol) {
      converged = true;
      break;
    }
  }
  MecipResult result(std::move(state.g_current), std::move(g0), std::move(state.sigma));
  result.history = std::move(state.history);
  result.converged = converged;
  result.iterations = state.iteration;
  result.clamp_count = state.clamp_count;
  if (state.clamp_count > 0)
    result.warnings.push_back(
        {WarningKind::QuantileClamp,
         std::to_string(state.clamp_count) + " quantile arguments clamped"});
  if (!converged)
    result.warnings.push_back({WarningKind::NoConvergence, "iteration cap reached"});
  return result;
}

}  // namespace ellipgen

#endif  // ELLIPGEN_MECIP_HPP
