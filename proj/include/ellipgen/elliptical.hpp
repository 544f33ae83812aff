#ifndef ELLIPGEN_ELLIPTICAL_HPP
#define ELLIPGEN_ELLIPTICAL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/rng.hpp"

namespace ellipgen {

// ---------------------------------------------------------------------------
// Instrumental map of Liebscher's estimator:
//   psi_a(x) = -a + (a^{d/2} + x^{d/2})^{2/d},  psi_a(0) = 0, increasing.
// For d = 2 this is the identity for every a.
// ---------------------------------------------------------------------------

inline double psi_a(double x, double a, int d) {
  if (d == 2) return x;
  const double p = 0.5 * d;
  return -a + std::pow(std::pow(a, p) + std::pow(x, p), 2.0 / d);
}

/// psi_a'(t) * t^{1-d/2} in its combined form (a^{d/2}+t^{d/2})^{(2-d)/d},
/// finite at t = 0 where it equals a^{1-d/2}.
inline double psi_a_prefactor(double t, double a, int d) {
  if (d == 2) return 1.0;
  const double p = 0.5 * d;
  return std::pow(std::pow(a, p) + std::pow(t, p), (2.0 - d) / d);
}

// ---------------------------------------------------------------------------
// ModularLaw: density of the modular variable R, g_R(r) = s_d r^{d-1} g(r^2),
// with its cdf and monotone inverse for inverse-transform sampling.
// ---------------------------------------------------------------------------

class ModularLaw {
 public:
  explicit ModularLaw(const Generator& g) {
    const int d = g.dim();
    const double sd = sphere_surface(d);
    const double r_max = std::sqrt(g.t_max());
    const std::size_t count = 2 * g.grid().count + 1;
    UniformGrid rg(0.0, r_max / static_cast<double>(count - 1), count);
    std::vector<double> dens(count);
    for (std::size_t k = 0; k < count; ++k) {
      double r = rg.node(k);
      double rp = (d == 1) ? 1.0 : std::pow(r, d - 1);
      dens[k] = sd * rp * g(r * r);
    }
    cdf_.resize(count);
    cdf_[0] = 0.0;
    for (std::size_t k = 1; k < count; ++k)
      cdf_[k] = cdf_[k - 1] + 0.5 * (dens[k - 1] + dens[k]) * rg.step;
    total_ = cdf_.back();
    if (!(total_ > 0.0)) throw ZeroGeneratorError("ModularLaw: zero generator");
    density_ = TabulatedFunction(rg, std::move(dens));
  }

  const TabulatedFunction& density() const { return density_; }
  double total_mass() const { return total_; }

  /// P(R <= r), normalized so the tabulated mass is 1.
  double cdf_at(double r) const {
    const auto& rg = density_.grid();
    if (r <= 0.0) return 0.0;
    if (r >= rg.back()) return 1.0;
    double s = r / rg.step;
    auto k = static_cast<std::size_t>(s);
    double w = s - static_cast<double>(k);
    double c = cdf_[k] + w * (cdf_[k + 1] - cdf_[k]);
    // linear interpolation of the cumulative trapezoid; exact enough at the
    // lattice resolution
    return c / total_;
  }

  /// Monotone inverse of the cdf, u in [0, 1).
  double sample_radius(double u) const {
    const double target = u * total_;
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), target);
    if (it == cdf_.begin()) return 0.0;
    if (it == cdf_.end()) return density_.grid().back();
    std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
    double c0 = cdf_[j - 1], c1 = cdf_[j];
    double w = (c1 > c0) ? (target - c0) / (c1 - c0) : 0.0;
    return density_.grid().node(j - 1) + w * density_.grid().step;
  }

 private:
  TabulatedFunction density_;
  std::vector<double> cdf_;
  double total_ = 0.0;
};

// ---------------------------------------------------------------------------
// EllipticalModel: location mu, dispersion matrix, generator. The dispersion
// is a general SPD matrix so that conditional models (whose dispersion is a
// Schur complement, not unit-diagonal) fit the same type.
// ---------------------------------------------------------------------------

class EllipticalModel {
 public:
  EllipticalModel(Eigen::VectorXd mu, Eigen::MatrixXd dispersion, Generator gen)
      : mu_(std::move(mu)), dispersion_(std::move(dispersion)), gen_(std::move(gen)) {
    const Eigen::Index d = mu_.size();
    if (dispersion_.rows() != d || dispersion_.cols() != d)
      throw InvariantError("EllipticalModel: dispersion shape mismatch");
    if (gen_.dim() != static_cast<int>(d))
      throw InvariantError("EllipticalModel: generator dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dispersion_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < kEpsInv)
      throw FactorizationError("EllipticalModel: dispersion not positive definite");
  }

  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& dispersion() const { return dispersion_; }
  const Generator& gen() const { return gen_; }
  Eigen::Index d() const { return mu_.size(); }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd dispersion_;
  Generator gen_;
};

inline ModularLaw modular_law(const Generator& g) { return ModularLaw(g); }

// ---------------------------------------------------------------------------
// Polar-decomposition sampler: X = mu + R A^T V with A^T A = Sigma (Cholesky),
// V uniform on the unit sphere (normalized Gaussian draw), R by inverse
// transform on the tabulated modular cdf.
// ---------------------------------------------------------------------------

inline DataMatrix sample_elliptical(const EllipticalModel& model, Eigen::Index n, Rng& rng) {
  const Eigen::Index d = model.d();
  Eigen::LLT<Eigen::MatrixXd> llt(model.dispersion());
  if (llt.info() != Eigen::Success)
    throw FactorizationError("sample_elliptical: Cholesky factorization failed");
  const Eigen::MatrixXd L = llt.matrixL();
  ModularLaw law(model.gen());

  Eigen::MatrixXd out(n, d);
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      v(j) = rng.normal();
      norm2 += v(j) * v(j);
    }
    double inv = 1.0 / std::sqrt(norm2);
    double radius = law.sample_radius(rng.uniform01());
    out.row(i) = (model.mu() + (radius * inv) * (L * v)).transpose();
  }
  return DataMatrix(std::move(out));
}

// ---------------------------------------------------------------------------
// Kernel generator estimators. The kernel is the standard Gaussian density;
// sums are truncated where the kernel falls below double noise.
// ---------------------------------------------------------------------------

struct KernelConfig {
  double a = 1.0;
  double h = 0.1;
  UniformGrid grid = default_generator_grid();

  KernelConfig() = default;
  KernelConfig(double a_, double h_, UniformGrid grid_) : a(a_), h(h_), grid(grid_) {
    if (!(a > 0.0) || !(h > 0.0)) throw InvariantError("KernelConfig: a and h must be > 0");
  }
};

namespace detail {

inline constexpr double kKernelCutoff = 8.5;  // in units of h
inline const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * kPi);

/// Windowed sum of K((s - y)/h) + K((s + y)/h) over sorted values y >= 0.
inline double reflected_kernel_sum(const std::vector<double>& sorted_y, double s, double h) {
  const double cut = kKernelCutoff * h;
  double acc = 0.0;
  auto lo = std::lower_bound(sorted_y.begin(), sorted_y.end(), s - cut);
  auto hi = std::upper_bound(lo, sorted_y.end(), s + cut);
  for (auto it = lo; it != hi; ++it) {
    double z = (s - *it) / h;
    acc += std::exp(-0.5 * z * z);
  }
  if (s < cut) {
    auto hi2 = std::upper_bound(sorted_y.begin(), sorted_y.end(), cut - s);
    for (auto it = sorted_y.begin(); it != hi2; ++it) {
      double z = (s + *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
  }
  return acc * kInvSqrt2Pi;
}

inline std::vector<double> mahalanobis_sq(const DataMatrix& Z, const CorrMatrix& sigma) {
  if (Z.any_missing())
    throw InvariantError("generator estimator: data must be complete");
  if (Z.n() < 2) throw InvariantError("generator estimator: need n >= 2");
  if (sigma.d() != Z.d()) throw InvariantError("generator estimator: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma.mat());
  if (llt.info() != Eigen::Success)
    throw SingularSigmaError("generator estimator: Sigma not positive definite");
  std::vector<double> q(static_cast<std::size_t>(Z.n()));
  for (Eigen::Index i = 0; i < Z.n(); ++i) {
    Eigen::VectorXd z = Z.entries().row(i).transpose();
    q[static_cast<std::size_t>(i)] = z.dot(llt.solve(z));
  }
  return q;
}

}  // namespace detail

/// Liebscher's estimator on complete standardized data:
///   Y_i = psi_a(Z_i^T Sigma^{-1} Z_i)
///   g~(t) = (2/s_d) psi_a'(t) t^{1-d/2} (n h)^{-1}
///           sum_i [ K((psi_a(t)-Y_i)/h) + K((psi_a(t)+Y_i)/h) ]
inline Generator liebscher_estimate(const DataMatrix& Z, const CorrMatrix& sigma,
                                    const KernelConfig& cfg) {
  const int d = static_cast<int>(Z.d());
  std::vector<double> y = detail::mahalanobis_sq(Z, sigma);
  for (double& v : y) v = psi_a(v, cfg.a, d);
  std::sort(y.begin(), y.end());

  const double n = static_cast<double>(y.size());
  const double norm = 2.0 / (sphere_surface(d) * n * cfg.h);
  std::vector<double> vals(cfg.grid.count);
  for (std::size_t k = 0; k < cfg.grid.count; ++k) {
    const double t = cfg.grid.node(k);
    const double s = psi_a(t, cfg.a, d);
    vals[k] = norm * psi_a_prefactor(t, cfg.a, d) * detail::reflected_kernel_sum(y, s, cfg.h);
  }
  return Generator(d, TabulatedFunction(cfg.grid, std::move(vals)));
}

/// Stute-Werner estimator:
///   g^(u) = 2 (s_d n h u^{(d-2)/2})^{-1} sum_i K((u - |Y_i|^2)/h),
/// |Y_i|^2 the squared Mahalanobis radius of row i. The prefactor diverges
/// at the origin for d > 2; nodes with u < h report the limit value 0 and a
/// boundary warning is recorded.
inline Generator stute_werner_estimate(const DataMatrix& Z, const CorrMatrix& sigma, double h,
                                       const UniformGrid& grid = default_generator_grid(),
                                       Warnings* warnings = nullptr) {
  if (!(h > 0.0)) throw InvariantError("stute_werner_estimate: h must be > 0");
  const int d = static_cast<int>(Z.d());
  std::vector<double> y = detail::mahalanobis_sq(Z, sigma);
  std::sort(y.begin(), y.end());

  const double n = static_cast<double>(y.size());
  const double norm = 2.0 / (sphere_surface(d) * n * h);
  const double cut = detail::kKernelCutoff * h;
  bool boundary_hit = false;
  std::vector<double> vals(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double u = grid.node(k);
    if (d > 2 && u < h) {
      vals[k] = 0.0;
      boundary_hit = true;
      continue;
    }
    double acc = 0.0;
    auto lo = std::lower_bound(y.begin(), y.end(), u - cut);
    auto hi = std::upper_bound(lo, y.end(), u + cut);
    for (auto it = lo; it != hi; ++it) {
      double z = (u - *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
    acc *= detail::kInvSqrt2Pi;
    double pref = (d == 2) ? 1.0 : std::pow(u, -0.5 * (d - 2));
    vals[k] = norm * pref * acc;
  }
  if (boundary_hit && warnings)
    warnings->push_back({WarningKind::Boundary, "stute-werner values below u = h set to limit 0"});
  return Generator(d, TabulatedFunction(grid, std::move(vals)));
}

// ---------------------------------------------------------------------------
// Conditional law of an elliptical vector. For Z ~ E_d(mu, Sigma, g) and a
// conditioning block z_obs, the law of the remaining coordinates is
// E_m(mu_c, Sigma_c, g_c) with
//   mu_c    = mu_f + S_fo S_oo^{-1} (z - mu_o)
//   Sigma_c = S_ff - S_fo S_oo^{-1} S_of
//   g_c(t) ~ g(t + q),  q = (z - mu_o)^T S_oo^{-1} (z - mu_o),
// g_c renormalized to integrate as a dimension-m generator.
// ---------------------------------------------------------------------------

inline EllipticalModel conditional_model(const EllipticalModel& model,
                                         const std::vector<int>& observed_idx,
                                         const Eigen::VectorXd& observed_vals) {
  const Eigen::Index d = model.d();
  const Eigen::Index no = static_cast<Eigen::Index>(observed_idx.size());
  if (no == 0 || no >= d)
    throw InvariantError("conditional_model: observed set must be a proper nonempty subset");
  if (observed_vals.size() != no)
    throw InvariantError("conditional_model: observed values size mismatch");
  std::vector<char> is_obs(static_cast<std::size_t>(d), 0);
  for (int j : observed_idx) {
    if (j < 0 || j >= d || is_obs[static_cast<std::size_t>(j)])
      throw InvariantError("conditional_model: bad observed index set");
    is_obs[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<int> free_idx;
  for (int j = 0; j < d; ++j)
    if (!is_obs[static_cast<std::size_t>(j)]) free_idx.push_back(j);
  const Eigen::Index m = static_cast<Eigen::Index>(free_idx.size());

  const Eigen::MatrixXd& S = model.dispersion();
  Eigen::MatrixXd S_oo(no, no), S_fo(m, no), S_ff(m, m);
  Eigen::VectorXd mu_o(no), mu_f(m);
  for (Eigen::Index i = 0; i < no; ++i) {
    mu_o(i) = model.mu()(observed_idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < no; ++j)
      S_oo(i, j) = S(observed_idx[static_cast<std::size_t>(i)],
                     observed_idx[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    mu_f(i) = model.mu()(free_idx[static_cast<std::size_t>(i)]);
    S_ff.row(i).setZero();
    for (Eigen::Index j = 0; j < m; ++j)
      S_ff(i, j) = S(free_idx[static_cast<std::size_t>(i)], free_idx[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < no; ++j)
      S_fo(i, j) = S(free_idx[static_cast<std::size_t>(i)],
                     observed_idx[static_cast<std::size_t>(j)]);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(S_oo);
  if (llt.info() != Eigen::Success)
    throw SingularBlockError("conditional_model: conditioning block not positive definite");
  Eigen::VectorXd dev = observed_vals - mu_o;
  Eigen::VectorXd w = llt.solve(dev);
  const double q = dev.dot(w);
  Eigen::VectorXd mu_c = mu_f + S_fo * w;
  Eigen::MatrixXd sigma_c = S_ff - S_fo * llt.solve(S_fo.transpose());
  sigma_c = 0.5 * (sigma_c + sigma_c.transpose());

  // shifted generator, renormalized to integrate as a dimension-m generator
  const Generator& g = model.gen();
  const auto& grid = g.grid();
  std::vector<double> vals(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) vals[k] = g(grid.node(k) + q);

  const double r_max = std::sqrt(g.t_max());
  const std::size_t count = 2 * grid.count + 1;
  const double hstep = r_max / static_cast<double>(count - 1);
  double i1 = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    double r = static_cast<double>(k) * hstep;
    double wq = (k == 0 || k == count - 1) ? 0.5 : 1.0;
    double rp = (m == 1) ? 1.0 : std::pow(r, static_cast<int>(m) - 1);
    i1 += wq * rp * g(r * r + q);
  }
  i1 *= 2.0 * hstep;
  if (!(i1 > 0.0))
    throw ZeroGeneratorError("conditional_model: conditioning point outside generator support");
  const double scale = 2.0 / (sphere_surface(static_cast<int>(m)) * i1);
  for (double& v : vals) v *= scale;

  return EllipticalModel(std::move(mu_c), std::move(sigma_c),
                         Generator(static_cast<int>(m), TabulatedFunction(grid, std::move(vals))));
}

}  // namespace ellipgen

#endif  // ELLIPGEN_ELLIPTICAL_HPP
