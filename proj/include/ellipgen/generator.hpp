#ifndef ELLIPGEN_GENERATOR_HPP
#define ELLIPGEN_GENERATOR_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "ellipgen/core.hpp"

namespace ellipgen {

// ---------------------------------------------------------------------------
// Generator: a nonnegative tabulated density generator g on [0, T_max],
// tagged with the dimension of the elliptical law it generates.
// ---------------------------------------------------------------------------

class Generator {
 public:
  Generator(int dim, TabulatedFunction table) : dim_(dim), table_(std::move(table)) {
    if (dim_ < 1) throw InvariantError("Generator: dimension must be >= 1");
    for (double v : table_.values())
      if (v < 0.0) throw InvariantError("Generator: negative value");
  }

  int dim() const { return dim_; }
  const TabulatedFunction& table() const { return table_; }
  const UniformGrid& grid() const { return table_.grid(); }
  double t_max() const { return table_.grid().back(); }
  double operator()(double t) const { return table_(t); }

 private:
  int dim_;
  TabulatedFunction table_;
};

/// Tabulate a callable on a grid as a generator of dimension d.
template <typename F>
Generator tabulate_generator(int dim, const UniformGrid& grid, F&& f) {
  std::vector<double> v(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) v[k] = f(grid.node(k));
  return Generator(dim, TabulatedFunction(grid, std::move(v)));
}

// ---------------------------------------------------------------------------
// Radial quadrature. All improper integrals of the form
//   int_0^inf r^p g(r^2 + shift) dr
// are computed after the t = r^2 substitution with the trapezoid rule on a
// uniform r-lattice over [0, sqrt(T_max)]; the substitution removes the
// endpoint singularity of the t-form when the weight exponent is fractional.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t radial_lattice_count(const UniformGrid& g) { return 2 * g.count + 1; }

template <typename Eval>
double radial_integral(Eval&& gval, double r_max, std::size_t count, int p, double shift = 0.0) {
  const double h = r_max / static_cast<double>(count - 1);
  double acc = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    double r = static_cast<double>(k) * h;
    double w = (k == 0 || k == count - 1) ? 0.5 : 1.0;
    double rp = (p == 0) ? 1.0 : std::pow(r, p);
    acc += w * rp * gval(r * r + shift);
  }
  return acc * h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Moment integrals of the normalization step and the tail diagnostic
// ---------------------------------------------------------------------------

struct MomentIntegrals {
  double I1 = 0.0;  // int_0^inf t^{d/2-1} g(t) dt
  double I2 = 0.0;  // int_0^inf t^{d/2-3/2} g(t) dt
  double tail_frac1 = 0.0;  // last-decade share of I1
  double tail_frac2 = 0.0;  // last-decade share of I2
  bool tail_warning() const { return tail_frac1 > 1e-3 || tail_frac2 > 1e-3; }
};

inline MomentIntegrals moment_integrals(const Generator& g) {
  if (g.dim() < 2) throw InvariantError("moment_integrals: requires dim >= 2");
  const double r_max = std::sqrt(g.t_max());
  const std::size_t count = detail::radial_lattice_count(g.grid());
  const auto& tab = g.table();
  auto eval = [&tab](double t) { return tab(t); };
  const int d = g.dim();

  // I1 = 2 int r^{d-1} g(r^2) dr, I2 = 2 int r^{d-2} g(r^2) dr
  const double h = r_max / static_cast<double>(count - 1);
  const double r_tail = std::sqrt(0.9) * r_max;  // t in [0.9 T_max, T_max]
  double i1 = 0.0, i2 = 0.0, t1 = 0.0, t2 = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    double r = static_cast<double>(k) * h;
    double w = (k == 0 || k == count - 1) ? 0.5 : 1.0;
    double gv = eval(r * r);
    double c1 = w * std::pow(r, d - 1) * gv;
    double c2 = w * ((d == 2) ? gv : std::pow(r, d - 2) * gv);
    i1 += c1;
    i2 += c2;
    if (r >= r_tail) {
      t1 += c1;
      t2 += c2;
    }
  }
  MomentIntegrals m;
  m.I1 = 2.0 * h * i1;
  m.I2 = 2.0 * h * i2;
  if (m.I1 <= 0.0 || m.I2 <= 0.0) throw ZeroGeneratorError("moment_integrals: zero generator");
  m.tail_frac1 = 2.0 * h * t1 / m.I1;
  m.tail_frac2 = 2.0 * h * t2 / m.I2;
  return m;
}

/// Last-decade share of the I1 mass; stored in generator file sidecars.
inline double tail_mass_fraction(const Generator& g) { return moment_integrals(g).tail_frac1; }

// ---------------------------------------------------------------------------
// Scale family of Proposition 2: g_a(t) = a^{d/2} g(a t)
// ---------------------------------------------------------------------------

inline Generator scale_generator(const Generator& g, double a, Warnings* warnings = nullptr) {
  if (!(a > 0.0)) throw InvariantError("scale_generator: a must be > 0");
  if (a == 1.0) return g;
  const double c = std::pow(a, 0.5 * g.dim());
  const auto& grid = g.grid();
  std::vector<double> v(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) v[k] = c * g(a * grid.node(k));
  if (warnings && a < 1.0) {
    // for a < 1 the output nodes only reach the input up to a * T_max
    const double r_max = std::sqrt(g.t_max());
    const double r_cut = r_max * std::sqrt(a);
    const std::size_t count = detail::radial_lattice_count(grid);
    const double h = r_max / static_cast<double>(count - 1);
    double total = 0.0, dropped = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      double r = static_cast<double>(k) * h;
      double w = (k == 0 || k == count - 1) ? 0.5 : 1.0;
      double m = w * std::pow(r, g.dim() - 1) * g(r * r);
      total += m;
      if (r > r_cut) dropped += m;
    }
    if (total > 0.0 && dropped / total > 1e-3)
      warnings->push_back({WarningKind::TailMass, "scaled table truncates generator mass"});
  }
  return Generator(g.dim(), TabulatedFunction(grid, std::move(v)));
}

// ---------------------------------------------------------------------------
// NormalizedGenerator: result of the normalization. Carries the target b and the
// residuals of the two identification constraints, asserted at construction.
// ---------------------------------------------------------------------------

class NormalizedGenerator {
 public:
  NormalizedGenerator(Generator base, double b, std::pair<double, double> residuals,
                      double tol_norm, Warnings warnings = {})
      : base_(std::move(base)),
        b_(b),
        residuals_(residuals),
        tol_norm_(tol_norm),
        warnings_(std::move(warnings)) {
    if (!(b_ > 0.0)) throw InvariantError("NormalizedGenerator: b must be > 0");
    if (std::abs(residuals_.first) > tol_norm || std::abs(residuals_.second) > tol_norm)
      throw InvariantError("NormalizedGenerator: identification residuals exceed tolerance");
  }

  const Generator& base() const { return base_; }
  int dim() const { return base_.dim(); }
  double b() const { return b_; }
  std::pair<double, double> residuals() const { return residuals_; }
  double tol_norm() const { return tol_norm_; }
  const Warnings& warnings() const { return warnings_; }
  double operator()(double t) const { return base_(t); }

 private:
  Generator base_;
  double b_;
  std::pair<double, double> residuals_;
  double tol_norm_;
  Warnings warnings_;
};

// ---------------------------------------------------------------------------
// Normalization onto the two identification constraints
//   s_d int t^{d/2-1} g = 2  and  s_{d-1} int t^{d/2-3/2} g = 2 b.
// The closed-form (alpha, beta) transform is applied first; because the
// result lives on a grid, the measured integrals of the resampled table are
// then polished by repeating the transform until both residuals vanish at
// the working precision.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> resample_scaled(const Generator& g, double alpha, double beta,
                                           const UniformGrid& out) {
  std::vector<double> v(out.count);
  for (std::size_t k = 0; k < out.count; ++k) {
    double val = alpha * g(beta * out.node(k));
    v[k] = (val > 0.0) ? val : 0.0;  // clip quadrature noise
  }
  return v;
}

}  // namespace detail

inline NormalizedGenerator normalize(const Generator& g, double b, double tol_norm = 1e-6,
                                     std::optional<UniformGrid> out_grid = std::nullopt) {
  if (!(b > 0.0)) throw InvariantError("normalize: b must be > 0");
  if (g.dim() < 2) throw InvariantError("normalize: requires dim >= 2");
  const int d = g.dim();
  const double sd = sphere_surface(d);
  const double sdm1 = sphere_surface(d - 1);
  const UniformGrid grid = out_grid.value_or(g.grid());

  Warnings warnings;
  MomentIntegrals m = moment_integrals(g);
  if (m.tail_warning())
    warnings.push_back({WarningKind::TailMass, "input generator mass not settled before T_max"});

  // already on-constraint at working precision: normalization is the identity
  if (grid == g.grid()) {
    std::pair<double, double> res0{sd * m.I1 / 2.0 - 1.0, sdm1 * m.I2 / 2.0 - b};
    if (std::abs(res0.first) <= 1e-10 && std::abs(res0.second) <= 1e-10 * std::max(1.0, b))
      return NormalizedGenerator(g, b, res0, tol_norm, std::move(warnings));
  }

  double beta = b * sd * m.I1 / (sdm1 * m.I2);
  beta *= beta;
  double alpha = 2.0 * std::pow(beta, 0.5 * d) / (sd * m.I1);

  // When the transform compresses (beta * T_out < T_max of the input), the
  // output grid cannot carry the input's upper tail; reject if that tail
  // holds non-negligible mass.
  if (beta * grid.back() < g.t_max()) {
    const double r_cut = std::sqrt(beta * grid.back());
    const double r_max = std::sqrt(g.t_max());
    const std::size_t count = detail::radial_lattice_count(g.grid());
    const double h = r_max / static_cast<double>(count - 1);
    double dropped = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      double r = static_cast<double>(k) * h;
      if (r < r_cut) continue;
      double w = (k == 0 || k == count - 1) ? 0.5 : 1.0;
      dropped += w * std::pow(r, d - 1) * g(r * r);
    }
    if (2.0 * h * dropped / m.I1 > 1e-3)
      throw GridTooShortError("normalize: output grid drops non-negligible generator mass");
  }

  Generator current(d, TabulatedFunction(grid, detail::resample_scaled(g, alpha, beta, grid)));

  std::pair<double, double> res{0.0, 0.0};
  for (int pass = 0; pass < 8; ++pass) {
    MomentIntegrals j = moment_integrals(current);
    res = {sd * j.I1 / 2.0 - 1.0, sdm1 * j.I2 / 2.0 - b};
    if (std::abs(res.first) <= 1e-10 && std::abs(res.second) <= 1e-10 * std::max(1.0, b)) break;
    double bp = b * sd * j.I1 / (sdm1 * j.I2);
    bp *= bp;
    double ap = 2.0 * std::pow(bp, 0.5 * d) / (sd * j.I1);
    current = Generator(d, TabulatedFunction(grid, detail::resample_scaled(current, ap, bp, grid)));
  }
  return NormalizedGenerator(std::move(current), b, res, tol_norm, std::move(warnings));
}

// ---------------------------------------------------------------------------
// Subvector generator: the generator of the first m coordinates of a
// spherical vector with generator g in dimension d,
//   g_m(u) = s_{d-m} int_0^inf g(u + r^2) r^{d-m-1} dr.
// ---------------------------------------------------------------------------

inline Generator subvector_generator(const Generator& g, int m, Warnings* warnings = nullptr) {
  if (m < 1 || m >= g.dim())
    throw InvariantError("subvector_generator: need 1 <= m < dim");
  if (warnings && moment_integrals(g).tail_warning())
    warnings->push_back({WarningKind::TailMass, "input generator mass not settled before T_max"});
  const int d = g.dim();
  const double c = sphere_surface(d - m);
  const double r_max = std::sqrt(g.t_max());
  const std::size_t count = detail::radial_lattice_count(g.grid());
  const auto& grid = g.grid();
  const auto& tab = g.table();
  std::vector<double> v(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) {
    double u = grid.node(k);
    v[k] = c * detail::radial_integral([&tab](double t) { return tab(t); }, r_max, count,
                                       d - m - 1, u);
  }
  return Generator(m, TabulatedFunction(grid, std::move(v)));
}

// ---------------------------------------------------------------------------
// MarginalLaw: the common marginal density f_g, cdf F_g and quantile Q_g of
// the coordinates of E_d(0, Sigma, g) when Sigma is a correlation matrix.
//   f_g(t) = s_{d-1} int_0^inf g(t^2 + r^2) r^{d-2} dr    (even in t)
// ---------------------------------------------------------------------------

class MarginalLaw {
 public:
  int dim = 0;
  TabulatedFunction density;  // on [0, x_max]; even extension implied
  TabulatedFunction cdf;      // on [-x_max, x_max] once marginal_cdf has run
  bool has_cdf = false;
  double mass = 0.0;  // 2 * int_0^{x_max} f_g
  Warnings warnings;

  double x_max() const { return density.grid().back(); }

  double density_at(double t) const { return density(std::abs(t)); }

  double cdf_at(double x) const {
    if (!has_cdf) throw InvariantError("MarginalLaw: cdf not built");
    if (x <= cdf.grid().start) return cdf.values().front();
    if (x >= cdf.grid().back()) return cdf.values().back();
    return cdf(x);
  }
};

inline MarginalLaw marginal_density(const Generator& g, std::size_t x_count = 4001) {
  if (g.dim() < 2) throw InvariantError("marginal_density: requires dim >= 2");
  const int d = g.dim();
  const double c = sphere_surface(d - 1);
  const double x_max = std::sqrt(g.t_max());
  const double r_max = x_max;
  const std::size_t rcount = detail::radial_lattice_count(g.grid());
  const double h = r_max / static_cast<double>(rcount - 1);
  const auto& tab = g.table();

  UniformGrid xg(0.0, x_max / static_cast<double>(x_count - 1), x_count);
  std::vector<double> f(x_count);
  for (std::size_t k = 0; k < x_count; ++k) {
    const double t2 = xg.node(k) * xg.node(k);
    double acc = 0.0;
    if (d == 2) {
      for (std::size_t i = 0; i < rcount; ++i) {
        double r = static_cast<double>(i) * h;
        double w = (i == 0 || i == rcount - 1) ? 0.5 : 1.0;
        acc += w * tab(t2 + r * r);
      }
    } else {
      for (std::size_t i = 0; i < rcount; ++i) {
        double r = static_cast<double>(i) * h;
        double w = (i == 0 || i == rcount - 1) ? 0.5 : 1.0;
        acc += w * std::pow(r, d - 2) * tab(t2 + r * r);
      }
    }
    f[k] = std::max(0.0, c * h * acc);
  }

  MarginalLaw law;
  law.dim = d;
  law.density = TabulatedFunction(xg, std::move(f));
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < x_count; ++k)
    mass += 0.5 * (law.density.values()[k] + law.density.values()[k + 1]) * xg.step;
  law.mass = 2.0 * mass;
  if (law.mass < 1.0 - 1e-3)
    law.warnings.push_back({WarningKind::TailMass, "marginal mass below 1 - 1e-3"});
  return law;
}

/// Build F_g on [-x_max, x_max] by cumulative trapezoid outward from 0, using
/// the even symmetry of f_g; F_g(0) = 1/2 exactly and values are clamped to
/// [0, 1].
inline MarginalLaw& marginal_cdf(MarginalLaw& law) {
  const auto& xg = law.density.grid();
  const std::size_t nx = xg.count;
  std::vector<double> cum(nx, 0.0);
  const auto& f = law.density.values();
  for (std::size_t k = 1; k < nx; ++k)
    cum[k] = cum[k - 1] + 0.5 * (f[k - 1] + f[k]) * xg.step;
  // quadrature can overshoot half the mass by roundoff; rescale rather than
  // flatten, so the tabulated cdf stays within [0,1]
  if (cum.back() > 0.5) {
    const double scale = 0.5 / cum.back();
    for (double& c : cum) c *= scale;
  }

  const std::size_t total = 2 * nx - 1;
  std::vector<double> F(total);
  for (std::size_t k = 0; k < nx; ++k) {
    F[nx - 1 + k] = 0.5 + cum[k];
    F[nx - 1 - k] = 0.5 - cum[k];
  }
  for (std::size_t k = 1; k < total; ++k) F[k] = std::max(F[k], F[k - 1]);  // monotone
  law.cdf = TabulatedFunction(UniformGrid(-xg.back(), xg.step, total), std::move(F));
  law.has_cdf = true;
  return law;
}

inline MarginalLaw marginal_law(const Generator& g, std::size_t x_count = 4001) {
  MarginalLaw law = marginal_density(g, x_count);
  marginal_cdf(law);
  return law;
}

/// Q_g(u): monotone piecewise-linear inversion of the tabulated cdf.
/// Arguments beyond the tabulated cdf range clamp to +-x_max; the optional
/// counter records such clamps.
inline double marginal_quantile(const MarginalLaw& law, double u,
                                std::size_t* clamp_count = nullptr) {
  if (!law.has_cdf) throw InvariantError("marginal_quantile: cdf not built");
  if (!(u > 0.0 && u < 1.0)) throw OutOfDomainError("marginal_quantile: u must be in (0,1)");
  const auto& F = law.cdf.values();
  const auto& grid = law.cdf.grid();
  if (u <= F.front()) {
    if (clamp_count) ++*clamp_count;
    return grid.start;
  }
  if (u >= F.back()) {
    if (clamp_count) ++*clamp_count;
    return grid.back();
  }
  auto it = std::lower_bound(F.begin(), F.end(), u);
  std::size_t j = static_cast<std::size_t>(it - F.begin());
  if (F[j] == u) {
    // inf{x : F(x) >= u}: walk left over any flat stretch
    while (j > 0 && F[j - 1] == u) --j;
    return grid.node(j);
  }
  double f0 = F[j - 1], f1 = F[j];
  double w = (u - f0) / (f1 - f0);
  return grid.node(j - 1) + w * grid.step;
}

}  // namespace ellipgen

#endif  // ELLIPGEN_GENERATOR_HPP
