#ifndef ELLIPGEN_CORE_HPP
#define ELLIPGEN_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ellipgen {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvariantError : public Error {
 public:
  using Error::Error;
};
class ZeroGeneratorError : public Error {
 public:
  using Error::Error;
};
class GridTooShortError : public Error {
 public:
  using Error::Error;
};
class GridMismatchError : public Error {
 public:
  using Error::Error;
};
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};
class SingularSigmaError : public Error {
 public:
  using Error::Error;
};
class SingularBlockError : public Error {
 public:
  using Error::Error;
};
class FactorizationError : public Error {
 public:
  using Error::Error;
};
class DegenerateColumnError : public Error {
 public:
  using Error::Error;
};
class InsufficientPairsError : public Error {
 public:
  using Error::Error;
};
class InfeasibleCorrelationError : public Error {
 public:
  using Error::Error;
};
class TooManyMissingError : public Error {
 public:
  using Error::Error;
};
class InadmissibleThetaError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Warnings
// ---------------------------------------------------------------------------

enum class WarningKind {
  TailMass,        // truncated integral left non-negligible mass behind
  Clamp,           // quantile argument clamped to the tabulated range
  Boundary,        // estimator value replaced by its boundary limit
  QuantileClamp,   // pseudo-observation clamped before quantile transform
  NoConvergence,   // iteration cap reached
};

struct Warning {
  WarningKind kind;
  std::string detail;
};

using Warnings = std::vector<Warning>;

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Surface area of the unit sphere in R^d: s_d = 2 pi^{d/2} / Gamma(d/2),
/// with s_1 = 2.
inline double sphere_surface(int d) {
  if (d < 1) throw InvariantError("sphere_surface: dimension must be >= 1");
  return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}

// ---------------------------------------------------------------------------
// Standard normal helpers
// ---------------------------------------------------------------------------

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal cdf. Rational initial guess (Acklam) refined by one
/// Halley step against erfc, good to full double precision on (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw OutOfDomainError("norm_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

// ---------------------------------------------------------------------------
// UniformGrid / TabulatedFunction
// ---------------------------------------------------------------------------

struct UniformGrid {
  double start = 0.0;
  double step = 0.0;
  std::size_t count = 0;

  UniformGrid() = default;
  UniformGrid(double start_, double step_, std::size_t count_)
      : start(start_), step(step_), count(count_) {
    if (!(step > 0.0)) throw InvariantError("UniformGrid: step must be > 0");
    if (count < 2) throw InvariantError("UniformGrid: count must be >= 2");
    if (!std::isfinite(start) || !std::isfinite(step))
      throw InvariantError("UniformGrid: non-finite bounds");
  }

  double node(std::size_t k) const { return start + static_cast<double>(k) * step; }
  double back() const { return node(count - 1); }

  bool operator==(const UniformGrid& o) const {
    return start == o.start && step == o.step && count == o.count;
  }
};

/// Default evaluation lattice for generators: [0, 10] with step 0.005.
inline UniformGrid default_generator_grid() { return UniformGrid(0.0, 0.005, 2001); }

/// Univariate function stored on a uniform grid.
/// Evaluation is piecewise linear between nodes; queries below the first node
/// return the first value, queries above the last node return 0.
class TabulatedFunction {
 public:
  TabulatedFunction() = default;
  TabulatedFunction(UniformGrid grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.count)
      throw InvariantError("TabulatedFunction: values length must equal grid count");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvariantError("TabulatedFunction: non-finite value");
  }

  const UniformGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  double operator()(double x) const {
    if (x <= grid_.start) return values_.front();
    double s = (x - grid_.start) / grid_.step;
    const double s_max = static_cast<double>(grid_.count - 1);
    if (s >= s_max) {
      // tolerate roundoff at the last node; genuinely beyond it is 0
      return (s - s_max <= 1e-9 * (1.0 + s_max)) ? values_.back() : 0.0;
    }
    auto k = static_cast<std::size_t>(s);
    double w = s - static_cast<double>(k);
    // snap queries that hit a node up to roundoff
    if (w <= 1e-9 * (1.0 + s)) return values_[k];
    if (1.0 - w <= 1e-9 * (1.0 + s)) return values_[k + 1];
    return values_[k] + w * (values_[k + 1] - values_[k]);
  }

  bool same_grid(const TabulatedFunction& o) const { return grid_ == o.grid_; }

 private:
  UniformGrid grid_;
  std::vector<double> values_;
};

/// L2 distance between two tables on a common grid: sqrt(step * sum (a-b)^2).
inline double grid_l2_distance(const TabulatedFunction& a, const TabulatedFunction& b) {
  if (!a.same_grid(b)) throw GridMismatchError("grid_l2_distance: grids differ");
  double s = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) {
    double dv = a.values()[k] - b.values()[k];
    s += dv * dv;
  }
  return std::sqrt(a.grid().step * s);
}

/// Integrated squared difference between two tables: step * sum (a-b)^2.
inline double grid_ise(const TabulatedFunction& a, const TabulatedFunction& b) {
  if (!a.same_grid(b)) throw GridMismatchError("grid_ise: grids differ");
  double s = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) {
    double dv = a.values()[k] - b.values()[k];
    s += dv * dv;
  }
  return a.grid().step * s;
}

}  // namespace ellipgen

#endif  // ELLIPGEN_CORE_HPP
