#ifndef ELLIPGEN_DATA_HPP
#define ELLIPGEN_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "ellipgen/core.hpp"

namespace ellipgen {

inline constexpr double kEpsInv = 1e-6;  // invertibility margin for correlation matrices

// ---------------------------------------------------------------------------
// DataMatrix: n x d observations with an optional missingness mask
// (true = missing).
// ---------------------------------------------------------------------------

class DataMatrix {
 public:
  DataMatrix() = default;
  explicit DataMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {}
  DataMatrix(Eigen::MatrixXd entries, std::vector<std::uint8_t> mask)
      : entries_(std::move(entries)), mask_(std::move(mask)) {
    if (!mask_.empty() &&
        mask_.size() != static_cast<std::size_t>(entries_.rows() * entries_.cols()))
      throw InvariantError("DataMatrix: mask size mismatch");
  }

  Eigen::Index n() const { return entries_.rows(); }
  Eigen::Index d() const { return entries_.cols(); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  Eigen::MatrixXd& mutable_entries() { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

  bool has_mask() const { return !mask_.empty(); }
  bool is_missing(Eigen::Index i, Eigen::Index j) const {
    return has_mask() && mask_[static_cast<std::size_t>(i * entries_.cols() + j)] != 0;
  }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  bool any_missing() const {
    for (auto m : mask_)
      if (m) return true;
    return false;
  }

  Eigen::Index observed_count(Eigen::Index col) const {
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < n(); ++i)
      if (!is_missing(i, col)) ++c;
    return c;
  }

  /// Checks the structural invariants: no fully missing row, every column
  /// with at least two observed entries.
  void validate() const {
    if (n() < 1 || d() < 1) throw InvariantError("DataMatrix: empty");
    for (Eigen::Index i = 0; i < n(); ++i) {
      bool any_obs = false;
      for (Eigen::Index j = 0; j < d(); ++j)
        if (!is_missing(i, j)) {
          any_obs = true;
          break;
        }
      if (!any_obs) throw InvariantError("DataMatrix: fully missing row " + std::to_string(i));
    }
    for (Eigen::Index j = 0; j < d(); ++j)
      if (observed_count(j) < 2)
        throw InvariantError("DataMatrix: column " + std::to_string(j) +
                             " has fewer than 2 observed entries");
  }

 private:
  Eigen::MatrixXd entries_;
  std::vector<std::uint8_t> mask_;  // row-major, empty means no missing
};

// ---------------------------------------------------------------------------
// PseudoObs: rank transforms in (0, 1), same mask semantics as DataMatrix.
// ---------------------------------------------------------------------------

class PseudoObs {
 public:
  PseudoObs() = default;
  PseudoObs(Eigen::MatrixXd entries, std::vector<std::uint8_t> mask)
      : entries_(std::move(entries)), mask_(std::move(mask)) {
    for (Eigen::Index i = 0; i < entries_.rows(); ++i)
      for (Eigen::Index j = 0; j < entries_.cols(); ++j)
        if (!is_missing(i, j) && !(entries_(i, j) > 0.0 && entries_(i, j) < 1.0))
          throw InvariantError("PseudoObs: entry outside (0,1)");
  }

  Eigen::Index n() const { return entries_.rows(); }
  Eigen::Index d() const { return entries_.cols(); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  bool has_mask() const { return !mask_.empty(); }
  bool is_missing(Eigen::Index i, Eigen::Index j) const {
    return has_mask() && mask_[static_cast<std::size_t>(i * entries_.cols() + j)] != 0;
  }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  bool any_missing() const {
    for (auto m : mask_)
      if (m) return true;
    return false;
  }

 private:
  Eigen::MatrixXd entries_;
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// CorrMatrix: symmetric, unit diagonal, positive definite with margin.
// ---------------------------------------------------------------------------

class CorrMatrix {
 public:
  explicit CorrMatrix(Eigen::MatrixXd m, double eps = kEpsInv) : m_(std::move(m)) {
    const Eigen::Index d = m_.rows();
    if (d < 1 || m_.cols() != d) throw InvariantError("CorrMatrix: not square");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(m_(i, i) - 1.0) > 1e-9) throw InvariantError("CorrMatrix: diagonal not 1");
      for (Eigen::Index j = 0; j < i; ++j) {
        if (std::abs(m_(i, j) - m_(j, i)) > 1e-9)
          throw InvariantError("CorrMatrix: not symmetric");
        if (std::abs(m_(i, j)) > 1.0 + 1e-12)
          throw InvariantError("CorrMatrix: off-diagonal outside [-1,1]");
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
    min_eig_ = es.eigenvalues().minCoeff();
    if (min_eig_ < eps - 1e-10)
      throw InvariantError("CorrMatrix: minimum eigenvalue below invertibility margin");
  }

  Eigen::Index d() const { return m_.rows(); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double min_eigenvalue() const { return min_eig_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  static CorrMatrix identity(Eigen::Index d) {
    return CorrMatrix(Eigen::MatrixXd::Identity(d, d));
  }

 private:
  Eigen::MatrixXd m_;
  double min_eig_ = 0.0;
};

}  // namespace ellipgen

#endif  // ELLIPGEN_DATA_HPP
