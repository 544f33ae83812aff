#ifndef ELLIPGEN_COPULA_HPP
#define ELLIPGEN_COPULA_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/elliptical.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/rng.hpp"

namespace ellipgen {

// ---------------------------------------------------------------------------
// Pseudo-observations: per column, observed entries map to rank/(n_j + 1)
// over the observed entries of that column; ties receive average ranks.
// Division by n_j + 1 (rather than n_j) keeps entries strictly inside (0,1).
// ---------------------------------------------------------------------------

inline PseudoObs pseudo_observations(const DataMatrix& X) {
  const Eigen::Index n = X.n(), d = X.d();
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<std::pair<double, Eigen::Index>> col;
    col.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      if (!X.is_missing(i, j)) col.emplace_back(X(i, j), i);
    if (col.size() < 2)
      throw InvariantError("pseudo_observations: column with fewer than 2 observed entries");
    std::sort(col.begin(), col.end());
    if (col.front().first == col.back().first)
      throw DegenerateColumnError("pseudo_observations: constant column " + std::to_string(j));
    const double denom = static_cast<double>(col.size()) + 1.0;
    std::size_t k = 0;
    while (k < col.size()) {
      std::size_t e = k;
      while (e + 1 < col.size() && col[e + 1].first == col[k].first) ++e;
      double avg_rank = 0.5 * static_cast<double>(k + 1 + e + 1);  // average of 1-based ranks
      for (std::size_t t = k; t <= e; ++t) U(col[t].second, j) = avg_rank / denom;
      k = e + 1;
    }
  }
  return PseudoObs(std::move(U), X.mask());
}

// ---------------------------------------------------------------------------
// Kendall's tau on pairwise-complete observations:
//   tau = 2/(m(m-1)) sum_{i<j} sign(x_i - x_j) sign(y_i - y_j).
// Pair enumeration at desk scale, Knight's O(m log m) inversion count above.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::size_t kTauBruteForceLimit = 5000;

inline double kendall_tau_bruteforce(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  long long num = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double sx = (x[i] < x[j]) ? -1.0 : (x[i] > x[j] ? 1.0 : 0.0);
      double sy = (y[i] < y[j]) ? -1.0 : (y[i] > y[j] ? 1.0 : 0.0);
      num += static_cast<long long>(sx * sy);
    }
  return 2.0 * static_cast<double>(num) / (static_cast<double>(m) * static_cast<double>(m - 1));
}

// strict inversions of y by mergesort
inline long long count_inversions(std::vector<double>& y, std::vector<double>& buf,
                                  std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  std::size_t mid = lo + (hi - lo) / 2;
  long long c = count_inversions(y, buf, lo, mid) + count_inversions(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      c += static_cast<long long>(mid - i);
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
            y.begin() + static_cast<long>(lo));
  return c;
}

inline double kendall_tau_knight(std::vector<double> x, std::vector<double> y) {
  const std::size_t m = x.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  std::vector<double> xs(m), ys(m);
  for (std::size_t k = 0; k < m; ++k) {
    xs[k] = x[idx[k]];
    ys[k] = y[idx[k]];
  }
  auto tie_pairs = [](const std::vector<double>& v) {
    long long t = 0;
    std::size_t k = 0;
    std::vector<double> s(v);
    std::sort(s.begin(), s.end());
    while (k < s.size()) {
      std::size_t e = k;
      while (e + 1 < s.size() && s[e + 1] == s[k]) ++e;
      long long run = static_cast<long long>(e - k + 1);
      t += run * (run - 1) / 2;
      k = e + 1;
    }
    return t;
  };
  long long n0 = static_cast<long long>(m) * static_cast<long long>(m - 1) / 2;
  long long n1 = tie_pairs(xs);
  long long n2 = tie_pairs(ys);
  long long n3 = 0;  // joint ties
  {
    std::size_t k = 0;
    while (k < m) {
      std::size_t e = k;
      while (e + 1 < m && xs[e + 1] == xs[k] && ys[e + 1] == ys[k]) ++e;
      long long run = static_cast<long long>(e - k + 1);
      n3 += run * (run - 1) / 2;
      k = e + 1;
    }
  }
  std::vector<double> buf(m);
  long long discordant = count_inversions(ys, buf, 0, m);
  long long num = n0 - n1 - n2 + n3 - 2 * discordant;  // concordant - discordant
  return static_cast<double>(num) / static_cast<double>(n0);
}

inline double kendall_tau_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() <= kTauBruteForceLimit) return kendall_tau_bruteforce(x, y);
  return kendall_tau_knight(x, y);
}

}  // namespace detail

inline Eigen::MatrixXd kendall_tau_matrix(const DataMatrix& X) {
  const Eigen::Index d = X.d();
  Eigen::MatrixXd tau = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = k + 1; l < d; ++l) {
      std::vector<double> x, y;
      for (Eigen::Index i = 0; i < X.n(); ++i)
        if (!X.is_missing(i, k) && !X.is_missing(i, l)) {
          x.push_back(X(i, k));
          y.push_back(X(i, l));
        }
      if (x.size() < 2)
        throw InsufficientPairsError("kendall_tau_matrix: fewer than 2 pairwise-complete rows");
      tau(k, l) = tau(l, k) = detail::kendall_tau_pair(x, y);
    }
  return tau;
}

// ---------------------------------------------------------------------------
// Nearest correlation matrix by alternating projections between
// {PSD with eigenvalues >= eps} and {unit diagonal}.
// ---------------------------------------------------------------------------

struct PsdProjectionResult {
  Eigen::MatrixXd matrix;
  bool converged = true;
  int rounds = 0;
};

inline PsdProjectionResult project_psd_raw(const Eigen::MatrixXd& M, double eps,
                                           double tol = 1e-8, int max_rounds = 200) {
  Eigen::MatrixXd cur = 0.5 * (M + M.transpose());
  PsdProjectionResult result;
  for (int round = 0; round < max_rounds; ++round) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eps);
    Eigen::MatrixXd next = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    next.diagonal().setOnes();
    next = 0.5 * (next + next.transpose());
    double delta = (next - cur).cwiseAbs().maxCoeff();
    cur = next;
    result.rounds = round + 1;
    if (delta < tol) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> chk(cur, Eigen::EigenvaluesOnly);
      if (chk.eigenvalues().minCoeff() >= eps - 1e-10) {
        result.matrix = cur;
        return result;
      }
    }
  }
  result.converged = false;
  // last iterate, with a final clip so the invertibility margin holds
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eps);
  cur = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  for (Eigen::Index i = 0; i < cur.rows(); ++i) {
    double s = std::sqrt(cur(i, i));
    cur.row(i) /= s;
    cur.col(i) /= s;
  }
  result.matrix = 0.5 * (cur + cur.transpose());
  result.matrix.diagonal().setOnes();
  return result;
}

inline CorrMatrix project_psd(const Eigen::MatrixXd& M, double eps = kEpsInv,
                              bool* converged = nullptr) {
  PsdProjectionResult r = project_psd_raw(M, eps);
  if (converged) *converged = r.converged;
  Eigen::MatrixXd clipped = r.matrix.cwiseMin(1.0).cwiseMax(-1.0);
  clipped.diagonal().setOnes();
  return CorrMatrix(clipped, eps - 1e-9);
}

// ---------------------------------------------------------------------------
// sin(pi tau / 2) map plus PSD repair when needed
// ---------------------------------------------------------------------------

inline CorrMatrix corr_from_tau(const Eigen::MatrixXd& tau, double eps = kEpsInv) {
  const Eigen::Index d = tau.rows();
  if (tau.cols() != d) throw InvariantError("corr_from_tau: not square");
  Eigen::MatrixXd S(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    S(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(tau(i, j) - tau(j, i)) > 1e-12)
        throw InvariantError("corr_from_tau: tau not symmetric");
      double v = std::sin(0.5 * kPi * tau(i, j));
      S(i, j) = S(j, i) = std::clamp(v, -1.0, 1.0);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() >= eps) return CorrMatrix(S, eps);
  return project_psd(S, eps);
}

// ---------------------------------------------------------------------------
// Meta-elliptical copula density:
//   c(u) = g(Q^T Sigma^{-1} Q) / (|Sigma|^{1/2} prod_k f_g(Q_g(u_k))),
// with Q = (Q_g(u_1), ..., Q_g(u_d)).
// ---------------------------------------------------------------------------

class CopulaDensity {
 public:
  CopulaDensity(const NormalizedGenerator& g, const CorrMatrix& sigma)
      : gen_(g.base()), law_(marginal_law(g.base())), llt_(sigma.mat()) {
    if (static_cast<Eigen::Index>(g.dim()) != sigma.d())
      throw InvariantError("CopulaDensity: dimension mismatch");
    if (llt_.info() != Eigen::Success)
      throw SingularSigmaError("CopulaDensity: Sigma not positive definite");
    sqrt_det_ = llt_.matrixL().determinant();
  }

  /// Copula density at an interior point. If a marginal density vanishes at
  /// the transformed point, +infinity is returned and the flag (if given) set.
  double operator()(const Eigen::VectorXd& u, bool* infinite_flag = nullptr) const {
    const Eigen::Index d = llt_.matrixL().rows();
    if (u.size() != d) throw InvariantError("CopulaDensity: point dimension mismatch");
    Eigen::VectorXd q(d);
    double denom = sqrt_det_;
    bool zero_density = false;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (!(u(k) > 0.0 && u(k) < 1.0))
        throw OutOfDomainError("CopulaDensity: point not strictly interior");
      q(k) = marginal_quantile(law_, u(k));
      double f = law_.density_at(q(k));
      if (f <= 0.0) zero_density = true;
      denom *= f;
    }
    if (zero_density) {
      if (infinite_flag) *infinite_flag = true;
      return std::numeric_limits<double>::infinity();
    }
    double maha = q.dot(llt_.solve(q));
    return gen_(maha) / denom;
  }

  const MarginalLaw& marginal() const { return law_; }

 private:
  Generator gen_;
  MarginalLaw law_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double sqrt_det_ = 1.0;
};

inline double copula_density(const NormalizedGenerator& g, const CorrMatrix& sigma,
                             const Eigen::VectorXd& u) {
  return CopulaDensity(g, sigma)(u);
}

// ---------------------------------------------------------------------------
// Sampling from the meta-elliptical copula: F_g applied coordinatewise to an
// elliptical draw from E_d(0, Sigma, g) gives uniform margins with copula
// ME_d(Sigma, g).
// ---------------------------------------------------------------------------

inline DataMatrix sample_meta_elliptical(const Generator& g, const CorrMatrix& sigma,
                                         Eigen::Index n, Rng& rng) {
  EllipticalModel model(Eigen::VectorXd::Zero(sigma.d()), sigma.mat(), g);
  DataMatrix z = sample_elliptical(model, n, rng);
  MarginalLaw law = marginal_law(g);
  Eigen::MatrixXd u = z.entries();
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j) u(i, j) = law.cdf_at(u(i, j));
  return DataMatrix(std::move(u));
}

}  // namespace ellipgen

#endif  // ELLIPGEN_COPULA_HPP
