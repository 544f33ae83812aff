#ifndef ELLIPGEN_SIMSTUDY_HPP
#define ELLIPGEN_SIMSTUDY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ellipgen/copula.hpp"
#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/mecip.hpp"
#include "ellipgen/rng.hpp"

namespace ellipgen {

// ---------------------------------------------------------------------------
// The six test generators (plus "gaussian" as an alias for e^{-x}).
// bump(x) = 1{x in [1, 1+pi]} (x-1)(1+pi-x) sin(x-1).
// ---------------------------------------------------------------------------

inline double bump_function(double x) {
  if (x < 1.0 || x > 1.0 + kPi) return 0.0;
  return (x - 1.0) * (1.0 + kPi - x) * std::sin(x - 1.0);
}

inline const std::vector<std::string>& builtin_generator_ids() {
  static const std::vector<std::string> ids = {"invquad", "gaussian",  "bump",
                                               "cosine",  "cubicfrac", "xsqexp"};
  return ids;
}

inline double builtin_generator_raw(const std::string& id, double x) {
  if (id == "invquad") return 1.0 / (1.0 + x * x);
  if (id == "gaussian") return std::exp(-x);
  if (id == "bump") return std::exp(-x) + bump_function(x);
  if (id == "cosine") {
    double c = std::cos(x);
    return std::exp(-x) + std::exp(-x / 3.0) * c * c;
  }
  if (id == "cubicfrac") return x / (1.0 + x * x * x);
  if (id == "xsqexp") return x * x * std::exp(-x * x);
  throw InvariantError("unknown builtin generator id: " + id);
}

inline NormalizedGenerator builtin_generator(const std::string& id, int d,
                                             const UniformGrid& grid = default_generator_grid(),
                                             double b = 1.0) {
  Generator raw =
      tabulate_generator(d, grid, [&](double t) { return builtin_generator_raw(id, t); });
  return normalize(raw, b, 1e-3);
}

inline std::vector<std::pair<std::string, NormalizedGenerator>> builtin_generators(
    int d, const UniformGrid& grid = default_generator_grid()) {
  std::vector<std::pair<std::string, NormalizedGenerator>> out;
  for (const std::string& id : builtin_generator_ids())
    out.emplace_back(id, builtin_generator(id, d, grid));
  return out;
}

// ---------------------------------------------------------------------------
// Correlation structures of the sweep protocols. sigma3 perturbs the (1,2)
// entry of an exchangeable-0.2 base (feasibility boundary near -0.92);
// sigma10 places rho12 on the (1,2), (1,3), (1,4) entries of a 10-dimensional
// exchangeable-0.2 base (boundary near -0.432).
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd sigma_exchangeable_matrix(int d, double rho) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Constant(d, d, rho);
  S.diagonal().setOnes();
  return S;
}

inline Eigen::MatrixXd sigma3_matrix(double rho12) {
  Eigen::MatrixXd S(3, 3);
  S << 1.0, rho12, 0.2, rho12, 1.0, 0.2, 0.2, 0.2, 1.0;
  return S;
}

inline Eigen::MatrixXd sigma10_matrix(double rho12) {
  Eigen::MatrixXd S = sigma_exchangeable_matrix(10, 0.2);
  for (int j = 1; j <= 3; ++j) S(0, j) = S(j, 0) = rho12;
  return S;
}

inline CorrMatrix make_feasible_corr(const Eigen::MatrixXd& S, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kEpsInv)
    throw InfeasibleCorrelationError(what + ": rho12 at or below the feasibility bound");
  return CorrMatrix(S);
}

inline CorrMatrix sigma_exchangeable(int d, double rho) {
  return make_feasible_corr(sigma_exchangeable_matrix(d, rho), "sigma_exchangeable");
}
inline CorrMatrix sigma3(double rho12) {
  return make_feasible_corr(sigma3_matrix(rho12), "sigma3");
}
inline CorrMatrix sigma10(double rho12) {
  return make_feasible_corr(sigma10_matrix(rho12), "sigma10");
}

// ---------------------------------------------------------------------------
// MISE scoring
// ---------------------------------------------------------------------------

struct MiseRecord {
  std::vector<double> errors;  // per-replication integrated squared errors
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;

  static MiseRecord from_errors(std::vector<double> errs) {
    MiseRecord r;
    r.errors = std::move(errs);
    if (r.errors.empty()) return r;
    double s = 0.0;
    for (double e : r.errors) s += e;
    r.mean = s / static_cast<double>(r.errors.size());
    std::vector<double> sorted = r.errors;
    std::sort(sorted.begin(), sorted.end());
    std::size_t m = sorted.size();
    r.median = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    double v = 0.0;
    for (double e : r.errors) v += (e - r.mean) * (e - r.mean);
    r.sd = (m > 1) ? std::sqrt(v / static_cast<double>(m - 1)) : 0.0;
    return r;
  }
};

inline MiseRecord mise(const std::vector<Generator>& estimates, const Generator& truth) {
  std::vector<double> errs;
  errs.reserve(estimates.size());
  for (const Generator& g : estimates) errs.push_back(grid_ise(g.table(), truth.table()));
  return MiseRecord::from_errors(std::move(errs));
}

// ---------------------------------------------------------------------------
// Missingness injection, d = 3 protocol: N_missing distinct rows are
// affected; a uniform number of them lose one coordinate, the rest lose two.
// ---------------------------------------------------------------------------

inline DataMatrix inject_missing(const DataMatrix& X, Eigen::Index n_missing, Rng& rng) {
  if (X.d() != 3) throw InvariantError("inject_missing: protocol defined for d = 3");
  if (n_missing > X.n()) throw TooManyMissingError("inject_missing: N_missing exceeds n");
  const Eigen::Index n = X.n(), d = X.d();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n * d), 0);
  if (n_missing > 0) {
    // distinct affected rows by partial Fisher-Yates
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    for (Eigen::Index k = 0; k < n_missing; ++k) {
      auto j = k + static_cast<Eigen::Index>(rng.uniform01() * static_cast<double>(n - k));
      if (j >= n) j = n - 1;
      std::swap(rows[static_cast<std::size_t>(k)], rows[static_cast<std::size_t>(j)]);
    }
    auto n_one = static_cast<Eigen::Index>(rng.uniform01() * static_cast<double>(n_missing + 1));
    if (n_one > n_missing) n_one = n_missing;
    for (Eigen::Index k = 0; k < n_missing; ++k) {
      Eigen::Index row = rows[static_cast<std::size_t>(k)];
      if (k < n_one) {
        auto c = static_cast<Eigen::Index>(rng.uniform01() * 3.0);
        if (c > 2) c = 2;
        mask[static_cast<std::size_t>(row * d + c)] = 1;
      } else {
        auto keep = static_cast<Eigen::Index>(rng.uniform01() * 3.0);
        if (keep > 2) keep = 2;
        for (Eigen::Index c = 0; c < 3; ++c)
          if (c != keep) mask[static_cast<std::size_t>(row * d + c)] = 1;
      }
    }
  }
  return DataMatrix(X.entries(), std::move(mask));
}

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

enum class SigmaKind { Exchangeable, Sigma3, Sigma10 };

struct ExperimentSpec {
  std::string truth = "gaussian";
  int d = 2;
  Eigen::Index n = 1000;
  SigmaKind sigma_kind = SigmaKind::Exchangeable;
  double rho = 0.2;  // exchangeable off-diagonal, and rho12 default

  std::vector<double> h_sweep;             // empty -> {default for d}
  std::vector<double> a_sweep;             // empty -> {default for d}
  std::vector<double> rho12_sweep;         // empty -> {rho}
  std::vector<Eigen::Index> n_sweep;       // empty -> {n}
  std::vector<Eigen::Index> missing_sweep; // empty -> {0}

  int replications = 20;
  std::uint64_t master_seed = 1;

  InitKind init = InitKind::Identity;
  EstimatorKind estimator = EstimatorKind::Liebscher;
  int n_max = 10;
  double tol = 1e-4;
  double b = 1.0;
  UniformGrid grid = default_generator_grid();

  void validate() const {
    if (replications < 1) throw InvariantError("ExperimentSpec: replications must be >= 1");
    if (d < 2) throw InvariantError("ExperimentSpec: d must be >= 2");
    if (sigma_kind == SigmaKind::Sigma3 && d != 3)
      throw InvariantError("ExperimentSpec: sigma3 requires d = 3");
    if (sigma_kind == SigmaKind::Sigma10 && d != 10)
      throw InvariantError("ExperimentSpec: sigma10 requires d = 10");
  }
};

/// Paper defaults for (a, h) by dimension: d=2 -> (1, 0.05); d=3 -> (0.08,
/// 0.2); otherwise (1, 0.1).
inline std::pair<double, double> default_a_h(int d) {
  if (d == 2) return {1.0, 0.05};
  if (d == 3) return {0.08, 0.2};
  return {1.0, 0.1};
}

struct SweepPoint {
  double h = 0.0;
  double a = 0.0;
  double rho12 = 0.0;
  Eigen::Index n = 0;
  Eigen::Index n_missing = 0;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentSpec& spec) {
  auto [a_def, h_def] = default_a_h(spec.d);
  std::vector<double> hs = spec.h_sweep.empty() ? std::vector<double>{h_def} : spec.h_sweep;
  std::vector<double> as = spec.a_sweep.empty() ? std::vector<double>{a_def} : spec.a_sweep;
  std::vector<double> rhos =
      spec.rho12_sweep.empty() ? std::vector<double>{spec.rho} : spec.rho12_sweep;
  std::vector<Eigen::Index> ns =
      spec.n_sweep.empty() ? std::vector<Eigen::Index>{spec.n} : spec.n_sweep;
  std::vector<Eigen::Index> miss =
      spec.missing_sweep.empty() ? std::vector<Eigen::Index>{0} : spec.missing_sweep;
  std::vector<SweepPoint> pts;
  for (double h : hs)
    for (double a : as)
      for (double r : rhos)
        for (Eigen::Index n : ns)
          for (Eigen::Index m : miss) pts.push_back({h, a, r, n, m});
  return pts;
}

struct RunRecord {
  std::size_t tuple_index = 0;
  SweepPoint point;
  int replication = 0;
  std::uint64_t seed = 0;
  double mise_init = 0.0;
  double mise = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;
  std::string error;
  double wall_ms = 0.0;
};

struct TupleSummary {
  std::size_t tuple_index = 0;
  SweepPoint point;
  MiseRecord record;      // over the successful replications
  int failures = 0;
};

namespace detail {

inline CorrMatrix experiment_sigma(const ExperimentSpec& spec, double rho12) {
  switch (spec.sigma_kind) {
    case SigmaKind::Exchangeable:
      return sigma_exchangeable(spec.d, rho12);
    case SigmaKind::Sigma3:
      return sigma3(rho12);
    case SigmaKind::Sigma10:
      return sigma10(rho12);
  }
  throw InvariantError("experiment_sigma: unknown sigma kind");
}

inline unsigned experiment_worker_count(std::size_t tasks) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("ELLIPGEN_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) hw = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(hw, tasks));
}

}  // namespace detail

/// One replication of one sweep tuple. Deterministic in (master_seed,
/// tuple_index, replication).
inline RunRecord run_single(const ExperimentSpec& spec, const NormalizedGenerator& truth,
                            std::size_t tuple_index, const SweepPoint& pt, int replication) {
  RunRecord rec;
  rec.tuple_index = tuple_index;
  rec.point = pt;
  rec.replication = replication;
  rec.seed = derive_seed(spec.master_seed, tuple_index, static_cast<std::uint64_t>(replication));
  auto t0 = std::chrono::steady_clock::now();
  try {
    Rng rng(rec.seed);
    CorrMatrix sigma = detail::experiment_sigma(spec, pt.rho12);
    DataMatrix X = sample_meta_elliptical(truth.base(), sigma, pt.n, rng);
    if (pt.n_missing > 0) X = inject_missing(X, pt.n_missing, rng);

    MecipConfig cfg;
    cfg.b = spec.b;
    cfg.a = pt.a;
    cfg.h = pt.h;
    cfg.grid = spec.grid;
    cfg.init = spec.init;
    cfg.estimator = spec.estimator;
    cfg.n_max = spec.n_max;
    cfg.tol = spec.tol;
    cfg.seed = derive_seed(rec.seed, 0x1);
    MecipResult res = mecip_estimate(X, cfg);

    rec.mise = grid_ise(res.g_final.base().table(), truth.base().table());
    rec.mise_init = grid_ise(res.g_init.base().table(), truth.base().table());
    rec.iterations = res.iterations;
    rec.converged = res.converged;
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

/// Full sweep: every (tuple, replication) pair under derived seeds. Tasks are
/// independent; a worker pool sized by ELLIPGEN_THREADS (or the hardware
/// count) fills a pre-sized table, so the returned order is deterministic by
/// (tuple index, replication). The optional callback fires as records
/// complete (under a lock when threaded), for streaming partial results.
inline std::vector<RunRecord> run_experiment(
    const ExperimentSpec& spec,
    const std::function<void(const RunRecord&)>& on_record = nullptr) {
  spec.validate();
  NormalizedGenerator truth = builtin_generator(spec.truth, spec.d, spec.grid, spec.b);
  std::vector<SweepPoint> pts = sweep_points(spec);
  const std::size_t total = pts.size() * static_cast<std::size_t>(spec.replications);
  std::vector<RunRecord> records(total);

  std::mutex record_mutex;
  auto task = [&](std::size_t flat) {
    std::size_t ti = flat / static_cast<std::size_t>(spec.replications);
    int rep = static_cast<int>(flat % static_cast<std::size_t>(spec.replications));
    records[flat] = run_single(spec, truth, ti, pts[ti], rep);
    if (on_record) {
      std::lock_guard<std::mutex> lock(record_mutex);
      on_record(records[flat]);
    }
  };

  unsigned workers = detail::experiment_worker_count(total);
  if (workers <= 1) {
    for (std::size_t f = 0; f < total; ++f) task(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t f = next.fetch_add(1);
          if (f >= total) return;
          task(f);
        }
      });
    for (auto& th : pool) th.join();
  }
  return records;
}

inline std::vector<TupleSummary> summarize_experiment(const ExperimentSpec& spec,
                                                      const std::vector<RunRecord>& records) {
  std::vector<SweepPoint> pts = sweep_points(spec);
  std::vector<TupleSummary> out(pts.size());
  for (std::size_t ti = 0; ti < pts.size(); ++ti) {
    out[ti].tuple_index = ti;
    out[ti].point = pts[ti];
    std::vector<double> errs;
    for (const RunRecord& r : records) {
      if (r.tuple_index != ti) continue;
      if (r.failed) {
        ++out[ti].failures;
        continue;
      }
      errs.push_back(r.mise);
    }
    out[ti].record = MiseRecord::from_errors(std::move(errs));
  }
  return out;
}

}  // namespace ellipgen

#endif  // ELLIPGEN_SIMSTUDY_HPP
