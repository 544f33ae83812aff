#ifndef ELLIPGEN_IO_HPP
#define ELLIPGEN_IO_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ellipgen/core.hpp"
#include "ellipgen/data.hpp"
#include "ellipgen/generator.hpp"
#include "ellipgen/mecip.hpp"
#include "ellipgen/simstudy.hpp"

namespace ellipgen {

using json = nlohmann::json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Data CSV: rectangular, header required, missing cells equal to na_token.
// ---------------------------------------------------------------------------

inline DataMatrix read_data(const std::string& path, const std::string& na_token = "NA") {
  std::ifstream in(path);
  if (!in) throw ParseError("read_data: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("read_data: empty file " + path);
  const std::size_t d = detail::split_csv_line(line).size();
  if (d == 0) throw ParseError("read_data: empty header in " + path);

  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != d)
      throw ParseError("read_data: row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) {
      if (cells[j] == na_token) {
        values.push_back(0.0);
        mask.push_back(1);
        continue;
      }
      try {
        std::size_t used = 0;
        double v = std::stod(cells[j], &used);
        if (used != cells[j].size() || !std::isfinite(v)) throw std::invalid_argument("");
        values.push_back(v);
        mask.push_back(0);
      } catch (const std::exception&) {
        throw ParseError("read_data: cell (" + std::to_string(row) + "," +
                         std::to_string(j + 1) + ") is not numeric: '" + cells[j] + "'");
      }
    }
  }
  if (row == 0) throw ParseError("read_data: no data rows in " + path);

  Eigen::MatrixXd M(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d));
  bool any_missing = false;
  for (std::size_t i = 0; i < row; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * d + j];
      any_missing = any_missing || mask[i * d + j];
    }
  DataMatrix X = any_missing ? DataMatrix(std::move(M), std::move(mask))
                             : DataMatrix(std::move(M));
  X.validate();
  return X;
}

inline void write_data(const std::string& path, const DataMatrix& X,
                       const std::string& na_token = "NA") {
  std::ofstream out(path);
  if (!out) throw ParseError("write_data: cannot open " + path);
  for (Eigen::Index j = 0; j < X.d(); ++j) out << (j ? ",x" : "x") << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < X.n(); ++i) {
    for (Eigen::Index j = 0; j < X.d(); ++j) {
      if (j) out << ",";
      if (X.is_missing(i, j))
        out << na_token;
      else
        out << detail::format_double(X(i, j));
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Generator files: CSV `t,value` plus a JSON sidecar
// {dim, b, normalized, grid:{start,step,count}, tail_mass} at <path>.json.
// ---------------------------------------------------------------------------

struct GeneratorFile {
  Generator gen;
  std::optional<double> b;
  bool normalized = false;
  double tail_mass = 0.0;
};

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline void write_generator(const std::string& path, const Generator& g,
                            std::optional<double> b = std::nullopt, bool normalized = false) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_generator: cannot open " + path);
  out << "t,value\n";
  const auto& grid = g.grid();
  for (std::size_t k = 0; k < grid.count; ++k)
    out << detail::format_double(grid.node(k)) << ","
        << detail::format_double(g.table().values()[k]) << "\n";

  json side;
  side["dim"] = g.dim();
  if (b) side["b"] = *b;
  side["normalized"] = normalized;
  side["grid"] = {{"start", grid.start}, {"step", grid.step}, {"count", grid.count}};
  side["tail_mass"] = tail_mass_fraction(g);
  std::ofstream sout(sidecar_path(path));
  if (!sout) throw ParseError("write_generator: cannot open " + sidecar_path(path));
  sout << side.dump(2) << "\n";
}

inline void write_generator(const std::string& path, const NormalizedGenerator& g) {
  write_generator(path, g.base(), g.b(), true);
}

inline GeneratorFile read_generator(const std::string& path,
                                    std::optional<int> dim_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_generator: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("read_generator: empty file " + path);
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() != 2 || header[0] != "t" || header[1] != "value")
    throw ParseError("read_generator: header must be 't,value' in " + path);

  std::vector<double> t, v;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != 2)
      throw ParseError("read_generator: row " + std::to_string(row) + " malformed");
    try {
      t.push_back(std::stod(cells[0]));
      v.push_back(std::stod(cells[1]));
    } catch (const std::exception&) {
      throw ParseError("read_generator: non-numeric cell at row " + std::to_string(row));
    }
  }
  if (t.size() < 2) throw ParseError("read_generator: needs at least 2 rows");

  GeneratorFile result{Generator(2, TabulatedFunction(UniformGrid(0, 1, 2), {0.0, 0.0})),
                       std::nullopt, false, 0.0};
  int dim = 0;
  std::ifstream sin(sidecar_path(path));
  if (sin) {
    json side = json::parse(sin);
    dim = side.at("dim").get<int>();
    if (side.contains("b") && !side["b"].is_null()) result.b = side["b"].get<double>();
    result.normalized = side.value("normalized", false);
    result.tail_mass = side.value("tail_mass", 0.0);
  }
  if (dim_override) dim = *dim_override;
  if (dim < 1)
    throw ParseError("read_generator: dimension unknown (no sidecar; pass it explicitly)");

  const double step = t[1] - t[0];
  if (!(step > 0)) throw ParseError("read_generator: t column must increase");
  for (std::size_t k = 0; k + 1 < t.size(); ++k)
    if (std::abs((t[k + 1] - t[k]) - step) > 1e-9 * std::max(1.0, std::abs(step)))
      throw ParseError("read_generator: t column is not a uniform grid near row " +
                       std::to_string(k + 1));
  UniformGrid grid(t[0], step, t.size());
  result.gen = Generator(dim, TabulatedFunction(grid, std::move(v)));
  return result;
}

// ---------------------------------------------------------------------------
// Diagnostics and provenance
// ---------------------------------------------------------------------------

inline json mecip_diagnostics(const MecipResult& res) {
  json out;
  out["iterations"] = res.iterations;
  out["distances"] = res.history;
  out["converged"] = res.converged;
  out["clamp_count"] = res.clamp_count;
  json warn = json::array();
  for (const Warning& w : res.warnings) warn.push_back(w.detail);
  out["warnings"] = warn;
  json sig = json::array();
  for (Eigen::Index i = 0; i < res.sigma.d(); ++i) {
    json rowj = json::array();
    for (Eigen::Index j = 0; j < res.sigma.d(); ++j) rowj.push_back(res.sigma(i, j));
    sig.push_back(rowj);
  }
  out["sigma"] = sig;
  return out;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Experiment tables
// ---------------------------------------------------------------------------

inline std::string run_record_header() {
  return "tuple,h,a,rho12,n,n_missing,replication,seed,mise_init,mise,iterations,converged,"
         "failed,error,wall_ms";
}

inline std::string run_record_row(const RunRecord& r) {
  std::string err = r.error;
  for (char& c : err)
    if (c == ',' || c == '\n') c = ';';
  std::ostringstream os;
  os << r.tuple_index << "," << detail::format_double(r.point.h) << ","
     << detail::format_double(r.point.a) << "," << detail::format_double(r.point.rho12) << ","
     << r.point.n << "," << r.point.n_missing << "," << r.replication << "," << r.seed << ","
     << (r.failed ? "" : detail::format_double(r.mise_init)) << ","
     << (r.failed ? "" : detail::format_double(r.mise)) << "," << r.iterations << ","
     << (r.converged ? 1 : 0) << "," << (r.failed ? 1 : 0) << "," << err << ","
     << detail::format_double(r.wall_ms);
  return os.str();
}

inline void write_run_records(const std::string& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_run_records: cannot open " + path);
  out << run_record_header() << "\n";
  for (const RunRecord& r : records) out << run_record_row(r) << "\n";
}

inline void write_experiment_summary(const std::string& path,
                                     const std::vector<TupleSummary>& summaries) {
  std::ofstream out(path);
  if (!out) throw ParseError("write_experiment_summary: cannot open " + path);
  out << "tuple,h,a,rho12,n,n_missing,replications_ok,failures,mise_mean,mise_median,mise_sd\n";
  for (const TupleSummary& s : summaries) {
    out << s.tuple_index << "," << detail::format_double(s.point.h) << ","
        << detail::format_double(s.point.a) << "," << detail::format_double(s.point.rho12) << ","
        << s.point.n << "," << s.point.n_missing << "," << s.record.errors.size() << ","
        << s.failures << "," << detail::format_double(s.record.mean) << ","
        << detail::format_double(s.record.median) << "," << detail::format_double(s.record.sd)
        << "\n";
  }
}

}  // namespace ellipgen

#endif  // ELLIPGEN_IO_HPP
