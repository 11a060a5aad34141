#pragma once

// CSV and JSON file formats shared by the command-line tool and the plotting
// scripts.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "spheremix/covariates.hpp"
#include "spheremix/simulation.hpp"

namespace spheremix::io {

using json = nlohmann::ordered_json;

/// Header plus a dense numeric body.
struct Table {
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  std::optional<Eigen::Index> find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      std::string a = names[i];
      std::string b(name);
      std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
      std::transform(b.begin(), b.end(), b.begin(), [](unsigned char c) { return std::tolower(c); });
      if (a == b) return static_cast<Eigen::Index>(i);
    }
    return std::nullopt;
  }

  Eigen::Index require(std::string_view name) const {
    const auto idx = find(name);
    if (!idx) throw DomainError("column '" + std::string(name) + "' not found");
    return *idx;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline double parse_number(std::string_view s, std::size_t line, std::size_t col) {
  double v = 0.0;
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = trim(s.substr(1, s.size() - 2));
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("column " + std::to_string(col + 1) + ": '" + std::string(s) + "' is not a number", line);
  }
  return v;
}

}  // namespace detail

inline Table parse_csv(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    if (t.names.empty()) {
      for (const auto c : cells) t.names.push_back(detail::unquote(c));
      for (const auto& n : t.names)
        if (n.empty()) throw ParseError("empty column name in header", lineno);
      bool numeric_header = true;
      for (const auto c : cells) {
        double v;
        const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
        numeric_header &= ec == std::errc() && ptr == c.data() + c.size();
      }
      if (numeric_header) throw ParseError("header row is missing", lineno);
      continue;
    }
    if (cells.size() != t.names.size()) {
      throw ParseError("expected " + std::to_string(t.names.size()) + " fields, found " + std::to_string(cells.size()), lineno);
    }
    std::vector<double> r(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) r[c] = detail::parse_number(cells[c], lineno, c);
    rows.push_back(std::move(r));
  }
  if (t.names.empty()) throw ParseError("file is empty", std::max<std::size_t>(lineno, 1));
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  return parse_csv(in);
}

struct LoadedData {
  DataMatrix data;
  bool geographic = false;
  bool renormalized = false;  // some Cartesian row had |norm - 1| > 1e-6
  std::vector<std::string> columns;  // columns used for the coordinates
};

inline constexpr double kRenormalizeWarning = 1e-6;

/// Observations from a table. Columns named lat and lon are converted from
/// degrees; otherwise every column not listed in `exclude` is a Cartesian
/// coordinate and rows are normalized.
inline LoadedData load_points(const Table& t, const std::vector<std::string>& exclude = {}) {
  if (t.values.rows() == 0) throw DomainError("input has no data rows");
  LoadedData out;
  const auto lat = t.find("lat");
  const auto lon = t.find("lon");
  if (lat && lon) {
    Eigen::MatrixXd x(t.values.rows(), 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      try {
        x.row(i) = geo_to_cart({t.values(i, *lat), t.values(i, *lon)}).coords().transpose();
      } catch (const DomainError& e) {
        throw DegenerateError(std::string(e.what()) + " (row " + std::to_string(i + 1) + ")", static_cast<std::size_t>(i));
      }
    }
    out.data = DataMatrix(std::move(x));
    out.geographic = true;
    out.columns = {t.names[static_cast<std::size_t>(*lat)], t.names[static_cast<std::size_t>(*lon)]};
    return out;
  }
  std::vector<Eigen::Index> cols;
  for (std::size_t c = 0; c < t.names.size(); ++c) {
    bool skip = false;
    for (const auto& e : exclude) skip |= t.find(e) == static_cast<Eigen::Index>(c);
    if (!skip) {
      cols.push_back(static_cast<Eigen::Index>(c));
      out.columns.push_back(t.names[c]);
    }
  }
  if (cols.size() < 3) throw DomainError("need at least 3 coordinate columns");
  Eigen::MatrixXd x(t.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = t.values.col(cols[c]);
  const Eigen::VectorXd norms = x.rowwise().norm();
  out.renormalized = ((norms.array() - 1.0).abs() > kRenormalizeWarning).any();
  out.data = normalize_rows(x);
  return out;
}

/// Named columns as an n x q matrix.
inline Eigen::MatrixXd select_columns(const Table& t, const std::vector<std::string>& names) {
  Eigen::MatrixXd x(t.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = t.values.col(t.require(names[c]));
  return x;
}

/// Integer labels from the column named "label", or from the only column.
inline std::vector<int> read_labels(const std::string& path) {
  const Table t = read_csv(path);
  Eigen::Index col = 0;
  if (const auto idx = t.find("label")) {
    col = *idx;
  } else if (t.names.size() != 1) {
    throw DomainError("'" + path + "' has no 'label' column");
  }
  std::vector<int> out(static_cast<std::size_t>(t.values.rows()));
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    const double v = t.values(i, col);
    if (v != std::floor(v)) throw ParseError("label is not an integer", static_cast<std::size_t>(i) + 2);
    out[static_cast<std::size_t>(i)] = static_cast<int>(v);
  }
  return out;
}

/// Shortest-round-trip is not required; 17 significant digits always are.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes with LF line endings regardless of platform.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw DomainError("cannot write '" + path + "'");
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  std::ofstream out_;
};

inline void write_matrix(const std::string& path, const std::vector<std::string>& header, const Eigen::MatrixXd& m) {
  CsvWriter w(path);
  w.row(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> r;
    for (Eigen::Index c = 0; c < m.cols(); ++c) r.push_back(fmt(m(i, c)));
    w.row(r);
  }
}

inline void write_points(const std::string& path, const DataMatrix& x) {
  std::vector<std::string> header;
  if (x.dim() == 3) {
    header = {"x", "y", "z"};
  } else {
    for (Eigen::Index c = 0; c < x.dim(); ++c) header.push_back("x" + std::to_string(c + 1));
  }
  write_matrix(path, header, x.matrix());
}

/// row, label (1-based), max_responsibility
inline void write_labels(const std::string& path, const Eigen::MatrixXd& w) {
  CsvWriter out(path);
  out.row("row", "label", "max_responsibility");
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Index j = 0;
    const double m = w.row(i).maxCoeff(&j);
    out.row(static_cast<long>(i + 1), static_cast<long>(j + 1), m);
  }
}

/// row, label (1-based)
inline void write_truth(const std::string& path, const std::vector<int>& labels) {
  CsvWriter out(path);
  out.row("row", "label");
  for (std::size_t i = 0; i < labels.size(); ++i) out.row(static_cast<long>(i + 1), static_cast<long>(labels[i] + 1));
}

inline void write_responsibilities(const std::string& path, const Eigen::MatrixXd& w) {
  CsvWriter out(path);
  std::vector<std::string> header{"row"};
  for (Eigen::Index j = 0; j < w.cols(); ++j) header.push_back("w" + std::to_string(j + 1));
  out.row(header);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    std::vector<std::string> r{std::to_string(i + 1)};
    for (Eigen::Index j = 0; j < w.cols(); ++j) r.push_back(fmt(w(i, j)));
    out.row(r);
  }
}

/// K, loglik, bic, icl, nu; failed K are written with NA criteria.
inline void write_icl_table(const std::string& path, const KSelection& sel) {
  CsvWriter out(path);
  out.row("K", "loglik", "bic", "icl", "nu");
  for (const auto& r : sel.table) out.row(static_cast<long>(r.k), r.loglik, r.bic, r.icl, static_cast<long>(r.n_params));
}

/// replicate, kind, n, chosen_K, ari, seconds
inline void write_experiment(const std::string& path, const ExperimentReport& rep) {
  CsvWriter out(path);
  out.row("replicate", "kind", "n", "chosen_K", "ari", "seconds");
  for (const auto& r : rep.records) {
    out.row(static_cast<long>(r.replicate + 1), to_string(r.fit_kind), static_cast<long>(r.n),
            r.ok ? std::to_string(r.chosen_k) : std::string("NA"), r.ari, r.seconds);
  }
}

inline json experiment_summary_json(const ExperimentReport& rep) {
  json arr = json::array();
  for (const auto& s : rep.summaries) {
    arr.push_back({{"kind", to_string(s.fit_kind)},
                   {"n", s.n},
                   {"completed", s.completed},
                   {"ari_q1", s.ari_q1},
                   {"ari_median", s.ari_median},
                   {"ari_q3", s.ari_q3},
                   {"seconds_median", s.seconds_median},
                   {"k2_rate", s.true_k_rate}});
  }
  return arr;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

/// Fields in fixed order: kind, K, weights, components, loglik, bic, icl, n, seed.
inline json model_json(const FitResult& r, std::size_t n, std::uint64_t seed) {
  json comps = json::array();
  for (const auto& c : r.model.components) comps.push_back({{"mu", vector_json(c.mu)}, {"gamma", vector_json(c.gamma)}});
  return {{"kind", to_string(r.model.kind)},
          {"K", r.model.size()},
          {"weights", vector_json(r.model.weights)},
          {"components", comps},
          {"loglik", r.loglik},
          {"bic", r.bic},
          {"icl", r.icl},
          {"n", n},
          {"seed", seed}};
}

inline void add_concomitant(json& j, const ConcomitantCoefficients& c, const std::vector<std::string>& covariates) {
  j["covariates"] = covariates;
  j["beta"] = matrix_json(c.beta);
}

inline void add_regression(json& j, const RegressionCoefficients& c, const std::vector<std::string>& covariates) {
  j["covariates"] = covariates;
  json bs = json::array();
  for (const auto& rc : c.components) bs.push_back(matrix_json(rc.b));
  j["B"] = bs;
}

inline MixtureModel model_from_json(const json& j) {
  MixtureModel m;
  m.kind = kind_from_string(j.at("kind").get<std::string>());
  const auto& w = j.at("weights");
  m.weights.resize(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) m.weights[static_cast<Eigen::Index>(i)] = w[i].get<double>();
  for (const auto& c : j.at("components")) {
    ComponentParams p;
    for (int a = 0; a < 3; ++a) p.mu[a] = c.at("mu").at(static_cast<std::size_t>(a)).get<double>();
    for (int a = 0; a < 2; ++a) p.gamma[a] = c.at("gamma").at(static_cast<std::size_t>(a)).get<double>();
    m.components.push_back(p);
  }
  validate_model(m);
  return m;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  return json::parse(in);
}

}  // namespace spheremix::io
