#pragma once

// Plain-text panel datasets and JSON ground truth.
//
//   zinbhmm-dataset 1
//   patients <N>
//   covariates <p> <name_1> ... <name_p>
//   patient <i> days <T_i>
//   <day> <count> <x_1> ... <x_p>      (T_i lines, days numbered from 1)
//   ...
//
// Covariates are written with 17 significant digits so a write/read cycle is
// value-identical. Lines starting with '#' and blank lines are ignored.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/io/config.hpp"
#include "zinbhmm/simulation.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm::io {

inline constexpr const char* kDatasetMagic = "zinbhmm-dataset";
inline constexpr int kDatasetVersion = 1;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset(std::ostream& out, const PanelDataset& data) {
  out << kDatasetMagic << ' ' << kDatasetVersion << '\n';
  out << "patients " << data.n_patients() << '\n';
  out << "covariates " << data.n_covariates();
  for (int j = 0; j < data.n_covariates(); ++j)
    out << ' '
        << (j < static_cast<int>(data.covariate_names.size()) ? data.covariate_names[j]
                                                              : "X" + std::to_string(j + 1));
  out << '\n';
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    out << "patient " << i + 1 << " days " << data.length(i) << '\n';
    for (std::size_t g = data.begin(i); g < data.end(i); ++g) {
      out << g - data.begin(i) + 1 << ' ' << data.counts[g];
      for (int j = 0; j < data.n_covariates(); ++j)
        out << ' ' << format_double(data.covariates(static_cast<Eigen::Index>(g), j));
      out << '\n';
    }
  }
}

inline void write_dataset(const std::string& path, const PanelDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_dataset(out, data);
  if (!out) throw DataError("failed writing " + path);
}

namespace detail {

class LineReader {
 public:
  LineReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  /// Next non-blank, non-comment line split on whitespace; empty at EOF.
  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::istringstream ss(line);
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      if (tok.empty() || tok[0][0] == '#') continue;
      return tok;
    }
    return {};
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(origin_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  long long integer(const std::string& s) const {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + s + "'");
    }
    if (pos != s.size()) fail("expected an integer, got '" + s + "'");
    return v;
  }

  double real(const std::string& s) const {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      fail("expected a number, got '" + s + "'");
    }
    if (pos != s.size()) fail("expected a number, got '" + s + "'");
    return v;
  }

 private:
  std::istream& in_;
  std::string origin_;
  int line_no_ = 0;
};

}  // namespace detail

inline PanelDataset read_dataset(std::istream& in, const std::string& origin = "dataset") {
  detail::LineReader lr(in, origin);
  auto tok = lr.next();
  if (tok.size() != 2 || tok[0] != kDatasetMagic) lr.fail("missing 'zinbhmm-dataset' header");
  if (lr.integer(tok[1]) != kDatasetVersion) lr.fail("unsupported dataset version " + tok[1]);

  tok = lr.next();
  if (tok.size() != 2 || tok[0] != "patients") lr.fail("expected 'patients <N>'");
  const long long n = lr.integer(tok[1]);
  if (n < 0) lr.fail("negative patient count");

  tok = lr.next();
  if (tok.size() < 2 || tok[0] != "covariates") lr.fail("expected 'covariates <p> <names...>'");
  const long long p = lr.integer(tok[1]);
  if (p < 0) lr.fail("negative covariate count");
  if (static_cast<long long>(tok.size()) != p + 2)
    lr.fail("expected " + std::to_string(p) + " covariate names");

  PanelDataset data;
  data.covariate_names.assign(tok.begin() + 2, tok.end());
  data.covariates.resize(0, p);
  for (long long i = 1; i <= n; ++i) {
    tok = lr.next();
    if (tok.size() != 4 || tok[0] != "patient" || tok[2] != "days")
      lr.fail("expected 'patient " + std::to_string(i) + " days <T>'");
    if (lr.integer(tok[1]) != i) lr.fail("patients must be numbered 1.." + std::to_string(n));
    const long long len = lr.integer(tok[3]);
    if (len < 2) lr.fail("patient " + std::to_string(i) + " has fewer than 2 days");
    std::vector<int> y(static_cast<std::size_t>(len));
    RowMatrix x(len, p);
    for (long long t = 0; t < len; ++t) {
      tok = lr.next();
      if (static_cast<long long>(tok.size()) != p + 2)
        lr.fail("patient " + std::to_string(i) + ", day " + std::to_string(t + 1) + ": expected " +
                std::to_string(p + 2) + " fields, got " + std::to_string(tok.size()));
      if (lr.integer(tok[0]) != t + 1)
        lr.fail("patient " + std::to_string(i) + ": days must be numbered consecutively from 1");
      const long long count = lr.integer(tok[1]);
      if (count < 0 || count > std::numeric_limits<int>::max())
        lr.fail("patient " + std::to_string(i) + ", day " + std::to_string(t + 1) +
                ": count must be a non-negative integer");
      y[t] = static_cast<int>(count);
      for (long long j = 0; j < p; ++j) {
        const double v = lr.real(tok[j + 2]);
        if (!std::isfinite(v))
          lr.fail("patient " + std::to_string(i) + ", day " + std::to_string(t + 1) +
                  ": non-finite covariate " + data.covariate_names[j]);
        x(t, j) = v;
      }
    }
    data.add_patient(y, x);
  }
  if (!lr.next().empty()) lr.fail("unexpected content after the last patient");
  data.validate();
  return data;
}

inline PanelDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_dataset(in, path);
}

// ---------------------------------------------------------------------------
// Ground truth (1-based state labels in the file)

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Json matrix_to_json(const IndicatorMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

template <class M>
M matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw DataError(what + ": expected " + std::to_string(rows) + " rows");
  M m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError(what + ": expected " + std::to_string(cols) + " columns");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = row[static_cast<std::size_t>(c)].get<typename M::Scalar>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw DataError(what + ": expected " + std::to_string(n) + " values");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

/// Parameters with 1-based states; beta is listed per from-state.
inline Json parameters_to_json(const ModelParameters& m) {
  Json beta = Json::array(), gamma = Json::array();
  for (std::size_t f = 0; f < m.beta.size(); ++f) {
    beta.push_back(matrix_to_json(m.beta[f]));
    gamma.push_back(matrix_to_json(m.gamma[f]));
  }
  return Json{{"beta", beta},
              {"gamma", gamma},
              {"rho", matrix_to_json(m.rho)},
              {"delta", matrix_to_json(m.delta)},
              {"r", vector_to_json(m.r)},
              {"p_zero", vector_to_json(m.p_zero)},
              {"pi", vector_to_json(m.pi)}};
}

inline ModelParameters parameters_from_json(const Json& j, int n_states, int p) {
  try {
    ModelParameters m = ModelParameters::zeros(n_states, p);
    const auto& beta = j.at("beta");
    const auto& gamma = j.at("gamma");
    if (!beta.is_array() || static_cast<int>(beta.size()) != n_states || !gamma.is_array() ||
        static_cast<int>(gamma.size()) != n_states)
      throw DataError("ground truth: beta/gamma need one block per from-state");
    for (int f = 0; f < n_states; ++f) {
      m.beta[f] = matrix_from_json<Eigen::MatrixXd>(beta[f], n_states, p, "ground truth beta");
      m.gamma[f] = matrix_from_json<IndicatorMatrix>(gamma[f], n_states, p, "ground truth gamma");
    }
    m.rho = matrix_from_json<Eigen::MatrixXd>(j.at("rho"), n_states, p, "ground truth rho");
    m.delta = matrix_from_json<IndicatorMatrix>(j.at("delta"), n_states, p, "ground truth delta");
    m.r = vector_from_json(j.at("r"), n_states, "ground truth r");
    m.p_zero = vector_from_json(j.at("p_zero"), n_states, "ground truth p_zero");
    m.pi = vector_from_json(j.at("pi"), n_states, "ground truth pi");
    return m;
  } catch (const Json::exception& e) {
    throw DataError(std::string("ground truth: ") + e.what());
  }
}

inline Json ground_truth_to_json(const GroundTruth& truth, const PanelDataset& data) {
  Json states = Json::array(), zeros = Json::array();
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    std::vector<int> xi, z;
    for (std::size_t g = data.begin(i); g < data.end(i); ++g) {
      xi.push_back(truth.xi[g] + 1);
      z.push_back(truth.z[g]);
    }
    states.push_back(xi);
    zeros.push_back(z);
  }
  return Json{{"family", truth.family == EmissionFamily::poisson ? "poisson" : "zinb"},
              {"states", truth.params.n_states()},
              {"baseline_state", truth.baseline_state + 1},
              {"covariates", data.covariate_names},
              {"parameters", parameters_to_json(truth.params)},
              {"state_paths", states},
              {"structural_zeros", zeros}};
}

inline GroundTruth ground_truth_from_json(const Json& j) {
  GroundTruth t;
  try {
    const std::string family = j.at("family").get<std::string>();
    if (family != "zinb" && family != "poisson")
      throw DataError("ground truth: unknown family '" + family + "'");
    t.family = family == "poisson" ? EmissionFamily::poisson : EmissionFamily::zinb;
    const int k = j.at("states").get<int>();
    t.baseline_state = j.at("baseline_state").get<int>() - 1;
    const int p = static_cast<int>(j.at("covariates").size());
    t.params = parameters_from_json(j.at("parameters"), k, p);
    for (const auto& path : j.at("state_paths"))
      for (const auto& s : path) {
        const int v = s.get<int>();
        if (v < 1 || v > k) throw DataError("ground truth: state label out of range");
        t.xi.push_back(v - 1);
      }
    for (const auto& path : j.at("structural_zeros"))
      for (const auto& s : path) t.z.push_back(static_cast<std::uint8_t>(s.get<int>()));
  } catch (const Json::exception& e) {
    throw DataError(std::string("ground truth: ") + e.what());
  }
  return t;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

inline GroundTruth read_ground_truth(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  try {
    return ground_truth_from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace zinbhmm::io
