#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"

namespace zinbhmm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndicatorMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr const char* kInterceptName = "intercept";

/// Ragged panel of daily counts with one covariate row per patient-day.
///
/// Days of all patients are stored back to back; patient i owns the global
/// rows [offsets[i], offsets[i+1]).
struct PanelDataset {
  std::vector<std::string> covariate_names;
  std::vector<std::size_t> offsets{0};
  std::vector<int> counts;
  RowMatrix covariates;

  std::size_t n_patients() const { return offsets.size() - 1; }
  std::size_t n_days() const { return counts.size(); }
  int n_covariates() const { return static_cast<int>(covariates.cols()); }
  std::size_t length(std::size_t patient) const {
    return offsets[patient + 1] - offsets[patient];
  }
  std::size_t begin(std::size_t patient) const { return offsets[patient]; }
  std::size_t end(std::size_t patient) const { return offsets[patient + 1]; }
  bool has_intercept() const {
    return !covariate_names.empty() && covariate_names.front() == kInterceptName;
  }

  /// Appends one patient; `x` must have one row per count.
  void add_patient(const std::vector<int>& y, const RowMatrix& x) {
    if (static_cast<std::size_t>(x.rows()) != y.size())
      throw DataError("patient " + std::to_string(n_patients()) +
                      ": covariate rows do not match number of days");
    if (n_days() == 0 && covariates.cols() == 0) {
      covariates.resize(0, x.cols());
    } else if (x.cols() != covariates.cols()) {
      throw DataError("patient " + std::to_string(n_patients()) +
                      ": covariate dimension " + std::to_string(x.cols()) +
                      " differs from " + std::to_string(covariates.cols()));
    }
    const auto start = static_cast<Eigen::Index>(n_days());
    covariates.conservativeResize(start + x.rows(), x.cols());
    covariates.bottomRows(x.rows()) = x;
    counts.insert(counts.end(), y.begin(), y.end());
    offsets.push_back(counts.size());
  }

  void validate() const {
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != counts.size())
      throw DataError("inconsistent patient offsets");
    if (static_cast<std::size_t>(covariates.rows()) != counts.size())
      throw DataError("covariate rows do not match number of days");
    if (!covariate_names.empty() &&
        covariate_names.size() != static_cast<std::size_t>(covariates.cols()))
      throw DataError("covariate names do not match covariate dimension");
    for (std::size_t i = 0; i < n_patients(); ++i) {
      if (length(i) < 2)
        throw DataError("patient " + std::to_string(i) + " has fewer than 2 days");
      for (std::size_t g = begin(i); g < end(i); ++g) {
        if (counts[g] < 0)
          throw DataError("patient " + std::to_string(i) + ", day " +
                          std::to_string(g - begin(i) + 1) + ": negative count");
        if (!covariates.row(static_cast<Eigen::Index>(g)).allFinite())
          throw DataError("patient " + std::to_string(i) + ", day " +
                          std::to_string(g - begin(i) + 1) + ": non-finite covariate");
      }
    }
  }
};

/// Returns a copy of `data` with a leading column of ones named "intercept".
inline PanelDataset with_intercept(const PanelDataset& data) {
  if (data.has_intercept()) return data;
  PanelDataset out = data;
  out.covariates.resize(data.covariates.rows(), data.covariates.cols() + 1);
  out.covariates.col(0).setOnes();
  out.covariates.rightCols(data.covariates.cols()) = data.covariates;
  out.covariate_names.insert(out.covariate_names.begin(), kInterceptName);
  if (out.covariate_names.size() != static_cast<std::size_t>(out.covariates.cols())) {
    out.covariate_names.resize(out.covariates.cols());
    for (int j = 1; j < out.covariates.cols(); ++j)
      out.covariate_names[j] = "X" + std::to_string(j);
  }
  return out;
}

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};

struct GammaPrior {
  double shape = 0.01;
  double rate = 0.01;
};

struct SlabPrior {
  double mean = 0.0;
  double variance = 1.0;
};

struct HyperPriors {
  BetaPrior zero_inflation{1.0, 1.0};
  GammaPrior dispersion{0.01, 0.01};
  std::vector<double> initial_concentration;  // empty: all ones
  SlabPrior transition_slab;
  SlabPrior emission_slab;
  BetaPrior transition_inclusion{1.0, 5.0};
  BetaPrior emission_inclusion{1.0, 5.0};

  Eigen::VectorXd concentration(int n_states) const {
    if (initial_concentration.empty()) return Eigen::VectorXd::Ones(n_states);
    if (static_cast<int>(initial_concentration.size()) != n_states)
      throw ConfigError("initial_state concentration has " +
                        std::to_string(initial_concentration.size()) +
                        " entries, expected " + std::to_string(n_states));
    return Eigen::Map<const Eigen::VectorXd>(initial_concentration.data(), n_states);
  }

  void validate(int n_states) const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string(what) + " must be positive and finite");
    };
    positive(zero_inflation.a, "priors.zero_inflation.a");
    positive(zero_inflation.b, "priors.zero_inflation.b");
    positive(dispersion.shape, "priors.dispersion.shape");
    positive(dispersion.rate, "priors.dispersion.rate");
    positive(transition_slab.variance, "priors.transition_slab.variance");
    positive(emission_slab.variance, "priors.emission_slab.variance");
    positive(transition_inclusion.a, "priors.transition_inclusion.a");
    positive(transition_inclusion.b, "priors.transition_inclusion.b");
    positive(emission_inclusion.a, "priors.emission_inclusion.a");
    positive(emission_inclusion.b, "priors.emission_inclusion.b");
    const Eigen::VectorXd alpha = concentration(n_states);
    for (int k = 0; k < n_states; ++k) positive(alpha[k], "priors.initial_state.concentration");
  }
};

/// Model dimensions and priors. `baseline_state` is zero based here; the CLI
/// and file formats use 1-based state labels.
struct HmmSpec {
  int n_states = 3;
  int baseline_state = 2;
  bool include_intercept = false;
  HyperPriors priors;

  void validate() const {
    if (n_states < 1) throw ConfigError("states must be at least 1");
    if (n_states > 255) throw ConfigError("states must be at most 255");
    if (baseline_state < 0 || baseline_state >= n_states)
      throw ConfigError("baseline_state " + std::to_string(baseline_state + 1) +
                        " outside 1.." + std::to_string(n_states));
    priors.validate(n_states);
  }
};

/// Every parameter except the latent paths.
///
/// Transition coefficients are stored as one K x p matrix per from-state whose
/// baseline row is identically zero; gamma mirrors that layout.
struct ModelParameters {
  std::vector<Eigen::MatrixXd> beta;
  std::vector<IndicatorMatrix> gamma;
  Eigen::MatrixXd rho;     // K x p
  IndicatorMatrix delta;   // K x p
  Eigen::VectorXd r;
  Eigen::VectorXd p_zero;
  Eigen::VectorXd pi;

  static ModelParameters zeros(int n_states, int n_covariates) {
    ModelParameters m;
    m.beta.assign(n_states, Eigen::MatrixXd::Zero(n_states, n_covariates));
    m.gamma.assign(n_states, IndicatorMatrix::Zero(n_states, n_covariates));
    m.rho = Eigen::MatrixXd::Zero(n_states, n_covariates);
    m.delta = IndicatorMatrix::Zero(n_states, n_covariates);
    m.r = Eigen::VectorXd::Ones(n_states);
    m.p_zero = Eigen::VectorXd::Constant(n_states, 0.5);
    m.pi = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    return m;
  }

  int n_states() const { return static_cast<int>(r.size()); }
  int n_covariates() const { return static_cast<int>(rho.cols()); }

  /// Number of coefficients with an active inclusion indicator.
  int n_included(int baseline_state) const {
    int n = delta.sum();
    for (int from = 0; from < n_states(); ++from)
      for (int to = 0; to < n_states(); ++to)
        if (to != baseline_state) n += gamma[from].row(to).sum();
    return n;
  }
};

/// One MCMC configuration: parameters plus latent paths (xi) and structural
/// zero indicators (z), both indexed by global day.
struct ChainState {
  ModelParameters params;
  std::vector<int> xi;
  std::vector<std::uint8_t> z;
};

}  // namespace zinbhmm
