#pragma once

// Synthetic panels from a known ZINB (or Poisson) non-homogeneous HMM.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/model.hpp"
#include "zinbhmm/random.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm {

enum class EmissionFamily { zinb, poisson };

/// Law of one simulated covariate, drawn i.i.d. per patient-day.
struct CovariateLaw {
  enum class Kind { bernoulli, uniform, normal } kind = Kind::bernoulli;
  double a = 0.5;  // bernoulli: p; uniform: low; normal: mean
  double b = 1.0;  // uniform: high; normal: sd

  static CovariateLaw bernoulli(double p) { return {Kind::bernoulli, p, 0.0}; }
  static CovariateLaw uniform(double lo = 0.0, double hi = 1.0) { return {Kind::uniform, lo, hi}; }
  static CovariateLaw normal(double mean = 0.0, double sd = 1.0) {
    return {Kind::normal, mean, sd};
  }

  double draw(RngHandle& rng) const {
    switch (kind) {
      case Kind::bernoulli: return rng.uniform() < a ? 1.0 : 0.0;
      case Kind::uniform: return a + (b - a) * rng.uniform();
      case Kind::normal: return a + b * rng.normal();
    }
    return 0.0;
  }
};

struct SimulationSpec {
  int n_patients = 100;
  int min_days = 100;
  int max_days = 110;
  int baseline_state = 2;
  EmissionFamily family = EmissionFamily::zinb;
  /// True parameters. For the Poisson family `rho` holds the log-mean
  /// coefficients and r / p_zero are unused.
  ModelParameters truth;
  std::vector<CovariateLaw> covariates;
  std::vector<std::string> covariate_names;

  int n_states() const { return truth.n_states(); }
  int n_covariates() const { return static_cast<int>(covariates.size()); }

  void validate() const {
    const int k = n_states();
    const int p = n_covariates();
    if (n_patients < 0) throw ConfigError("patients must be non-negative");
    if (min_days < 2 || max_days < min_days)
      throw ConfigError("day range must satisfy 2 <= min_days <= max_days");
    if (k < 1) throw ConfigError("simulation needs at least one state");
    if (baseline_state < 0 || baseline_state >= k)
      throw ConfigError("simulation baseline_state outside 1.." + std::to_string(k));
    if (truth.rho.rows() != k || truth.rho.cols() != p || truth.delta.rows() != k ||
        truth.delta.cols() != p || truth.p_zero.size() != k || truth.pi.size() != k ||
        static_cast<int>(truth.beta.size()) != k || static_cast<int>(truth.gamma.size()) != k)
      throw ConfigError("simulation parameter blocks have inconsistent dimensions");
    for (int f = 0; f < k; ++f)
      if (truth.beta[f].rows() != k || truth.beta[f].cols() != p)
        throw ConfigError("transition coefficients must be K x p per from-state");
    if (static_cast<int>(covariate_names.size()) != p)
      throw ConfigError("covariate names do not match the covariate design");
    if (std::abs(truth.pi.sum() - 1.0) > 1e-9 || (truth.pi.array() < 0.0).any())
      throw ConfigError("initial distribution must lie on the simplex");
    if (family == EmissionFamily::zinb) {
      for (int s = 0; s < k; ++s) {
        if (!(truth.r[s] > 0.0)) throw ConfigError("dispersions must be positive");
        if (!(truth.p_zero[s] >= 0.0 && truth.p_zero[s] <= 1.0))
          throw ConfigError("zero-inflation probabilities must lie in [0, 1]");
      }
    }
  }
};

struct GroundTruth {
  ModelParameters params;
  int baseline_state = 0;
  EmissionFamily family = EmissionFamily::zinb;
  std::vector<int> xi;             // per global day
  std::vector<std::uint8_t> z;     // structural zeros (ZINB only)
};

namespace detail {

inline std::vector<std::string> default_names(int p) {
  std::vector<std::string> out;
  for (int j = 1; j <= p; ++j) out.push_back("X" + std::to_string(j));
  return out;
}

/// Sets the masks from the non-zero pattern of the coefficients.
inline void masks_from_values(ModelParameters& m) {
  m.delta = (m.rho.array() != 0.0).cast<int>();
  for (std::size_t f = 0; f < m.beta.size(); ++f)
    m.gamma[f] = (m.beta[f].array() != 0.0).cast<int>();
}

}  // namespace detail

/// K = 3, p = 7 design with baseline state 3. X1-X4 are Bernoulli(0.5) and
/// X5-X7 Uniform(0, 1); no intercept.
inline SimulationSpec paper_default_spec() {
  SimulationSpec s;
  constexpr int K = 3, P = 7;
  s.baseline_state = 2;
  s.truth = ModelParameters::zeros(K, P);
  auto& t = s.truth;
  t.r << 3.0, 8.0, 15.0;
  t.p_zero << 0.7, 0.05, 0.01;
  t.pi << 0.9, 0.08, 0.02;
  t.rho.row(0) << -0.7, -0.8, -0.8, 0.0, -0.8, -0.7, -0.7;
  t.rho.row(1) << -0.4, 0.0, 0.0, -0.4, 0.0, -0.7, -0.6;
  t.rho.row(2) << 0.0, -0.5, 0.0, -0.5, 0.5, 0.4, 0.0;
  // beta[from](to, j), covariates numbered from 1 below
  auto set = [&](int from, int to, std::initializer_list<int> cols, double v) {
    for (int j : cols) t.beta[from - 1](to - 1, j - 1) = v;
  };
  set(1, 1, {1, 2, 3, 4, 5, 6, 7}, 3.5);
  set(1, 2, {1, 2, 3}, 2.9);
  set(2, 1, {2, 3, 7}, 2.4);
  set(2, 2, {3, 7}, 3.0);
  set(3, 1, {4, 7}, -2.9);
  set(3, 2, {4, 7}, -2.5);
  detail::masks_from_values(t);
  for (int j = 0; j < 4; ++j) s.covariates.push_back(CovariateLaw::bernoulli(0.5));
  for (int j = 4; j < P; ++j) s.covariates.push_back(CovariateLaw::uniform());
  s.covariate_names = detail::default_names(P);
  return s;
}

/// K = 2, p = 15 Poisson-emission design with baseline state 1. X1-X8 are
/// Bernoulli(0.5), X9-X15 Uniform(0, 1). X2, X3, X5 and X7 drive the
/// transitions into state 2 with magnitude 2.5 (negative out of state 1,
/// positive out of state 2).
inline SimulationSpec poisson_default_spec() {
  SimulationSpec s;
  constexpr int K = 2, P = 15;
  s.family = EmissionFamily::poisson;
  s.baseline_state = 0;
  s.truth = ModelParameters::zeros(K, P);
  auto& t = s.truth;
  t.pi << 0.9, 0.1;
  t.p_zero.setZero();
  t.rho.row(0).head(7) << -0.7, -0.7, 0.0, 0.0, -4.0, 0.0, -0.7;
  t.rho.row(1).head(7) << 0.5, -0.4, 0.0, 0.0, 0.7, 0.0, 0.5;
  for (int j : {2, 3, 5, 7}) {
    t.beta[0](1, j - 1) = -2.5;
    t.beta[1](1, j - 1) = 2.5;
  }
  detail::masks_from_values(t);
  for (int j = 0; j < 8; ++j) s.covariates.push_back(CovariateLaw::bernoulli(0.5));
  for (int j = 8; j < P; ++j) s.covariates.push_back(CovariateLaw::uniform());
  s.covariate_names = detail::default_names(P);
  return s;
}

/// Multiplies every non-zero regression coefficient by `factor`.
inline SimulationSpec scale_effects(SimulationSpec spec, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw ConfigError("effect scale factor must be positive");
  spec.truth.rho *= factor;
  for (auto& b : spec.truth.beta) b *= factor;
  return spec;
}

/// Appends `extra` covariates with zero coefficients in every block. New
/// columns alternate Bernoulli(0.5) and Uniform(0, 1).
inline SimulationSpec add_noise_covariates(SimulationSpec spec, int extra) {
  if (extra < 0) throw ConfigError("number of noise covariates must be non-negative");
  if (extra == 0) return spec;
  const int p = spec.n_covariates();
  const int k = spec.n_states();
  auto widen = [&](auto& m) {
    using M = std::decay_t<decltype(m)>;
    M out = M::Zero(m.rows(), p + extra);
    out.leftCols(p) = m;
    m = std::move(out);
  };
  auto& t = spec.truth;
  widen(t.rho);
  widen(t.delta);
  for (int f = 0; f < k; ++f) {
    widen(t.beta[f]);
    widen(t.gamma[f]);
  }
  for (int j = 0; j < extra; ++j) {
    spec.covariates.push_back(j % 2 == 0 ? CovariateLaw::bernoulli(0.5) : CovariateLaw::uniform());
    spec.covariate_names.push_back("X" + std::to_string(p + j + 1));
  }
  return spec;
}

struct SimulatedData {
  PanelDataset data;
  GroundTruth truth;
};

inline SimulatedData generate_dataset(const SimulationSpec& spec, RngHandle& rng) {
  spec.validate();
  const int n_states = spec.n_states();
  const int p = spec.n_covariates();
  const auto& par = spec.truth;
  SimulatedData out;
  out.data.covariate_names = spec.covariate_names;
  out.data.covariates.resize(0, p);
  out.truth.params = par;
  out.truth.baseline_state = spec.baseline_state;
  out.truth.family = spec.family;

  Eigen::VectorXd zeta(n_states);
  for (int i = 0; i < spec.n_patients; ++i) {
    const int len = spec.min_days +
                    static_cast<int>(rng.uniform() * (spec.max_days - spec.min_days + 1));
    RowMatrix x(len, p);
    for (int t = 0; t < len; ++t)
      for (int j = 0; j < p; ++j) x(t, j) = spec.covariates[j].draw(rng);

    std::vector<int> y(len);
    int state = sample_categorical(par.pi, rng);
    for (int t = 0; t < len; ++t) {
      if (t > 0) {
        zeta.noalias() = par.beta[state] * x.row(t - 1).transpose();
        state = sample_categorical(softmax_with_baseline(zeta, spec.baseline_state), rng);
      }
      const double eta = x.row(t).dot(par.rho.row(state));
      std::uint8_t structural = 0;
      if (spec.family == EmissionFamily::poisson) {
        std::poisson_distribution<int> pois(std::exp(eta));
        y[t] = pois(rng.engine());
      } else if (sample_bernoulli(par.p_zero[state], rng)) {
        y[t] = 0;
        structural = 1;
      } else {
        // NB(r, psi) as a gamma-Poisson mixture with mean r psi / (1 - psi)
        const double psi = logistic_psi(eta);
        const double lambda = sample_gamma(par.r[state], (1.0 - psi) / psi, rng);
        std::poisson_distribution<int> pois(lambda);
        y[t] = lambda > 0.0 ? pois(rng.engine()) : 0;
      }
      out.truth.xi.push_back(state);
      out.truth.z.push_back(structural);
    }
    out.data.add_patient(y, x);
  }
  return out;
}

}  // namespace zinbhmm
