#pragma once

// Model mathematics: covariate-driven transition probabilities, zero-inflated
// negative binomial emissions and the complete/observed data likelihoods.
// Everything here is deterministic and re-entrant.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm {

inline constexpr double kPsiFloor = 1e-10;
inline constexpr double kPsiCeil = 1.0 - 1e-10;

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// log(1 + exp(x)).
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Writes multinomial-logit probabilities for the linear predictors `zeta`
/// into `out`. The baseline entry of `zeta` is ignored and treated as zero.
template <class In, class Out>
void softmax_into(const In& zeta, int baseline_state, Out&& out) {
  const auto n = zeta.size();
  double top = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double z = k == baseline_state ? 0.0 : zeta[k];
    if (!std::isfinite(z)) throw NumericalError("non-finite transition linear predictor");
    out[k] = z;
    top = std::max(top, z);
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    out[k] = std::exp(out[k] - top);
    total += out[k];
  }
  for (Eigen::Index k = 0; k < n; ++k) out[k] /= total;
}

inline Eigen::VectorXd softmax_with_baseline(const Eigen::Ref<const Eigen::VectorXd>& zeta,
                                             int baseline_state) {
  Eigen::VectorXd out(zeta.size());
  softmax_into(zeta, baseline_state, out);
  return out;
}

/// Pr(next state = k | current state, x) for every k, where `beta_from` holds
/// one coefficient row per destination state (K x p; the baseline row is not
/// read).
inline Eigen::VectorXd transition_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                        const Eigen::MatrixXd& beta_from,
                                        int baseline_state) {
  if (x.size() != beta_from.cols())
    throw DataError("covariate dimension does not match transition coefficients");
  const Eigen::VectorXd zeta = beta_from * x.transpose();
  return softmax_with_baseline(zeta, baseline_state);
}

/// Log negative binomial pmf with dispersion r and probability psi:
/// Gamma(y+r) / (Gamma(r) y!) (1-psi)^r psi^y.
inline double nb_log_pmf(int y, double r, double psi) {
  if (!(psi > 0.0 && psi < 1.0)) throw NumericalError("psi outside (0, 1)");
  if (!(r > 0.0)) throw NumericalError("dispersion must be positive");
  if (y < 0) throw DataError("negative count");
  const double base = r * std::log1p(-psi);
  if (y == 0) return base;
  return std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) + base +
         y * std::log(psi);
}

/// Logistic link with the result clamped to [1e-10, 1 - 1e-10].
inline double logistic_psi(double eta) {
  if (!std::isfinite(eta)) throw NumericalError("non-finite emission linear predictor");
  const double psi = 1.0 / (1.0 + std::exp(-eta));
  return std::clamp(psi, kPsiFloor, kPsiCeil);
}

inline double psi_from_covariates(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& rho_k) {
  if (x.size() != rho_k.size())
    throw DataError("covariate dimension does not match emission coefficients");
  return logistic_psi(x.dot(rho_k));
}

/// Mean of the negative binomial component.
inline double nb_mean(double r, double psi) { return psi * r / (1.0 - psi); }

/// Zero-inflated NB: p_zero is the weight of the structural-zero component.
inline double zinb_log_pmf(int y, double r, double psi, double p_zero) {
  if (!(p_zero > 0.0 && p_zero < 1.0)) throw NumericalError("p_zero outside (0, 1)");
  if (y == 0) return log_add_exp(std::log(p_zero), std::log1p(-p_zero) + nb_log_pmf(0, r, psi));
  return std::log1p(-p_zero) + nb_log_pmf(y, r, psi);
}

/// psi for every (day, state); days x K.
inline Eigen::MatrixXd psi_matrix(const PanelDataset& data, const Eigen::MatrixXd& rho) {
  Eigen::MatrixXd psi = data.covariates * rho.transpose();
  for (Eigen::Index i = 0; i < psi.size(); ++i) psi.data()[i] = logistic_psi(psi.data()[i]);
  return psi;
}

/// Log ZINB emission densities for every (day, state); days x K.
inline Eigen::MatrixXd emission_log_densities(const PanelDataset& data,
                                              const ModelParameters& params,
                                              const Eigen::MatrixXd& psi) {
  const int n_states = params.n_states();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.n_days()), n_states);
  Eigen::VectorXd lgamma_r(n_states), log_p(n_states), log_not_p(n_states);
  for (int k = 0; k < n_states; ++k) {
    const double r = params.r[k];
    const double p = params.p_zero[k];
    if (!(r > 0.0)) throw NumericalError("dispersion must be positive");
    if (!(p > 0.0 && p < 1.0)) throw NumericalError("p_zero outside (0, 1)");
    lgamma_r[k] = std::lgamma(r);
    log_p[k] = std::log(p);
    log_not_p[k] = std::log1p(-p);
  }
  for (std::size_t g = 0; g < data.n_days(); ++g) {
    const int y = data.counts[g];
    const double lfact = std::lgamma(y + 1.0);
    const auto row = static_cast<Eigen::Index>(g);
    for (int k = 0; k < n_states; ++k) {
      const double r = params.r[k];
      const double log_q = std::log1p(-psi(row, k));
      if (y == 0) {
        out(row, k) = log_add_exp(log_p[k], log_not_p[k] + r * log_q);
      } else {
        out(row, k) = log_not_p[k] + std::lgamma(y + r) - lgamma_r[k] - lfact + r * log_q +
                      y * std::log(psi(row, k));
      }
    }
  }
  return out;
}

/// Row-stochastic K x K transition matrix used to move from global day g to
/// day g+1 (driven by the covariates of day g).
inline void transition_matrix(const PanelDataset& data, const ModelParameters& params,
                              int baseline_state, std::size_t g,
                              Eigen::Ref<Eigen::MatrixXd> out) {
  const int n_states = params.n_states();
  const auto x = data.covariates.row(static_cast<Eigen::Index>(g));
  double zeta[256];
  for (int from = 0; from < n_states; ++from) {
    const auto& b = params.beta[from];
    for (int k = 0; k < n_states; ++k) zeta[k] = b.row(k).dot(x);
    softmax_into(Eigen::Map<const Eigen::VectorXd>(zeta, n_states), baseline_state, out.row(from));
  }
}

/// Scaled forward recursion for one patient.
struct PatientForward {
  Eigen::MatrixXd filtered;     // T x K, rows sum to one
  Eigen::MatrixXd transitions;  // (T-1)K x K, block t maps day t to day t+1
  double log_likelihood = 0.0;
};

inline PatientForward forward_filter(const PanelDataset& data, const ModelParameters& params,
                                     int baseline_state, std::size_t patient,
                                     const Eigen::MatrixXd& log_emission) {
  const int n_states = params.n_states();
  const auto len = static_cast<Eigen::Index>(data.length(patient));
  const auto start = static_cast<Eigen::Index>(data.begin(patient));
  PatientForward out;
  out.filtered.resize(len, n_states);
  out.transitions.resize(std::max<Eigen::Index>(len - 1, 0) * n_states, n_states);
  for (Eigen::Index t = 0; t + 1 < len; ++t)
    transition_matrix(data, params, baseline_state, static_cast<std::size_t>(start + t),
                      out.transitions.middleRows(t * n_states, n_states));

  Eigen::RowVectorXd prior = params.pi.transpose();
  for (Eigen::Index t = 0; t < len; ++t) {
    if (t > 0)
      prior.noalias() = out.filtered.row(t - 1) *
                        out.transitions.middleRows((t - 1) * n_states, n_states);
    const auto log_e = log_emission.row(start + t);
    const double top = log_e.maxCoeff();
    if (!std::isfinite(top))
      throw NumericalError("patient " + std::to_string(patient) + ", day " +
                           std::to_string(t + 1) + ": no state can emit the observed count");
    double norm = 0.0;
    for (int k = 0; k < n_states; ++k) {
      const double v = prior[k] * std::exp(log_e[k] - top);
      out.filtered(t, k) = v;
      norm += v;
    }
    if (!(norm > 0.0))
      throw NumericalError("patient " + std::to_string(patient) + ", day " +
                           std::to_string(t + 1) + ": filtered distribution vanished");
    out.filtered.row(t) /= norm;
    out.log_likelihood += top + std::log(norm);
  }
  return out;
}

inline void check_shapes(const PanelDataset& data, const ModelParameters& params,
                         const HmmSpec& spec) {
  const int n_states = spec.n_states;
  if (params.n_states() != n_states || params.p_zero.size() != n_states ||
      params.pi.size() != n_states || params.rho.rows() != n_states ||
      static_cast<int>(params.beta.size()) != n_states)
    throw DataError("parameter blocks do not match the number of states");
  if (params.rho.cols() != data.n_covariates())
    throw DataError("emission coefficients have " + std::to_string(params.rho.cols()) +
                    " columns but the data has " + std::to_string(data.n_covariates()) +
                    " covariates");
  for (const auto& b : params.beta)
    if (b.rows() != n_states || b.cols() != data.n_covariates())
      throw DataError("transition coefficient block has the wrong shape");
}

/// Log-likelihood with the state path xi given and the structural-zero
/// indicators marginalized.
inline double full_log_likelihood(const PanelDataset& data, const ChainState& state,
                                  const HmmSpec& spec) {
  check_shapes(data, state.params, spec);
  if (state.xi.size() != data.n_days()) throw DataError("state path length mismatch");
  const auto& params = state.params;
  const Eigen::MatrixXd psi = psi_matrix(data, params.rho);
  double total = 0.0;
  Eigen::VectorXd zeta(spec.n_states);
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    total += std::log(params.pi[state.xi[data.begin(i)]]);
    for (std::size_t g = data.begin(i); g < data.end(i); ++g) {
      const int k = state.xi[g];
      const auto row = static_cast<Eigen::Index>(g);
      if (g > data.begin(i)) {
        const int prev = state.xi[g - 1];
        zeta.noalias() = params.beta[prev] * data.covariates.row(row - 1).transpose();
        total += std::log(softmax_with_baseline(zeta, spec.baseline_state)[k]);
      }
      total += zinb_log_pmf(data.counts[g], params.r[k], psi(row, k), params.p_zero[k]);
    }
  }
  return total;
}

/// Log-likelihood with the state paths summed out by the forward recursion.
inline double observed_log_likelihood(const PanelDataset& data, const ModelParameters& params,
                                      const HmmSpec& spec) {
  check_shapes(data, params, spec);
  const Eigen::MatrixXd psi = psi_matrix(data, params.rho);
  const Eigen::MatrixXd log_e = emission_log_densities(data, params, psi);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n_patients(); ++i)
    total += forward_filter(data, params, spec.baseline_state, i, log_e).log_likelihood;
  return total;
}

}  // namespace zinbhmm
