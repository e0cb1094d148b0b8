#pragma once

// Posterior summaries, model selection and scoring against ground truth.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/mcmc.hpp"
#include "zinbhmm/model.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm {

/// Inclusion pattern for both coefficient blocks (same layout as the
/// parameters: gamma[from](to, j), delta(k, j)).
struct InclusionMasks {
  std::vector<IndicatorMatrix> gamma;
  IndicatorMatrix delta;

  int n_included(int baseline_state) const {
    int n = delta.sum();
    for (const auto& g : gamma)
      for (Eigen::Index to = 0; to < g.rows(); ++to)
        if (to != baseline_state) n += g.row(to).sum();
    return n;
  }

  /// Transition indicators in (from, to != baseline, j) order.
  std::vector<int> flat_transition(int baseline_state) const {
    std::vector<int> out;
    for (const auto& g : gamma)
      for (Eigen::Index to = 0; to < g.rows(); ++to) {
        if (to == baseline_state) continue;
        for (Eigen::Index j = 0; j < g.cols(); ++j) out.push_back(g(to, j));
      }
    return out;
  }
  std::vector<int> flat_emission() const {
    std::vector<int> out;
    for (Eigen::Index k = 0; k < delta.rows(); ++k)
      for (Eigen::Index j = 0; j < delta.cols(); ++j) out.push_back(delta(k, j));
    return out;
  }
};

inline InclusionMasks masks_of(const ModelParameters& params) {
  return {params.gamma, params.delta};
}

/// Marginal posterior probabilities of inclusion.
struct InclusionProbabilities {
  std::vector<Eigen::MatrixXd> gamma;
  Eigen::MatrixXd delta;
};

namespace detail {

inline void require_draws(const ChainSamples& samples) {
  if (samples.draws.empty()) throw DataError("the chain has no stored draws");
}

}  // namespace detail

inline InclusionProbabilities mppi(const ChainSamples& samples) {
  detail::require_draws(samples);
  const int k = samples.n_states;
  const int p = samples.n_covariates;
  InclusionProbabilities out;
  out.gamma.assign(k, Eigen::MatrixXd::Zero(k, p));
  out.delta = Eigen::MatrixXd::Zero(k, p);
  for (const auto& d : samples.draws) {
    for (int f = 0; f < k; ++f) out.gamma[f] += d.params.gamma[f].cast<double>();
    out.delta += d.params.delta.cast<double>();
  }
  const double n = static_cast<double>(samples.draws.size());
  for (auto& g : out.gamma) g /= n;
  out.delta /= n;
  return out;
}

/// Median probability model: include when MPPI > 0.5 (strictly).
inline InclusionMasks median_model(const InclusionProbabilities& probs) {
  InclusionMasks out;
  for (const auto& g : probs.gamma) out.gamma.push_back((g.array() > 0.5).cast<int>());
  out.delta = (probs.delta.array() > 0.5).cast<int>();
  return out;
}

namespace detail {

/// Modal pattern among `patterns`; ties go to fewer inclusions, then to the
/// lexicographically smaller vector.
inline std::vector<int> modal_pattern(const std::vector<std::vector<int>>& patterns) {
  std::map<std::vector<int>, int> counts;
  for (const auto& v : patterns) ++counts[v];
  const std::vector<int>* best = nullptr;
  int best_count = -1, best_size = 0;
  for (const auto& [v, c] : counts) {  // map iterates in lexicographic order
    const int size = static_cast<int>(std::count(v.begin(), v.end(), 1));
    if (c > best_count || (c == best_count && size < best_size)) {
      best = &v;
      best_count = c;
      best_size = size;
    }
  }
  return *best;
}

}  // namespace detail

/// Most frequently visited inclusion vector, separately for every transition
/// row and every emission state.
inline InclusionMasks most_probable_model(const ChainSamples& samples) {
  detail::require_draws(samples);
  const int k = samples.n_states;
  const int p = samples.n_covariates;
  InclusionMasks out;
  out.gamma.assign(k, IndicatorMatrix::Zero(k, p));
  out.delta = IndicatorMatrix::Zero(k, p);
  std::vector<std::vector<int>> patterns(samples.draws.size());
  auto row_mode = [&](auto&& get_row, auto&& target) {
    for (std::size_t s = 0; s < samples.draws.size(); ++s) {
      const auto row = get_row(samples.draws[s].params);
      patterns[s].assign(row.data(), row.data() + row.size());
    }
    const auto mode = detail::modal_pattern(patterns);
    for (int j = 0; j < p; ++j) target(j) = mode[j];
  };
  for (int f = 0; f < k; ++f)
    for (int to = 0; to < k; ++to) {
      if (to == samples.baseline_state) continue;
      row_mode([&](const ModelParameters& m) -> Eigen::VectorXi { return m.gamma[f].row(to).transpose(); },
               [&](int j) -> int& { return out.gamma[f](to, j); });
    }
  for (int s = 0; s < k; ++s)
    row_mode([&](const ModelParameters& m) -> Eigen::VectorXi { return m.delta.row(s).transpose(); },
             [&](int j) -> int& { return out.delta(s, j); });
  return out;
}

enum class InformationCriterion { aic, bic };

struct IcSelection {
  std::size_t draw_index = 0;
  int iteration = 0;
  double value = 0.0;
  InclusionMasks masks;
  ModelParameters params;
};

/// Parameters present in every model: K dispersions, K zero-inflation
/// probabilities and K - 1 free initial probabilities.
inline int fixed_parameter_count(int n_states) { return 3 * n_states - 1; }

/// Kept draw minimising AIC or BIC. Included intercepts are counted through
/// their indicators.
inline IcSelection ic_selected_model(const ChainSamples& samples, std::size_t n_observations,
                                     InformationCriterion criterion) {
  detail::require_draws(samples);
  const double penalty = criterion == InformationCriterion::aic
                             ? 2.0
                             : std::log(static_cast<double>(std::max<std::size_t>(n_observations, 1)));
  IcSelection best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples.draws.size(); ++s) {
    const auto& d = samples.draws[s];
    const int k_s = d.n_included + fixed_parameter_count(samples.n_states);
    const double v = -2.0 * d.log_likelihood + penalty * k_s;
    if (v < best.value) {
      best.value = v;
      best.draw_index = s;
    }
  }
  const auto& d = samples.draws[best.draw_index];
  best.iteration = d.iteration;
  best.params = d.params;
  best.masks = masks_of(d.params);
  return best;
}

// ---------------------------------------------------------------------------
// Point estimates and intervals

/// Type-7 (linear interpolation) empirical quantile of sorted values.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ScalarSummary {
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
};

inline ScalarSummary summarize(std::vector<double> values) {
  ScalarSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(values.begin(), values.end());
  s.lower = sorted_quantile(values, 0.025);
  s.upper = sorted_quantile(values, 0.975);
  return s;
}

/// Summaries of every scalar parameter over the kept draws.
struct ParameterSummaries {
  // beta[from][to * p + j]
  std::vector<std::vector<ScalarSummary>> beta;
  std::vector<ScalarSummary> rho;  // k * p + j
  std::vector<ScalarSummary> r, p_zero, pi;
};

inline ParameterSummaries summarize_parameters(const ChainSamples& samples) {
  detail::require_draws(samples);
  const int k = samples.n_states;
  const int p = samples.n_covariates;
  auto collect = [&](auto&& get) {
    std::vector<double> v;
    v.reserve(samples.draws.size());
    for (const auto& d : samples.draws) v.push_back(get(d.params));
    return summarize(std::move(v));
  };
  ParameterSummaries out;
  out.beta.resize(k);
  for (int f = 0; f < k; ++f)
    for (int to = 0; to < k; ++to)
      for (int j = 0; j < p; ++j)
        out.beta[f].push_back(collect([&](const ModelParameters& m) { return m.beta[f](to, j); }));
  for (int s = 0; s < k; ++s)
    for (int j = 0; j < p; ++j)
      out.rho.push_back(collect([&](const ModelParameters& m) { return m.rho(s, j); }));
  for (int s = 0; s < k; ++s) {
    out.r.push_back(collect([&](const ModelParameters& m) { return m.r[s]; }));
    out.p_zero.push_back(collect([&](const ModelParameters& m) { return m.p_zero[s]; }));
    out.pi.push_back(collect([&](const ModelParameters& m) { return m.pi[s]; }));
  }
  return out;
}

/// Posterior mean of every parameter block (coefficients averaged over all
/// draws, zeros included). Coefficients outside `mask` are set to zero.
inline ModelParameters posterior_mean(const ChainSamples& samples,
                                      const std::optional<InclusionMasks>& mask = std::nullopt) {
  detail::require_draws(samples);
  const int k = samples.n_states;
  ModelParameters m = ModelParameters::zeros(k, samples.n_covariates);
  m.r.setZero();
  m.p_zero.setZero();
  m.pi.setZero();
  for (const auto& d : samples.draws) {
    for (int f = 0; f < k; ++f) m.beta[f] += d.params.beta[f];
    m.rho += d.params.rho;
    m.r += d.params.r;
    m.p_zero += d.params.p_zero;
    m.pi += d.params.pi;
  }
  const double n = static_cast<double>(samples.draws.size());
  for (auto& b : m.beta) b /= n;
  m.rho /= n;
  m.r /= n;
  m.p_zero /= n;
  m.pi /= n;
  m.pi /= m.pi.sum();
  const InclusionMasks use = mask ? *mask : median_model(mppi(samples));
  for (int f = 0; f < k; ++f) {
    m.gamma[f] = use.gamma[f];
    m.gamma[f].row(samples.baseline_state).setZero();
    m.beta[f] = m.beta[f].cwiseProduct(m.gamma[f].cast<double>());
  }
  m.delta = use.delta;
  m.rho = m.rho.cwiseProduct(m.delta.cast<double>());
  return m;
}

// ---------------------------------------------------------------------------
// DIC

struct DicResult {
  double dic = 0.0;
  double p_dic = 0.0;
  double log_likelihood_at_estimate = 0.0;
  double mean_log_likelihood = 0.0;
  bool negative_p_dic = false;
};

/// DIC at the posterior mean restricted to the median probability model.
inline DicResult dic(const ChainSamples& samples, const PanelDataset& data, const HmmSpec& spec) {
  detail::require_draws(samples);
  DicResult out;
  double total = 0.0;
  for (std::size_t s = 0; s < samples.draws.size(); ++s) {
    const double ll = samples.draws[s].log_likelihood;
    if (!std::isfinite(ll))
      throw NumericalError("non-finite log-likelihood at stored draw " + std::to_string(s));
    total += ll;
  }
  out.mean_log_likelihood = total / static_cast<double>(samples.draws.size());
  const ModelParameters estimate = posterior_mean(samples);
  out.log_likelihood_at_estimate = observed_log_likelihood(data, estimate, spec);
  if (!std::isfinite(out.log_likelihood_at_estimate))
    throw NumericalError("non-finite log-likelihood at the posterior mean");
  out.p_dic = 2.0 * (out.log_likelihood_at_estimate - out.mean_log_likelihood);
  out.dic = -2.0 * out.log_likelihood_at_estimate + 2.0 * out.p_dic;
  out.negative_p_dic = out.p_dic < 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// State decoding and classification metrics

/// Posterior mode of each day's state from the occupancy counts (ties go to
/// the lower label).
inline std::vector<int> decode_states(const ChainSamples& samples) {
  const auto k = static_cast<std::size_t>(samples.n_states);
  std::vector<int> out(samples.n_days());
  for (std::size_t g = 0; g < out.size(); ++g) {
    const int* row = samples.occupancy.data() + g * k;
    out[g] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

struct MacroMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
};

/// One-vs-rest metrics averaged with equal weight per state. A per-state ratio
/// with a zero denominator contributes 0.
inline MacroMetrics macro_metrics(const std::vector<int>& truth, const std::vector<int>& decoded,
                                  int n_states) {
  if (truth.size() != decoded.size())
    throw DataError("true and decoded state sequences differ in length");
  if (n_states < 1) throw ConfigError("states must be at least 1");
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  MacroMetrics m;
  const double n = static_cast<double>(truth.size());
  for (int k = 0; k < n_states; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == k, d = decoded[i] == k;
      tp += t && d;
      fp += !t && d;
      fn += t && !d;
    }
    const double tn = n - tp - fp - fn;
    m.accuracy += ratio(tp + tn, n);
    m.precision += ratio(tp, tp + fp);
    m.sensitivity += ratio(tp, tp + fn);
    m.specificity += ratio(tn, tn + fp);
  }
  m.accuracy /= n_states;
  m.precision /= n_states;
  m.sensitivity /= n_states;
  m.specificity /= n_states;
  m.f1 = ratio(2.0 * m.precision * m.sensitivity, m.precision + m.sensitivity);
  return m;
}

struct SelectionMetrics {
  int n_selected = 0;
  double fnr = 0.0;
  double fpr = 0.0;
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
};

/// Confusion summaries over coefficient positions. A ratio whose denominator
/// is zero takes its error-free value when no error of that kind is possible
/// (e.g. sensitivity 1 with no true positives), so identical masks always
/// score perfectly.
inline SelectionMetrics selection_metrics(const std::vector<int>& truth,
                                          const std::vector<int>& selected) {
  if (truth.size() != selected.size()) throw DataError("inclusion masks differ in size");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0, s = selected[i] != 0;
    tp += t && s;
    fp += !t && s;
    fn += t && !s;
    tn += !t && !s;
  }
  SelectionMetrics m;
  m.n_selected = static_cast<int>(tp + fp);
  m.sensitivity = tp + fn > 0 ? tp / (tp + fn) : 1.0;
  m.fnr = tp + fn > 0 ? fn / (tp + fn) : 0.0;
  m.specificity = fp + tn > 0 ? tn / (fp + tn) : 1.0;
  m.fpr = fp + tn > 0 ? fp / (fp + tn) : 0.0;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : (tp + fn > 0 ? 0.0 : 1.0);
  m.f1 = m.precision + m.sensitivity > 0
             ? 2.0 * m.precision * m.sensitivity / (m.precision + m.sensitivity)
             : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Sojourn times, averaged transitions, fit error

struct SojournSummary {
  bool visited = false;
  int n_runs = 0;
  double mean = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Run lengths of each state pooled over patients; runs cut by the start or
/// end of a sequence are included.
inline std::vector<SojournSummary> mean_sojourn_times(const std::vector<int>& states,
                                                      const std::vector<std::size_t>& offsets,
                                                      int n_states) {
  if (offsets.empty() || offsets.back() != states.size())
    throw DataError("state sequence does not match patient offsets");
  std::vector<std::vector<double>> runs(n_states);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    std::size_t g = offsets[i];
    while (g < offsets[i + 1]) {
      std::size_t e = g;
      while (e < offsets[i + 1] && states[e] == states[g]) ++e;
      if (states[g] < 0 || states[g] >= n_states) throw DataError("state label out of range");
      runs[states[g]].push_back(static_cast<double>(e - g));
      g = e;
    }
  }
  std::vector<SojournSummary> out(n_states);
  for (int k = 0; k < n_states; ++k) {
    auto& r = runs[k];
    if (r.empty()) continue;
    std::sort(r.begin(), r.end());
    auto& s = out[k];
    s.visited = true;
    s.n_runs = static_cast<int>(r.size());
    for (double v : r) s.mean += v;
    s.mean /= static_cast<double>(r.size());
    s.q25 = sorted_quantile(r, 0.25);
    s.q75 = sorted_quantile(r, 0.75);
  }
  return out;
}

struct AveragedTransitions {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd sd;
};

/// Transition matrix evaluated at every patient-day that has a successor,
/// averaged entrywise (population SD over the same days).
inline AveragedTransitions averaged_transition_matrix(const PanelDataset& data,
                                                      const ModelParameters& params,
                                                      int baseline_state) {
  const int k = params.n_states();
  AveragedTransitions out{Eigen::MatrixXd::Zero(k, k), Eigen::MatrixXd::Zero(k, k)};
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(k, k);  // Welford sums of squares
  Eigen::MatrixXd m(k, k), delta(k, k);
  double n = 0.0;
  for (std::size_t i = 0; i < data.n_patients(); ++i)
    for (std::size_t g = data.begin(i); g + 1 < data.end(i); ++g) {
      transition_matrix(data, params, baseline_state, g, m);
      n += 1.0;
      delta = m - out.mean;
      out.mean += delta / n;
      m2 += delta.cwiseProduct(m - out.mean);
    }
  if (n == 0.0) return out;
  out.sd = (m2 / n).cwiseMax(0.0).cwiseSqrt();
  return out;
}

/// Mean of |Y - mu_hat| with mu_hat the fitted mean of the decoded state:
/// (1 - p) * NB mean when `unconditional`, the NB mean alone otherwise.
inline double mean_absolute_error(const PanelDataset& data, const ModelParameters& params,
                                  const std::vector<int>& decoded, bool unconditional = true) {
  if (decoded.size() != data.n_days()) throw DataError("decoded path length mismatch");
  if (data.n_days() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t g = 0; g < data.n_days(); ++g) {
    const int k = decoded[g];
    const double psi =
        logistic_psi(data.covariates.row(static_cast<Eigen::Index>(g)).dot(params.rho.row(k)));
    double mu = nb_mean(params.r[k], psi);
    if (unconditional) mu *= 1.0 - params.p_zero[k];
    total += std::abs(data.counts[g] - mu);
  }
  return total / static_cast<double>(data.n_days());
}

// ---------------------------------------------------------------------------
// Report

struct PosteriorReport {
  int n_states = 0;
  int baseline_state = 0;
  std::vector<std::string> covariate_names;
  int n_draws = 0;
  InclusionProbabilities inclusion;
  InclusionMasks median;
  InclusionMasks most_probable;
  IcSelection aic;
  IcSelection bic;
  ParameterSummaries summaries;
  ModelParameters estimate;  // posterior mean under the median model
  std::vector<int> decoded;
  DicResult dic_result;
  std::vector<SojournSummary> sojourn;
  AveragedTransitions transitions;
  double mae = 0.0;
  bool mae_unconditional = true;
  long transition_refresh_failures = 0;
  long emission_refresh_failures = 0;
  double transition_acceptance = 0.0;
  double emission_acceptance = 0.0;
};

inline PosteriorReport build_report(const ChainSamples& samples, const PanelDataset& data,
                                    const HmmSpec& spec, bool mae_unconditional = true) {
  detail::require_draws(samples);
  PosteriorReport rep;
  rep.n_states = samples.n_states;
  rep.baseline_state = samples.baseline_state;
  rep.covariate_names = samples.covariate_names;
  rep.n_draws = static_cast<int>(samples.draws.size());
  rep.inclusion = mppi(samples);
  rep.median = median_model(rep.inclusion);
  rep.most_probable = most_probable_model(samples);
  rep.aic = ic_selected_model(samples, data.n_days(), InformationCriterion::aic);
  rep.bic = ic_selected_model(samples, data.n_days(), InformationCriterion::bic);
  rep.summaries = summarize_parameters(samples);
  rep.estimate = posterior_mean(samples, rep.median);
  rep.decoded = decode_states(samples);
  rep.dic_result = dic(samples, data, spec);
  rep.sojourn = mean_sojourn_times(rep.decoded, data.offsets, samples.n_states);
  rep.transitions = averaged_transition_matrix(data, rep.estimate, samples.baseline_state);
  rep.mae_unconditional = mae_unconditional;
  rep.mae = mean_absolute_error(data, rep.estimate, rep.decoded, mae_unconditional);
  const auto& st = samples.stats;
  rep.transition_refresh_failures = st.transition.refresh_failures;
  rep.emission_refresh_failures = st.emission.refresh_failures;
  auto rate = [](const BlockStats& b) {
    return b.proposals > 0 ? static_cast<double>(b.accepted) / static_cast<double>(b.proposals)
                           : 0.0;
  };
  rep.transition_acceptance = rate(st.transition);
  rep.emission_acceptance = rate(st.emission);
  return rep;
}

}  // namespace zinbhmm
