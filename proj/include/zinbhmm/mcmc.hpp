#pragma once

// Metropolis-within-Gibbs sampler for the zero-inflated NB non-homogeneous
// HMM with spike-and-slab selection on both regressions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/model.hpp"
#include "zinbhmm/random.hpp"
#include "zinbhmm/selection.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm {

struct ChainConfig {
  int iterations = 20000;
  int burn_in = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  /// Intercept-only regressions in both blocks (requires an intercept column).
  bool homogeneous = false;
  /// When false the inclusion indicators stay at their initial values.
  bool update_selection = true;
  bool relabel = true;
  /// Keep every kept xi draw while days * kept draws stays within this many
  /// values; occupancy counts are always kept.
  std::size_t xi_storage_budget = 1'000'000;
  /// Per-column inclusion modes; empty means every column is free.
  std::vector<Inclusion> transition_columns;
  std::vector<Inclusion> emission_columns;

  int kept_draws() const {
    return iterations > burn_in ? (iterations - burn_in + thin - 1) / thin : 0;
  }

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
      throw ConfigError("burn_in must satisfy 0 <= burn_in < iterations");
    if (thin < 1) throw ConfigError("thin must be at least 1");
  }
};

/// Resolved per-column inclusion modes for both coefficient blocks.
struct SelectionLayout {
  std::vector<Inclusion> transition;
  std::vector<Inclusion> emission;
};

inline SelectionLayout resolve_layout(const PanelDataset& data, const ChainConfig& config) {
  const auto p = static_cast<std::size_t>(data.n_covariates());
  SelectionLayout layout;
  if (config.homogeneous) {
    if (!data.has_intercept())
      throw ConfigError("the homogeneous model needs an intercept column");
    layout.transition.assign(p, Inclusion::never);
    layout.transition[0] = Inclusion::always;
    layout.emission = layout.transition;
    return layout;
  }
  layout.transition =
      config.transition_columns.empty() ? std::vector<Inclusion>(p, Inclusion::free)
                                        : config.transition_columns;
  layout.emission = config.emission_columns.empty() ? std::vector<Inclusion>(p, Inclusion::free)
                                                    : config.emission_columns;
  if (layout.transition.size() != p || layout.emission.size() != p)
    throw ConfigError("column inclusion modes do not match the covariate dimension");
  return layout;
}

/// Read-only inputs shared by every update.
struct SamplerContext {
  const PanelDataset& data;
  const HmmSpec& spec;
  SelectionLayout layout;
  bool update_selection = true;
};

struct SamplerStats {
  BlockStats transition;
  BlockStats emission;
};

struct ChainDraw {
  int iteration = 0;
  ModelParameters params;
  double log_likelihood = 0.0;
  int n_included = 0;
};

/// Post-burn-in output of one chain.
struct ChainSamples {
  int n_states = 0;
  int n_covariates = 0;
  int baseline_state = 0;
  std::vector<std::string> covariate_names;
  SelectionLayout layout;
  std::vector<ChainDraw> draws;
  /// (day, state) visit counts over kept draws, row-major days x K.
  std::vector<int> occupancy;
  /// Optional full xi draws, kept x days, row-major.
  std::vector<std::uint8_t> xi_draws;
  std::vector<double> log_likelihood_trace;
  std::vector<int> included_trace;
  SamplerStats stats;

  std::size_t n_days() const {
    return n_states > 0 ? occupancy.size() / static_cast<std::size_t>(n_states) : 0;
  }
  bool has_xi_draws() const { return !xi_draws.empty(); }
};

// ---------------------------------------------------------------------------
// Initialization

inline ChainState init_chain(const SamplerContext& ctx, RngHandle& rng) {
  const auto& data = ctx.data;
  const auto& spec = ctx.spec;
  const auto& pri = spec.priors;
  const int n_states = spec.n_states;
  const int p = data.n_covariates();
  ChainState state;
  state.params = ModelParameters::zeros(n_states, p);
  auto& par = state.params;

  auto draw_indicator = [&](Inclusion mode, const BetaPrior& incl) {
    switch (mode) {
      case Inclusion::always: return 1;
      case Inclusion::never: return 0;
      default: return sample_bernoulli(incl.a / (incl.a + incl.b), rng) ? 1 : 0;
    }
  };

  for (int from = 0; from < n_states; ++from)
    for (int to = 0; to < n_states; ++to) {
      if (to == spec.baseline_state) continue;
      for (int j = 0; j < p; ++j) {
        const int g = draw_indicator(ctx.layout.transition[j], pri.transition_inclusion);
        par.gamma[from](to, j) = g;
        if (g)
          par.beta[from](to, j) = pri.transition_slab.mean +
                                  std::sqrt(pri.transition_slab.variance) * rng.normal();
      }
    }
  for (int k = 0; k < n_states; ++k)
    for (int j = 0; j < p; ++j) {
      const int d = draw_indicator(ctx.layout.emission[j], pri.emission_inclusion);
      par.delta(k, j) = d;
      if (d)
        par.rho(k, j) =
            pri.emission_slab.mean + std::sqrt(pri.emission_slab.variance) * rng.normal();
    }
  for (int k = 0; k < n_states; ++k) {
    par.r[k] = std::clamp(sample_gamma(pri.dispersion.shape, pri.dispersion.rate, rng), 0.1, 50.0);
    par.p_zero[k] = sample_beta(pri.zero_inflation.a, pri.zero_inflation.b, rng);
  }
  par.pi = sample_dirichlet(pri.concentration(n_states), rng);

  state.xi.resize(data.n_days());
  state.z.assign(data.n_days(), 0);
  for (std::size_t g = 0; g < data.n_days(); ++g) {
    state.xi[g] = sample_categorical(par.pi, rng);
    if (data.counts[g] == 0) state.z[g] = sample_bernoulli(0.5, rng) ? 1 : 0;
  }
  return state;
}

// ---------------------------------------------------------------------------
// Parameter blocks

namespace detail {

inline Eigen::VectorXd row_vector(const Eigen::MatrixXd& m, int row) {
  return m.row(row).transpose();
}
inline std::vector<int> row_indicator(const IndicatorMatrix& m, int row) {
  std::vector<int> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = m(row, j);
  return out;
}
inline void store_row(Eigen::MatrixXd& m, IndicatorMatrix& ind, int row,
                      const Eigen::VectorXd& coef, const std::vector<int>& indicator) {
  m.row(row) = coef.transpose();
  for (Eigen::Index j = 0; j < m.cols(); ++j) ind(row, j) = indicator[j];
}

}  // namespace detail

/// Updates every coefficient row (from_state, k) with k != baseline. The
/// destination rows are visited in order and the log-sum-exp offset of each
/// row is rebuilt from the current values of the others.
inline void update_transition_block(ChainState& state, const SamplerContext& ctx,
                                    int from_state, RngHandle& rng, SamplerStats& stats) {
  const auto& data = ctx.data;
  const int n_states = ctx.spec.n_states;
  const int baseline = ctx.spec.baseline_state;
  if (n_states < 2) return;
  auto& beta = state.params.beta[from_state];
  auto& gamma = state.params.gamma[from_state];

  std::vector<std::size_t> prev;
  std::vector<int> next_state;
  for (std::size_t i = 0; i < data.n_patients(); ++i)
    for (std::size_t g = data.begin(i); g + 1 < data.end(i); ++g)
      if (state.xi[g] == from_state) {
        prev.push_back(g);
        next_state.push_back(state.xi[g + 1]);
      }

  const auto n = static_cast<Eigen::Index>(prev.size());
  Eigen::MatrixXd zeta = Eigen::MatrixXd::Zero(n, n_states);
  for (Eigen::Index i = 0; i < n; ++i)
    zeta.row(i) = data.covariates.row(static_cast<Eigen::Index>(prev[i])) * beta.transpose();
  zeta.col(baseline).setZero();

  const SelectionPrior prior{ctx.spec.priors.transition_slab,
                             ctx.spec.priors.transition_inclusion, ctx.layout.transition};
  RegressionRows rows;
  for (int to = 0; to < n_states; ++to) {
    if (to == baseline) continue;
    rows.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n_states; ++j)
        if (j != to) top = std::max(top, zeta(i, j));
      double sum = 0.0;
      for (int j = 0; j < n_states; ++j)
        if (j != to) sum += std::exp(zeta(i, j) - top);
      rows.push(prev[i], next_state[i] == to ? 1.0 : 0.0, 1.0, top + std::log(sum));
    }
    Eigen::VectorXd coef = detail::row_vector(beta, to);
    std::vector<int> ind = detail::row_indicator(gamma, to);
    update_regression_block(data.covariates, rows, coef, ind, prior, ctx.update_selection, rng,
                            stats.transition);
    detail::store_row(beta, gamma, to, coef, ind);
    for (Eigen::Index i = 0; i < n; ++i)
      zeta(i, to) = data.covariates.row(static_cast<Eigen::Index>(prev[i])).dot(beta.row(to));
  }
}

/// Emission regression of one state over its non-structural-zero days. With
/// no such days the refresh draws from the slab prior.
inline void update_emission_block(ChainState& state, const SamplerContext& ctx, int k,
                                  RngHandle& rng, SamplerStats& stats) {
  const auto& data = ctx.data;
  const double r = state.params.r[k];
  RegressionRows rows;
  for (std::size_t g = 0; g < data.n_days(); ++g)
    if (state.xi[g] == k && state.z[g] == 0) {
      const double y = data.counts[g];
      rows.push(g, y, y + r, 0.0);
    }
  const SelectionPrior prior{ctx.spec.priors.emission_slab, ctx.spec.priors.emission_inclusion,
                             ctx.layout.emission};
  Eigen::VectorXd coef = detail::row_vector(state.params.rho, k);
  std::vector<int> ind = detail::row_indicator(state.params.delta, k);
  update_regression_block(data.covariates, rows, coef, ind, prior, ctx.update_selection, rng,
                          stats.emission);
  detail::store_row(state.params.rho, state.params.delta, k, coef, ind);
}

/// Dispersion of state k via Chinese-restaurant-table augmentation.
inline void update_dispersion(ChainState& state, const SamplerContext& ctx, int k,
                              RngHandle& rng) {
  const auto& data = ctx.data;
  const auto& prior = ctx.spec.priors.dispersion;
  auto& r = state.params.r[k];
  const auto rho_k = state.params.rho.row(k);
  long tables = 0;
  double log_q = 0.0;
  bool any = false;
  for (std::size_t g = 0; g < data.n_days(); ++g) {
    if (state.xi[g] != k || state.z[g] != 0) continue;
    any = true;
    tables += sample_crt(data.counts[g], r, rng);
    const double psi = logistic_psi(data.covariates.row(static_cast<Eigen::Index>(g)).dot(rho_k));
    log_q += std::log1p(-psi);
  }
  if (!any) {
    r = sample_gamma(prior.shape, prior.rate, rng);
    return;
  }
  r = sample_gamma(prior.shape + static_cast<double>(tables), prior.rate - log_q, rng);
}

inline void update_zero_inflation(ChainState& state, const SamplerContext& ctx, int k,
                                  RngHandle& rng) {
  const auto& prior = ctx.spec.priors.zero_inflation;
  double zeros = 0.0, others = 0.0;
  for (std::size_t g = 0; g < ctx.data.n_days(); ++g) {
    if (state.xi[g] != k) continue;
    (state.z[g] ? zeros : others) += 1.0;
  }
  double p = sample_beta(prior.a + zeros, prior.b + others, rng);
  // keep strictly inside (0, 1) for the log densities
  p = std::clamp(p, std::numeric_limits<double>::min(), 1.0 - 1e-16);
  state.params.p_zero[k] = p;
}

inline void update_zero_indicators(ChainState& state, const SamplerContext& ctx,
                                   RngHandle& rng) {
  const auto& data = ctx.data;
  const auto& par = state.params;
  for (std::size_t g = 0; g < data.n_days(); ++g) {
    if (data.counts[g] > 0) {
      state.z[g] = 0;
      continue;
    }
    const int k = state.xi[g];
    const double psi =
        logistic_psi(data.covariates.row(static_cast<Eigen::Index>(g)).dot(par.rho.row(k)));
    const double nb_zero = std::exp(par.r[k] * std::log1p(-psi));
    const double p = par.p_zero[k];
    state.z[g] = sample_bernoulli(p / (p + (1.0 - p) * nb_zero), rng) ? 1 : 0;
  }
}

inline void update_initial_probs(ChainState& state, const SamplerContext& ctx, RngHandle& rng) {
  Eigen::VectorXd alpha = ctx.spec.priors.concentration(ctx.spec.n_states);
  for (std::size_t i = 0; i < ctx.data.n_patients(); ++i)
    alpha[state.xi[ctx.data.begin(i)]] += 1.0;
  state.params.pi = sample_dirichlet(alpha, rng);
}

/// Draws one patient's path from its exact conditional given the forward
/// quantities (backward sampling).
inline void backward_sample(const PatientForward& fwd, std::span<int> path, RngHandle& rng) {
  const auto len = fwd.filtered.rows();
  const auto n_states = fwd.filtered.cols();
  path[len - 1] = sample_categorical(fwd.filtered.row(len - 1).transpose(), rng);
  Eigen::VectorXd w(n_states);
  for (Eigen::Index t = len - 2; t >= 0; --t) {
    const auto trans = fwd.transitions.middleRows(t * n_states, n_states);
    for (Eigen::Index k = 0; k < n_states; ++k)
      w[k] = fwd.filtered(t, k) * trans(k, path[t + 1]);
    path[t] = sample_categorical(w, rng);
  }
}

/// Forward-filtering backward-sampling for every patient. Returns the
/// observed-data log-likelihood at the current parameters.
inline double update_states(ChainState& state, const SamplerContext& ctx, RngHandle& rng) {
  const auto& data = ctx.data;
  const Eigen::MatrixXd psi = psi_matrix(data, state.params.rho);
  const Eigen::MatrixXd log_e = emission_log_densities(data, state.params, psi);
  double loglik = 0.0;
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const PatientForward fwd =
        forward_filter(data, state.params, ctx.spec.baseline_state, i, log_e);
    loglik += fwd.log_likelihood;
    backward_sample(fwd, std::span<int>(state.xi).subspan(data.begin(i), data.length(i)), rng);
  }
  return loglik;
}

// ---------------------------------------------------------------------------
// Label switching

/// Reorders states so that the summed NB means over all patient-days increase
/// with the label. Transition rows keep the same baseline index: each
/// from-state row is re-expressed relative to the new baseline by subtracting
/// its coefficient vector. Returns the old-to-new label map.
inline std::vector<int> relabel(ChainState& state, const PanelDataset& data,
                                int baseline_state) {
  auto& par = state.params;
  const int n_states = par.n_states();
  const Eigen::MatrixXd psi = psi_matrix(data, par.rho);
  std::vector<double> mass(n_states, 0.0);
  for (int k = 0; k < n_states; ++k)
    for (Eigen::Index g = 0; g < psi.rows(); ++g) mass[k] += nb_mean(par.r[k], psi(g, k));

  std::vector<int> order(n_states);  // order[new] = old
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mass[a] < mass[b]; });
  std::vector<int> to_new(n_states);
  for (int n = 0; n < n_states; ++n) to_new[order[n]] = n;
  bool identity = true;
  for (int k = 0; k < n_states; ++k) identity = identity && order[k] == k;
  if (identity) return to_new;

  ModelParameters out = par;
  for (int n = 0; n < n_states; ++n) {
    const int o = order[n];
    out.r[n] = par.r[o];
    out.p_zero[n] = par.p_zero[o];
    out.pi[n] = par.pi[o];
    out.rho.row(n) = par.rho.row(o);
    out.delta.row(n) = par.delta.row(o);
  }
  for (int nf = 0; nf < n_states; ++nf) {
    const int of = order[nf];
    Eigen::MatrixXd b(n_states, par.n_covariates());
    IndicatorMatrix gm(n_states, par.n_covariates());
    for (int nt = 0; nt < n_states; ++nt) {
      b.row(nt) = par.beta[of].row(order[nt]);
      gm.row(nt) = par.gamma[of].row(order[nt]);
    }
    const Eigen::RowVectorXd anchor = b.row(baseline_state);
    const Eigen::Matrix<int, 1, Eigen::Dynamic> anchor_ind = gm.row(baseline_state);
    for (int nt = 0; nt < n_states; ++nt) {
      if (nt == baseline_state) continue;
      b.row(nt) -= anchor;
      gm.row(nt) = gm.row(nt).cwiseMax(anchor_ind);
    }
    b.row(baseline_state).setZero();
    gm.row(baseline_state).setZero();
    out.beta[nf] = b;
    out.gamma[nf] = gm;
  }
  par = std::move(out);
  for (auto& x : state.xi) x = to_new[x];
  return to_new;
}

// ---------------------------------------------------------------------------
// Driver

struct RunOptions {
  /// Line-delimited JSON progress records, one every `progress_every` sweeps.
  std::ostream* progress = nullptr;
  int progress_every = 100;
};

/// One full sweep in the fixed order: per state (transition row block,
/// emission block, dispersion, zero inflation), then pi, the paths, the
/// structural-zero indicators and finally the relabelling step.
/// Returns the observed log-likelihood of the parameters used for the paths.
inline double sweep(ChainState& state, const SamplerContext& ctx, bool relabel_states,
                    RngHandle& rng, SamplerStats& stats) {
  for (int k = 0; k < ctx.spec.n_states; ++k) {
    update_transition_block(state, ctx, k, rng, stats);
    update_emission_block(state, ctx, k, rng, stats);
    update_dispersion(state, ctx, k, rng);
    update_zero_inflation(state, ctx, k, rng);
  }
  update_initial_probs(state, ctx, rng);
  const double loglik = update_states(state, ctx, rng);
  update_zero_indicators(state, ctx, rng);
  if (relabel_states) relabel(state, ctx.data, ctx.spec.baseline_state);
  return loglik;
}

namespace detail {
template <class E>
[[noreturn]] void rethrow_at(const E& e, int iteration) {
  throw E("iteration " + std::to_string(iteration) + ": " + e.what());
}
}  // namespace detail

inline ChainSamples run_chain(const PanelDataset& data, const HmmSpec& spec,
                              const ChainConfig& config, const RunOptions& options = {}) {
  spec.validate();
  config.validate();
  data.validate();
  const SamplerContext ctx{data, spec, resolve_layout(data, config), config.update_selection};
  RngHandle rng(config.seed, 0);

  ChainSamples out;
  out.n_states = spec.n_states;
  out.n_covariates = data.n_covariates();
  out.baseline_state = spec.baseline_state;
  out.covariate_names = data.covariate_names;
  out.layout = ctx.layout;
  out.occupancy.assign(data.n_days() * static_cast<std::size_t>(spec.n_states), 0);
  const auto kept = static_cast<std::size_t>(config.kept_draws());
  const bool store_xi = data.n_days() * kept <= config.xi_storage_budget;
  out.draws.reserve(kept);
  if (store_xi) out.xi_draws.reserve(data.n_days() * kept);
  out.log_likelihood_trace.reserve(static_cast<std::size_t>(config.iterations));
  out.included_trace.reserve(static_cast<std::size_t>(config.iterations));

  ChainState state = init_chain(ctx, rng);
  if (config.relabel) relabel(state, data, spec.baseline_state);

  for (int s = 1; s <= config.iterations; ++s) {
    double loglik = 0.0;
    try {
      loglik = sweep(state, ctx, config.relabel, rng, out.stats);
    } catch (const NotPositiveDefinite& e) {
      detail::rethrow_at(NumericalError(e.what()), s);
    } catch (const NumericalError& e) {
      detail::rethrow_at(e, s);
    } catch (const DataError& e) {
      detail::rethrow_at(e, s);
    }
    const int n_included = state.params.n_included(spec.baseline_state);
    out.log_likelihood_trace.push_back(loglik);
    out.included_trace.push_back(n_included);
    if (options.progress && (s % options.progress_every == 0 || s == config.iterations)) {
      *options.progress << "{\"iteration\":" << s << ",\"log_likelihood\":" << loglik
                        << ",\"included\":" << n_included << "}\n";
    }
    if (s <= config.burn_in || (s - config.burn_in - 1) % config.thin != 0) continue;
    out.draws.push_back(ChainDraw{s, state.params, loglik, n_included});
    for (std::size_t g = 0; g < data.n_days(); ++g) {
      ++out.occupancy[g * static_cast<std::size_t>(spec.n_states) + state.xi[g]];
      if (store_xi) out.xi_draws.push_back(static_cast<std::uint8_t>(state.xi[g]));
    }
  }
  return out;
}

}  // namespace zinbhmm
