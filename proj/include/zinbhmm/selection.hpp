#pragma once

// Spike-and-slab logistic-family regression blocks.
//
// Both coefficient blocks of the model reduce, conditional on everything
// else, to a likelihood of the form
//     prod_i exp(a_i eta_i) / (1 + exp(eta_i))^{b_i},  eta_i = x_i' theta - c_i
// (transitions: a = target indicator, b = 1, c = log-sum-exp offset of the
// competing destinations; emissions: a = y, b = y + r, c = 0). One block
// update is an add/delete/swap Metropolis move on the inclusion indicators
// followed by a Polya-Gamma Gibbs refresh of the included coefficients.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "zinbhmm/model.hpp"
#include "zinbhmm/random.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm {

/// How a covariate column participates in selection.
enum class Inclusion : std::uint8_t { free, always, never };

/// Rows of one conditional regression problem.
struct RegressionRows {
  std::vector<std::size_t> rows;  // rows of the design matrix
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> offset;

  std::size_t size() const { return rows.size(); }
  void clear() {
    rows.clear();
    a.clear();
    b.clear();
    offset.clear();
  }
  void push(std::size_t row, double a_i, double b_i, double offset_i) {
    rows.push_back(row);
    a.push_back(a_i);
    b.push_back(b_i);
    offset.push_back(offset_i);
  }
};

struct SelectionPrior {
  SlabPrior slab;
  BetaPrior inclusion;
  std::span<const Inclusion> columns;
};

struct BlockStats {
  long proposals = 0;
  long accepted = 0;
  long refresh_failures = 0;
};

namespace detail {

inline std::vector<int> active_columns(const std::vector<int>& indicator) {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(indicator.size()); ++j)
    if (indicator[j]) out.push_back(j);
  return out;
}

}  // namespace detail

/// sum_i a_i eta_i - b_i log(1 + exp(eta_i)).
inline double block_log_likelihood(const RowMatrix& x, const RegressionRows& rows,
                                   const Eigen::VectorXd& coef,
                                   const std::vector<int>& indicator) {
  const std::vector<int> cols = detail::active_columns(indicator);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows.rows[i]);
    double eta = -rows.offset[i];
    for (int j : cols) eta += x(r, j) * coef[j];
    total += rows.a[i] * eta - rows.b[i] * log1p_exp(eta);
  }
  return total;
}

/// One between-model move. With equal probability either a swap of one
/// included and one excluded free column, or an add/delete flip of a uniformly
/// chosen free column; when no swap is possible the move is always add/delete.
/// New coefficients are proposed from the slab, so the slab density cancels;
/// each indicator carries an independent Beta-Bernoulli prior whose marginal
/// odds are a / b.
inline void selection_move(const RowMatrix& x, const RegressionRows& rows,
                           Eigen::VectorXd& coef, std::vector<int>& indicator,
                           const SelectionPrior& prior, RngHandle& rng, BlockStats& stats) {
  std::vector<int> included, excluded;
  for (int j = 0; j < static_cast<int>(prior.columns.size()); ++j) {
    if (prior.columns[j] != Inclusion::free) continue;
    (indicator[j] ? included : excluded).push_back(j);
  }
  const std::size_t n_free = included.size() + excluded.size();
  if (n_free == 0) return;

  auto swap_possible = [](std::size_t n_in, std::size_t n_out) { return n_in > 0 && n_out > 0; };
  const double slab_sd = std::sqrt(prior.slab.variance);
  Eigen::VectorXd proposal = coef;
  std::vector<int> proposal_ind = indicator;
  double log_ratio = 0.0;

  if (swap_possible(included.size(), excluded.size()) && rng.uniform() < 0.5) {
    const int out = included[static_cast<std::size_t>(rng.uniform() * included.size())];
    const int in = excluded[static_cast<std::size_t>(rng.uniform() * excluded.size())];
    proposal[out] = 0.0;
    proposal_ind[out] = 0;
    proposal[in] = prior.slab.mean + slab_sd * rng.normal();
    proposal_ind[in] = 1;
  } else {
    const std::size_t pick = static_cast<std::size_t>(rng.uniform() * n_free);
    const int j = pick < included.size() ? included[pick] : excluded[pick - included.size()];
    const double log_odds = std::log(prior.inclusion.a) - std::log(prior.inclusion.b);
    std::size_t n_in = included.size();
    if (indicator[j]) {
      proposal[j] = 0.0;
      proposal_ind[j] = 0;
      log_ratio -= log_odds;
      --n_in;
    } else {
      proposal[j] = prior.slab.mean + slab_sd * rng.normal();
      proposal_ind[j] = 1;
      log_ratio += log_odds;
      ++n_in;
    }
    // Probability of having picked add/delete from each side of the move.
    const double here = swap_possible(included.size(), excluded.size()) ? 0.5 : 1.0;
    const double there = swap_possible(n_in, n_free - n_in) ? 0.5 : 1.0;
    log_ratio += std::log(there) - std::log(here);
  }

  ++stats.proposals;
  log_ratio += block_log_likelihood(x, rows, proposal, proposal_ind) -
               block_log_likelihood(x, rows, coef, indicator);
  if (std::log(rng.uniform()) < log_ratio) {
    coef = proposal;
    indicator = proposal_ind;
    ++stats.accepted;
  }
}

/// Polya-Gamma Gibbs refresh of the included coefficients. Returns false (and
/// leaves `coef` unchanged) when the posterior precision is not positive
/// definite.
inline bool pg_refresh(const RowMatrix& x, const RegressionRows& rows, Eigen::VectorXd& coef,
                       const std::vector<int>& indicator, const SlabPrior& slab,
                       RngHandle& rng) {
  const std::vector<int> cols = detail::active_columns(indicator);
  const auto s = static_cast<Eigen::Index>(cols.size());
  if (s == 0) return true;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(s, s) / slab.variance;
  Eigen::VectorXd h = Eigen::VectorXd::Constant(s, slab.mean / slab.variance);
  Eigen::VectorXd xs(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows.rows[i]);
    double eta = -rows.offset[i];
    for (Eigen::Index c = 0; c < s; ++c) {
      xs[c] = x(r, cols[c]);
      eta += xs[c] * coef[cols[c]];
    }
    const double omega = sample_polya_gamma(rows.b[i], eta, rng);
    precision.selfadjointView<Eigen::Lower>().rankUpdate(xs, omega);
    h += xs * (rows.a[i] - 0.5 * rows.b[i] + omega * rows.offset[i]);
  }
  precision.triangularView<Eigen::StrictlyUpper>() = precision.transpose();
  Eigen::VectorXd draw;
  try {
    draw = sample_gaussian_canonical(precision, h, rng);
  } catch (const NotPositiveDefinite&) {
    return false;
  }
  for (Eigen::Index c = 0; c < s; ++c) coef[cols[c]] = draw[c];
  return true;
}

/// Full block update: optional selection move, then the within-model refresh.
inline void update_regression_block(const RowMatrix& x, const RegressionRows& rows,
                                    Eigen::VectorXd& coef, std::vector<int>& indicator,
                                    const SelectionPrior& prior, bool move_indicators,
                                    RngHandle& rng, BlockStats& stats) {
  if (move_indicators) selection_move(x, rows, coef, indicator, prior, rng, stats);
  if (!pg_refresh(x, rows, coef, indicator, prior.slab, rng)) ++stats.refresh_failures;
}

}  // namespace zinbhmm
