#pragma once

// Comparison of a fitted model against simulation ground truth.

#include <optional>
#include <string>
#include <vector>

#include "zinbhmm/posterior.hpp"
#include "zinbhmm/simulation.hpp"

namespace zinbhmm {

struct BlockScores {
  SelectionMetrics transition;
  SelectionMetrics emission;
};

struct TruthScores {
  MacroMetrics states;
  BlockScores median;
  BlockScores most_probable;
  BlockScores aic;
  BlockScores bic;
};

namespace detail {

/// Drops a leading intercept column that the generating model did not have.
inline InclusionMasks strip_columns(const InclusionMasks& m, int first) {
  if (first == 0) return m;
  InclusionMasks out;
  for (const auto& g : m.gamma) out.gamma.push_back(g.rightCols(g.cols() - first));
  out.delta = m.delta.rightCols(m.delta.cols() - first);
  return out;
}

inline BlockScores score_masks(const InclusionMasks& truth, const InclusionMasks& fitted,
                               int baseline_state) {
  return {selection_metrics(truth.flat_transition(baseline_state),
                            fitted.flat_transition(baseline_state)),
          selection_metrics(truth.flat_emission(), fitted.flat_emission())};
}

}  // namespace detail

/// Scores are only defined when the fit has the generating number of states,
/// the same baseline and the same covariates (up to an added intercept).
/// Returns nullopt otherwise.
inline std::optional<TruthScores> score_against_truth(const PosteriorReport& report,
                                                      const GroundTruth& truth) {
  const int k = truth.params.n_states();
  const int p_truth = truth.params.n_covariates();
  if (report.n_states != k || report.baseline_state != truth.baseline_state) return std::nullopt;
  const int p_fit = static_cast<int>(report.covariate_names.size());
  int first = 0;
  if (p_fit == p_truth + 1 && !report.covariate_names.empty() &&
      report.covariate_names.front() == kInterceptName)
    first = 1;
  else if (p_fit != p_truth)
    return std::nullopt;
  if (report.decoded.size() != truth.xi.size()) return std::nullopt;

  const InclusionMasks t = masks_of(truth.params);
  TruthScores s;
  s.states = macro_metrics(truth.xi, report.decoded, k);
  const int b = truth.baseline_state;
  s.median = detail::score_masks(t, detail::strip_columns(report.median, first), b);
  s.most_probable = detail::score_masks(t, detail::strip_columns(report.most_probable, first), b);
  s.aic = detail::score_masks(t, detail::strip_columns(report.aic.masks, first), b);
  s.bic = detail::score_masks(t, detail::strip_columns(report.bic.masks, first), b);
  return s;
}

}  // namespace zinbhmm
