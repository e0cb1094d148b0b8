#pragma once

// JSON rendering of posterior reports. Output depends only on the report
// contents (no timestamps or paths), so equal inputs give equal bytes.

#include <optional>
#include <string>
#include <vector>

#include "zinbhmm/io/dataset.hpp"
#include "zinbhmm/posterior.hpp"
#include "zinbhmm/scoring.hpp"

namespace zinbhmm::io {

inline Json to_json(const ScalarSummary& s) {
  return Json{{"mean", s.mean}, {"sd", s.sd}, {"lower", s.lower}, {"upper", s.upper}};
}

inline Json to_json(const MacroMetrics& m) {
  return Json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"sensitivity", m.sensitivity},
              {"specificity", m.specificity},
              {"f1", m.f1}};
}

inline Json to_json(const SelectionMetrics& m) {
  return Json{{"selected", m.n_selected},   {"fnr", m.fnr},
              {"fpr", m.fpr},               {"precision", m.precision},
              {"sensitivity", m.sensitivity}, {"specificity", m.specificity},
              {"f1", m.f1}};
}

inline Json to_json(const BlockScores& b) {
  return Json{{"transition", to_json(b.transition)}, {"emission", to_json(b.emission)}};
}

inline Json to_json(const TruthScores& s) {
  return Json{{"states", to_json(s.states)},
              {"median_model", to_json(s.median)},
              {"most_probable_model", to_json(s.most_probable)},
              {"aic", to_json(s.aic)},
              {"bic", to_json(s.bic)}};
}

inline Json masks_to_json(const InclusionMasks& m) {
  Json gamma = Json::array();
  for (const auto& g : m.gamma) gamma.push_back(matrix_to_json(g));
  return Json{{"gamma", gamma}, {"delta", matrix_to_json(m.delta)}};
}

/// Per-coefficient table: one entry per (from, to != baseline, covariate) and
/// per (state, covariate), with 1-based state labels.
inline Json coefficient_tables(const PosteriorReport& r) {
  const int k = r.n_states;
  const int p = static_cast<int>(r.covariate_names.size());
  Json transitions = Json::array();
  for (int f = 0; f < k; ++f)
    for (int to = 0; to < k; ++to) {
      if (to == r.baseline_state) continue;
      for (int j = 0; j < p; ++j) {
        Json e{{"from", f + 1}, {"to", to + 1}, {"covariate", r.covariate_names[j]},
               {"mppi", r.inclusion.gamma[f](to, j)}};
        e.update(to_json(r.summaries.beta[f][static_cast<std::size_t>(to * p + j)]));
        transitions.push_back(e);
      }
    }
  Json emissions = Json::array();
  for (int s = 0; s < k; ++s)
    for (int j = 0; j < p; ++j) {
      Json e{{"state", s + 1}, {"covariate", r.covariate_names[j]},
             {"mppi", r.inclusion.delta(s, j)}};
      e.update(to_json(r.summaries.rho[static_cast<std::size_t>(s * p + j)]));
      emissions.push_back(e);
    }
  return Json{{"transition", transitions}, {"emission", emissions}};
}

inline Json report_to_json(const PosteriorReport& r,
                           const std::optional<TruthScores>& scores = std::nullopt) {
  const int k = r.n_states;
  Json state_params = Json::array();
  for (int s = 0; s < k; ++s)
    state_params.push_back(Json{{"state", s + 1},
                                {"r", to_json(r.summaries.r[s])},
                                {"p_zero", to_json(r.summaries.p_zero[s])},
                                {"pi", to_json(r.summaries.pi[s])}});

  Json sojourn = Json::array();
  for (int s = 0; s < k; ++s) {
    const auto& st = r.sojourn[s];
    if (!st.visited) {
      sojourn.push_back(Json{{"state", s + 1}, {"visited", false}});
      continue;
    }
    sojourn.push_back(Json{{"state", s + 1},
                           {"visited", true},
                           {"runs", st.n_runs},
                           {"mean", st.mean},
                           {"q25", st.q25},
                           {"q75", st.q75}});
  }

  Json decoded = Json::array();
  for (int v : r.decoded) decoded.push_back(v + 1);

  Json j{{"states", k},
         {"baseline_state", r.baseline_state + 1},
         {"covariates", r.covariate_names},
         {"draws", r.n_draws},
         {"dic",
          Json{{"dic", r.dic_result.dic},
               {"p_dic", r.dic_result.p_dic},
               {"log_likelihood_at_estimate", r.dic_result.log_likelihood_at_estimate},
               {"mean_log_likelihood", r.dic_result.mean_log_likelihood},
               {"negative_p_dic", r.dic_result.negative_p_dic}}},
         {"mean_absolute_error",
          Json{{"value", r.mae}, {"mean", r.mae_unconditional ? "unconditional" : "conditional"}}},
         {"state_parameters", state_params},
         {"coefficients", coefficient_tables(r)},
         {"selection",
          Json{{"median_model", masks_to_json(r.median)},
               {"most_probable_model", masks_to_json(r.most_probable)},
               {"aic", Json{{"iteration", r.aic.iteration},
                            {"value", r.aic.value},
                            {"masks", masks_to_json(r.aic.masks)}}},
               {"bic", Json{{"iteration", r.bic.iteration},
                            {"value", r.bic.value},
                            {"masks", masks_to_json(r.bic.masks)}}}}},
         {"estimate", parameters_to_json(r.estimate)},
         {"averaged_transition_matrix",
          Json{{"mean", matrix_to_json(r.transitions.mean)},
               {"sd", matrix_to_json(r.transitions.sd)}}},
         {"sojourn_times", sojourn},
         {"sampler",
          Json{{"transition_acceptance", r.transition_acceptance},
               {"emission_acceptance", r.emission_acceptance},
               {"transition_refresh_failures", r.transition_refresh_failures},
               {"emission_refresh_failures", r.emission_refresh_failures}}},
         {"decoded_states", decoded}};
  if (scores) j["truth_scores"] = to_json(*scores);
  return j;
}

}  // namespace zinbhmm::io
