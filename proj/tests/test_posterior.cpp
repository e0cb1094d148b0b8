#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_support.hpp"
#include "zinbhmm/posterior.hpp"
#include "zinbhmm/simulation.hpp"

using namespace zinbhmm;

namespace {

ChainSamples empty_samples(int k, int p, int baseline, std::size_t days = 0) {
  ChainSamples s;
  s.n_states = k;
  s.n_covariates = p;
  s.baseline_state = baseline;
  for (int j = 0; j < p; ++j) s.covariate_names.push_back("X" + std::to_string(j + 1));
  s.occupancy.assign(days * static_cast<std::size_t>(k), 0);
  return s;
}

ChainDraw draw_with_delta(int p, const std::vector<int>& delta_row, int iteration = 1) {
  ChainDraw d;
  d.iteration = iteration;
  d.params = ModelParameters::zeros(1, p);
  for (int j = 0; j < p; ++j) {
    d.params.delta(0, j) = delta_row[j];
    d.params.rho(0, j) = delta_row[j] ? 0.1 * (j + 1) : 0.0;
  }
  d.n_included = d.params.n_included(0);
  return d;
}

}  // namespace

TEST(Mppi, Examples) {
  auto s = empty_samples(1, 2, 0);
  for (int v : {1, 1, 0, 1}) s.draws.push_back(draw_with_delta(2, {v, 0}));
  const auto probs = mppi(s);
  EXPECT_DOUBLE_EQ(probs.delta(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(probs.delta(0, 1), 0.0);
  const auto med = median_model(probs);
  EXPECT_EQ(med.delta(0, 0), 1);
  EXPECT_EQ(med.delta(0, 1), 0);

  auto tie = empty_samples(1, 1, 0);
  tie.draws.push_back(draw_with_delta(1, {1}));
  tie.draws.push_back(draw_with_delta(1, {0}));
  EXPECT_DOUBLE_EQ(mppi(tie).delta(0, 0), 0.5);
  EXPECT_EQ(median_model(mppi(tie)).delta(0, 0), 0);

  EXPECT_THROW(mppi(empty_samples(1, 1, 0)), DataError);
}

TEST(MostProbableModel, ModeAndTieBreak) {
  auto single = empty_samples(1, 4, 0);
  single.draws.push_back(draw_with_delta(4, {0, 1, 1, 0}));
  EXPECT_EQ(most_probable_model(single).delta.row(0), Eigen::RowVector4i(0, 1, 1, 0));

  auto s = empty_samples(1, 4, 0);
  for (int i = 0; i < 6; ++i) s.draws.push_back(draw_with_delta(4, {1, 1, 0, 0}));
  for (int i = 0; i < 4; ++i) s.draws.push_back(draw_with_delta(4, {1, 1, 1, 0}));
  EXPECT_EQ(most_probable_model(s).delta.row(0), Eigen::RowVector4i(1, 1, 0, 0));

  auto t = empty_samples(1, 4, 0);
  for (int i = 0; i < 5; ++i) t.draws.push_back(draw_with_delta(4, {1, 1, 1, 0}));
  for (int i = 0; i < 5; ++i) t.draws.push_back(draw_with_delta(4, {0, 1, 0, 1}));
  EXPECT_EQ(most_probable_model(t).delta.row(0), Eigen::RowVector4i(0, 1, 0, 1));

  // equal size and count: lexicographically smaller wins
  auto u = empty_samples(1, 3, 0);
  for (int i = 0; i < 3; ++i) u.draws.push_back(draw_with_delta(3, {1, 0, 0}));
  for (int i = 0; i < 3; ++i) u.draws.push_back(draw_with_delta(3, {0, 0, 1}));
  EXPECT_EQ(most_probable_model(u).delta.row(0), Eigen::RowVector3i(0, 0, 1));
}

TEST(MostProbableModel, RowsTreatedSeparately) {
  // Each transition row takes its own mode even if no single draw has that
  // combination.
  auto s = empty_samples(2, 2, 1);
  auto make = [](int a, int b) {
    ChainDraw d;
    d.params = ModelParameters::zeros(2, 2);
    d.params.gamma[0](0, 0) = a;
    d.params.gamma[1](0, 1) = b;
    return d;
  };
  for (int i = 0; i < 3; ++i) s.draws.push_back(make(1, 0));
  for (int i = 0; i < 2; ++i) s.draws.push_back(make(0, 1));
  for (int i = 0; i < 2; ++i) s.draws.push_back(make(0, 1));
  for (int i = 0; i < 2; ++i) s.draws.push_back(make(1, 0));
  for (int i = 0; i < 3; ++i) s.draws.push_back(make(0, 1));
  const auto m = most_probable_model(s);
  EXPECT_EQ(m.gamma[0](0, 0), 0);  // 5 ones vs 7 zeros
  EXPECT_EQ(m.gamma[1](0, 1), 1);  // 7 ones vs 5 zeros
  EXPECT_TRUE(m.gamma[0].row(1).isZero());
}

TEST(InformationCriteria, PenaltyBreaksLikelihoodTie) {
  auto s = empty_samples(1, 5, 0);
  auto a = draw_with_delta(5, {1, 1, 1, 1, 1}, 10);
  auto b = draw_with_delta(5, {1, 1, 1, 0, 0}, 11);
  a.log_likelihood = b.log_likelihood = -100.0;
  s.draws = {a, b};
  for (auto c : {InformationCriterion::aic, InformationCriterion::bic}) {
    const auto sel = ic_selected_model(s, 200, c);
    EXPECT_EQ(sel.iteration, 11);
    EXPECT_EQ(sel.masks.n_included(0), 3);
  }
  const auto aic = ic_selected_model(s, 200, InformationCriterion::aic);
  EXPECT_DOUBLE_EQ(aic.value, 200.0 + 2.0 * (3 + fixed_parameter_count(1)));
  const auto bic = ic_selected_model(s, 200, InformationCriterion::bic);
  EXPECT_NEAR(bic.value, 200.0 + std::log(200.0) * (3 + fixed_parameter_count(1)), 1e-12);

  auto one = empty_samples(1, 5, 0);
  one.draws = {a};
  EXPECT_EQ(ic_selected_model(one, 10, InformationCriterion::bic).iteration, 10);
}

TEST(InformationCriteria, BicNoLargerThanAic) {
  // On a nested toy the BIC-selected draw never includes more coefficients
  // than the AIC one.
  auto spec = paper_default_spec();
  spec.n_patients = 4;
  spec.min_days = spec.max_days = 40;
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RngHandle rng(seed);
    const auto sim = generate_dataset(spec, rng);
    ChainConfig cfg;
    cfg.iterations = 120;
    cfg.burn_in = 20;
    cfg.seed = seed;
    const auto out = run_chain(sim.data, zt::spec_k(3, 2), cfg);
    const auto aic = ic_selected_model(out, sim.data.n_days(), InformationCriterion::aic);
    const auto bic = ic_selected_model(out, sim.data.n_days(), InformationCriterion::bic);
    ok += bic.masks.n_included(2) <= aic.masks.n_included(2);
  }
  EXPECT_GE(ok, 16);
}

TEST(Dic, DegenerateChain) {
  RowMatrix x(6, 2);
  x << 1, 0.2, 0, -0.4, 1, 1.1, 0, 0.3, 1, -0.7, 0, 0.5;
  const auto d = zt::single_patient({0, 3, 1, 0, 7, 2}, x);
  const auto spec = zt::spec_k(2, 1);
  auto s = empty_samples(2, 2, 1, d.n_days());
  ChainDraw draw;
  draw.params = zt::toy_params();
  draw.log_likelihood = observed_log_likelihood(d, draw.params, spec);
  for (int i = 0; i < 5; ++i) s.draws.push_back(draw);
  const auto res = dic(s, d, spec);
  EXPECT_NEAR(res.p_dic, 0.0, 1e-10);
  EXPECT_NEAR(res.dic, -2.0 * draw.log_likelihood, 1e-10);
  EXPECT_FALSE(res.negative_p_dic && res.p_dic < -1e-10);

  s.draws[2].log_likelihood = std::numeric_limits<double>::infinity();
  try {
    dic(s, d, spec);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("draw 2"), std::string::npos);
  }
}

TEST(PosteriorMean, MaskedAverage) {
  auto s = empty_samples(1, 2, 0);
  s.draws.push_back(draw_with_delta(2, {1, 1}));
  s.draws.push_back(draw_with_delta(2, {1, 0}));
  s.draws.push_back(draw_with_delta(2, {1, 0}));
  s.draws[0].params.r[0] = 2.0;
  s.draws[1].params.r[0] = 4.0;
  s.draws[2].params.r[0] = 9.0;
  const auto m = posterior_mean(s);
  EXPECT_DOUBLE_EQ(m.r[0], 5.0);
  EXPECT_NEAR(m.rho(0, 0), 0.1, 1e-15);
  EXPECT_EQ(m.rho(0, 1), 0.0);  // MPPI 1/3 -> masked out
  EXPECT_EQ(m.delta(0, 1), 0);
  EXPECT_NEAR(m.pi.sum(), 1.0, 1e-15);
}

TEST(Summaries, IntervalsContainMean) {
  RowMatrix x(8, 2);
  x << 0.1, 1, -0.3, 0, 0.8, 1, 0.2, 1, -1.1, 0, 0.5, 1, 0.0, 0, 0.9, 1;
  const auto d = zt::single_patient({0, 1, 4, 2, 0, 5, 3, 1}, x);
  ChainConfig cfg;
  cfg.iterations = 400;
  cfg.burn_in = 100;
  cfg.transition_columns = {Inclusion::always, Inclusion::always};
  cfg.emission_columns = {Inclusion::always, Inclusion::always};
  const auto out = run_chain(d, zt::spec_k(2, 1), cfg);
  const auto sum = summarize_parameters(out);
  const auto probs = mppi(out);
  for (int s = 0; s < 2; ++s)
    for (int j = 0; j < 2; ++j) {
      ASSERT_EQ(probs.delta(s, j), 1.0);
      const auto& c = sum.rho[s * 2 + j];
      EXPECT_LE(c.lower, c.mean);
      EXPECT_GE(c.upper, c.mean);
    }
  for (const auto& c : sum.r) {
    EXPECT_LE(c.lower, c.mean);
    EXPECT_GE(c.upper, c.mean);
  }
  const auto q = summarize({1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(q.mean, 3.0);
  EXPECT_DOUBLE_EQ(q.lower, 1.1);
  EXPECT_DOUBLE_EQ(q.upper, 4.9);
}

TEST(Decoding, ModeOfOccupancy) {
  auto s = empty_samples(3, 1, 2, 4);
  s.occupancy = {5, 1, 0, 0, 2, 2, 1, 1, 7, 3, 3, 3};
  EXPECT_EQ(decode_states(s), (std::vector<int>{0, 1, 2, 0}));
}

TEST(MacroMetrics, Examples) {
  const std::vector<int> perfect{0, 1, 2, 1, 0};
  const auto p = macro_metrics(perfect, perfect, 3);
  EXPECT_DOUBLE_EQ(p.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(p.precision, 1.0);
  EXPECT_DOUBLE_EQ(p.sensitivity, 1.0);
  EXPECT_DOUBLE_EQ(p.specificity, 1.0);
  EXPECT_DOUBLE_EQ(p.f1, 1.0);

  // state 1: TP=3, FN=1, FP=2, TN=4
  std::vector<int> truth, dec;
  auto add = [&](int t, int d, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      dec.push_back(d);
    }
  };
  add(0, 0, 3);
  add(0, 1, 1);
  add(1, 0, 2);
  add(1, 1, 4);
  const auto m = macro_metrics(truth, dec, 2);
  EXPECT_NEAR(m.accuracy, 0.7, 1e-15);
  EXPECT_NEAR(m.precision, (3.0 / 5 + 4.0 / 5) / 2, 1e-15);
  EXPECT_NEAR(m.sensitivity, (3.0 / 4 + 4.0 / 6) / 2, 1e-15);
  EXPECT_NEAR(m.specificity, (4.0 / 6 + 3.0 / 4) / 2, 1e-15);
  EXPECT_NEAR(m.f1, 2 * m.precision * m.sensitivity / (m.precision + m.sensitivity), 1e-15);

  const auto c = macro_metrics({0, 1, 0, 1, 0, 1}, {0, 0, 0, 0, 0, 0}, 2);
  EXPECT_DOUBLE_EQ(c.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(c.specificity, 0.5);
  EXPECT_DOUBLE_EQ(c.precision, 0.25);  // state 2 never predicted -> contributes 0

  EXPECT_THROW(macro_metrics({0}, {0, 1}, 2), DataError);
}

TEST(MacroMetrics, PermutationSymmetric) {
  RngHandle rng(3);
  std::vector<int> t(200), d(200);
  for (int i = 0; i < 200; ++i) {
    t[i] = static_cast<int>(rng.uniform() * 3);
    d[i] = rng.uniform() < 0.7 ? t[i] : static_cast<int>(rng.uniform() * 3);
  }
  const std::vector<int> perm{2, 0, 1};
  std::vector<int> tp(200), dp(200);
  for (int i = 0; i < 200; ++i) {
    tp[i] = perm[t[i]];
    dp[i] = perm[d[i]];
  }
  const auto a = macro_metrics(t, d, 3), b = macro_metrics(tp, dp, 3);
  EXPECT_NEAR(a.accuracy, b.accuracy, 1e-14);
  EXPECT_NEAR(a.precision, b.precision, 1e-14);
  EXPECT_NEAR(a.sensitivity, b.sensitivity, 1e-14);
  EXPECT_NEAR(a.specificity, b.specificity, 1e-14);
  EXPECT_NEAR(a.f1, b.f1, 1e-14);
}

TEST(SelectionMetrics, Examples) {
  const std::vector<int> mask{1, 0, 0, 1, 1, 0};
  const auto same = selection_metrics(mask, mask);
  EXPECT_EQ(same.n_selected, 3);
  EXPECT_EQ(same.fnr, 0.0);
  EXPECT_EQ(same.fpr, 0.0);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.sensitivity, 1.0);
  EXPECT_EQ(same.specificity, 1.0);
  EXPECT_EQ(same.f1, 1.0);
  const auto zeros = selection_metrics({0, 0, 0}, {0, 0, 0});
  EXPECT_EQ(zeros.f1, 1.0);
  EXPECT_EQ(zeros.sensitivity, 1.0);

  // 42 transition slots, 19 true; one miss and two extras
  std::vector<int> truth(42, 0), sel(42, 0);
  for (int i = 0; i < 19; ++i) truth[i] = sel[i] = 1;
  sel[0] = 0;
  sel[30] = sel[31] = 1;
  const auto m = selection_metrics(truth, sel);
  EXPECT_EQ(m.n_selected, 20);
  EXPECT_NEAR(m.fnr, 1.0 / 19, 1e-15);
  EXPECT_NEAR(m.fpr, 2.0 / 23, 1e-15);
  EXPECT_NEAR(m.precision, 18.0 / 20, 1e-15);
  EXPECT_NEAR(m.sensitivity, 18.0 / 19, 1e-15);
  EXPECT_NEAR(m.specificity, 21.0 / 23, 1e-15);

  const auto none = selection_metrics({1, 1, 0}, {0, 0, 0});
  EXPECT_EQ(none.sensitivity, 0.0);
  EXPECT_EQ(none.fnr, 1.0);
  EXPECT_EQ(none.n_selected, 0);
  EXPECT_THROW(selection_metrics({1}, {1, 0}), DataError);
}

TEST(Sojourn, RunLengths) {
  auto a = mean_sojourn_times({0, 0, 0, 1, 1}, {0, 5}, 2);
  EXPECT_DOUBLE_EQ(a[0].mean, 3.0);
  EXPECT_EQ(a[0].n_runs, 1);
  EXPECT_DOUBLE_EQ(a[1].mean, 2.0);

  auto b = mean_sojourn_times({0, 1, 0, 1}, {0, 4}, 2);
  EXPECT_DOUBLE_EQ(b[0].mean, 1.0);
  EXPECT_DOUBLE_EQ(b[1].mean, 1.0);

  auto c = mean_sojourn_times({0, 0, 0, 0, 0}, {0, 2, 5}, 3);
  EXPECT_DOUBLE_EQ(c[0].mean, 2.5);
  EXPECT_EQ(c[0].n_runs, 2);
  EXPECT_FALSE(c[1].visited);
  EXPECT_FALSE(c[2].visited);

  auto q = mean_sojourn_times({0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0}, {0, 13}, 2);
  // state-1 runs {1, 2, 3, 4}
  EXPECT_DOUBLE_EQ(q[0].mean, 2.5);
  EXPECT_DOUBLE_EQ(q[0].q25, 1.75);
  EXPECT_DOUBLE_EQ(q[0].q75, 3.25);

  EXPECT_THROW(mean_sojourn_times({0, 1}, {0, 3}, 2), DataError);
  EXPECT_THROW(mean_sojourn_times({0, 4}, {0, 2}, 2), DataError);
}

TEST(AveragedTransitions, Properties) {
  RngHandle rng(2);
  RowMatrix x(30, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << rng.normal(), rng.uniform();
  PanelDataset d;
  d.covariate_names = {"X1", "X2"};
  d.add_patient(std::vector<int>(15, 1), x.topRows(15));
  d.add_patient(std::vector<int>(15, 1), x.bottomRows(15));

  auto flat = ModelParameters::zeros(3, 2);
  const auto a = averaged_transition_matrix(d, flat, 2);
  EXPECT_TRUE(a.mean.isApprox(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3), 1e-14));
  EXPECT_LT(a.sd.maxCoeff(), 1e-12);

  auto m = ModelParameters::zeros(3, 2);
  for (int f = 0; f < 3; ++f)
    for (int to = 0; to < 2; ++to) m.beta[f].row(to) << rng.normal(), rng.normal();
  const auto b = averaged_transition_matrix(d, m, 2);
  for (int f = 0; f < 3; ++f) EXPECT_NEAR(b.mean.row(f).sum(), 1.0, 1e-10);
  EXPECT_GT(b.sd.maxCoeff(), 0.0);
  // oracle: average of per-day probabilities, days with a successor only
  double e01 = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t g = d.begin(i); g + 1 < d.end(i); ++g, ++n)
      e01 += zt::oracle_trans(m, 0, 1, d.covariates.row(static_cast<Eigen::Index>(g)), 2);
  EXPECT_NEAR(b.mean(0, 1), e01 / n, 1e-12);

  const auto di = with_intercept(d);
  auto hm = ModelParameters::zeros(3, 3);
  for (int f = 0; f < 3; ++f) hm.beta[f].col(0) << 0.3 * f, -0.5, 0.0;
  const auto c = averaged_transition_matrix(di, hm, 2);
  EXPECT_LT(c.sd.maxCoeff(), 1e-12);
}

TEST(MeanAbsoluteError, Examples) {
  RowMatrix x = RowMatrix::Zero(2, 1);
  auto m = ModelParameters::zeros(1, 1);
  m.p_zero[0] = 0.0;
  m.r[0] = 1.0;  // psi = 0.5 -> mu = 1
  EXPECT_DOUBLE_EQ(mean_absolute_error(zt::single_patient({0, 4}, x), m, {0, 0}), 2.0);
  m.r[0] = 2.0;
  EXPECT_DOUBLE_EQ(mean_absolute_error(zt::single_patient({2, 2}, x), m, {0, 0}), 0.0);
  // unconditional mean scales by 1 - p
  m.p_zero[0] = 0.5;
  EXPECT_DOUBLE_EQ(mean_absolute_error(zt::single_patient({2, 2}, x), m, {0, 0}, true), 1.0);
  EXPECT_DOUBLE_EQ(mean_absolute_error(zt::single_patient({2, 2}, x), m, {0, 0}, false), 0.0);
  EXPECT_THROW(mean_absolute_error(zt::single_patient({2, 2}, x), m, {0}), DataError);
}

TEST(Report, EndToEnd) {
  auto spec = paper_default_spec();
  spec.n_patients = 5;
  spec.min_days = spec.max_days = 30;
  RngHandle rng(4);
  const auto sim = generate_dataset(spec, rng);
  ChainConfig cfg;
  cfg.iterations = 200;
  cfg.burn_in = 100;
  const auto hs = zt::spec_k(3, 2);
  const auto out = run_chain(sim.data, hs, cfg);
  const auto rep = build_report(out, sim.data, hs);
  EXPECT_EQ(rep.n_draws, 100);
  EXPECT_EQ(rep.decoded.size(), sim.data.n_days());
  for (const auto& g : rep.inclusion.gamma) {
    EXPECT_GE(g.minCoeff(), 0.0);
    EXPECT_LE(g.maxCoeff(), 1.0);
  }
  for (int f = 0; f < 3; ++f) EXPECT_NEAR(rep.transitions.mean.row(f).sum(), 1.0, 1e-10);
  EXPECT_TRUE(std::isfinite(rep.dic_result.dic));
  EXPECT_GE(rep.mae, 0.0);
  EXPECT_GE(rep.transition_acceptance, 0.0);
  EXPECT_LE(rep.transition_acceptance, 1.0);
  // decoding from relabelled occupancy: decoded labels follow the sorted means
  const auto st = macro_metrics(sim.truth.xi, rep.decoded, 3);
  EXPECT_GE(st.accuracy, 0.0);
  EXPECT_LE(st.accuracy, 1.0);
}
