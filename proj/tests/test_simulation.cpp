#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <array>
#include <cmath>
#include <cstring>
#include <map>

#include "test_support.hpp"
#include "zinbhmm/simulation.hpp"

using namespace zinbhmm;

namespace {

double chi2_pvalue(double stat, int df) { return boost::math::gamma_q(0.5 * df, 0.5 * stat); }

/// K=1 design with one constant covariate so psi is fixed.
SimulationSpec constant_design(double r, double psi, double p_zero, int patients, int days) {
  SimulationSpec s;
  s.n_patients = patients;
  s.min_days = s.max_days = days;
  s.baseline_state = 0;
  s.truth = ModelParameters::zeros(1, 1);
  s.truth.r << r;
  s.truth.p_zero << p_zero;
  s.truth.pi << 1.0;
  s.truth.rho(0, 0) = std::log(psi / (1.0 - psi));
  s.truth.delta(0, 0) = 1;
  s.covariates = {CovariateLaw::uniform(1.0, 1.0)};
  s.covariate_names = {"X1"};
  return s;
}

}  // namespace

TEST(DefaultDesign, PrintedValues) {
  const auto s = paper_default_spec();
  const auto& t = s.truth;
  ASSERT_EQ(s.n_states(), 3);
  ASSERT_EQ(s.n_covariates(), 7);
  EXPECT_EQ(s.baseline_state, 2);
  EXPECT_EQ(s.n_patients, 100);
  EXPECT_EQ(s.min_days, 100);
  EXPECT_EQ(s.max_days, 110);
  EXPECT_EQ(t.r, Eigen::Vector3d(3, 8, 15));
  EXPECT_EQ(t.p_zero, Eigen::Vector3d(0.7, 0.05, 0.01));
  EXPECT_EQ(t.pi, Eigen::Vector3d(0.9, 0.08, 0.02));
  Eigen::RowVectorXd rho3(7);
  rho3 << 0, -0.5, 0, -0.5, 0.5, 0.4, 0;
  EXPECT_EQ(t.rho.row(2), rho3);
  Eigen::RowVectorXd rho1(7);
  rho1 << -0.7, -0.8, -0.8, 0, -0.8, -0.7, -0.7;
  EXPECT_EQ(t.rho.row(0), rho1);

  auto expect_row = [&](int from, int to, std::vector<int> cols, double v) {
    for (int j = 1; j <= 7; ++j) {
      const bool on = std::find(cols.begin(), cols.end(), j) != cols.end();
      EXPECT_EQ(t.beta[from - 1](to - 1, j - 1), on ? v : 0.0) << from << to << j;
      EXPECT_EQ(t.gamma[from - 1](to - 1, j - 1), on ? 1 : 0);
    }
  };
  expect_row(1, 1, {1, 2, 3, 4, 5, 6, 7}, 3.5);
  expect_row(1, 2, {1, 2, 3}, 2.9);
  expect_row(2, 1, {2, 3, 7}, 2.4);
  expect_row(2, 2, {3, 7}, 3.0);
  expect_row(3, 1, {4, 7}, -2.9);
  expect_row(3, 2, {4, 7}, -2.5);
  for (int f = 0; f < 3; ++f) EXPECT_TRUE(t.beta[f].row(2).isZero());
  EXPECT_EQ(t.delta.sum(), 6 + 4 + 4);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(s.covariates[j].kind, CovariateLaw::Kind::bernoulli);
  for (int j = 4; j < 7; ++j) EXPECT_EQ(s.covariates[j].kind, CovariateLaw::Kind::uniform);
  EXPECT_NO_THROW(s.validate());
}

TEST(DefaultDesign, StateMeansOrdered) {
  // Averaged NB means under the covariate design increase with the label.
  const auto s = paper_default_spec();
  RngHandle rng(3);
  std::array<double, 3> mean{};
  const int n = 100000;
  Eigen::RowVectorXd x(7);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 7; ++j) x[j] = s.covariates[j].draw(rng);
    for (int k = 0; k < 3; ++k)
      mean[k] += (1.0 - s.truth.p_zero[k]) *
                 nb_mean(s.truth.r[k], logistic_psi(x.dot(s.truth.rho.row(k)))) / n;
  }
  EXPECT_LT(mean[0], mean[1]);
  EXPECT_LT(mean[1], mean[2]);
}

TEST(Generate, ShapesAndRanges) {
  auto s = paper_default_spec();
  s.n_patients = 40;
  RngHandle rng(1);
  const auto sim = generate_dataset(s, rng);
  const auto& d = sim.data;
  EXPECT_NO_THROW(d.validate());
  ASSERT_EQ(d.n_patients(), 40u);
  EXPECT_EQ(sim.truth.xi.size(), d.n_days());
  EXPECT_EQ(sim.truth.z.size(), d.n_days());
  EXPECT_EQ(d.covariate_names, s.covariate_names);
  std::map<std::size_t, int> lengths;
  for (std::size_t i = 0; i < d.n_patients(); ++i) {
    EXPECT_GE(d.length(i), 100u);
    EXPECT_LE(d.length(i), 110u);
    ++lengths[d.length(i)];
  }
  EXPECT_GT(lengths.size(), 4u);
  for (std::size_t g = 0; g < d.n_days(); ++g) {
    EXPECT_GE(d.counts[g], 0);
    if (sim.truth.z[g]) { EXPECT_EQ(d.counts[g], 0); }
    for (int j = 0; j < 4; ++j) {
      const double v = d.covariates(static_cast<Eigen::Index>(g), j);
      EXPECT_TRUE(v == 0.0 || v == 1.0);
    }
    for (int j = 4; j < 7; ++j) {
      const double v = d.covariates(static_cast<Eigen::Index>(g), j);
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Generate, DayRangeEndpointsReached) {
  auto s = constant_design(2.0, 0.5, 0.1, 400, 5);
  s.max_days = 7;
  RngHandle rng(2);
  const auto sim = generate_dataset(s, rng);
  std::map<std::size_t, int> lengths;
  for (std::size_t i = 0; i < sim.data.n_patients(); ++i) ++lengths[sim.data.length(i)];
  ASSERT_EQ(lengths.size(), 3u);
  for (const auto& [len, n] : lengths) EXPECT_NEAR(n, 400.0 / 3.0, 45.0) << len;
}

TEST(Generate, AllStructuralZeros) {
  auto s = paper_default_spec();
  s.n_patients = 10;
  s.truth.p_zero.setOnes();
  RngHandle rng(4);
  const auto sim = generate_dataset(s, rng);
  for (int y : sim.data.counts) EXPECT_EQ(y, 0);
  for (auto z : sim.truth.z) EXPECT_EQ(z, 1);
}

TEST(Generate, StateOneZeroFraction) {
  // Empirical zero fraction in state 1 against p + (1-p) E[(1-psi)^r], the
  // expectation taken over the generator's own covariate rows.
  auto s = paper_default_spec();
  RngHandle rng(5);
  const auto sim = generate_dataset(s, rng);
  const auto& d = sim.data;
  const auto& t = s.truth;
  double zeros = 0.0, expected = 0.0, n = 0.0;
  for (std::size_t g = 0; g < d.n_days(); ++g) {
    if (sim.truth.xi[g] != 0) continue;
    n += 1.0;
    zeros += d.counts[g] == 0;
    const double psi =
        logistic_psi(d.covariates.row(static_cast<Eigen::Index>(g)).dot(t.rho.row(0)));
    expected += t.p_zero[0] + (1.0 - t.p_zero[0]) * std::pow(1.0 - psi, t.r[0]);
  }
  ASSERT_GT(n, 1000.0);
  EXPECT_NEAR(zeros / n, expected / n, 0.02);
}

TEST(Generate, FixedSeedReproducible) {
  auto s = paper_default_spec();
  s.n_patients = 15;
  RngHandle a(42), b(42), c(43);
  const auto sa = generate_dataset(s, a);
  const auto sb = generate_dataset(s, b);
  const auto sc = generate_dataset(s, c);
  EXPECT_EQ(sa.data.counts, sb.data.counts);
  EXPECT_EQ(sa.data.offsets, sb.data.offsets);
  ASSERT_EQ(sa.data.covariates.size(), sb.data.covariates.size());
  EXPECT_EQ(0, std::memcmp(sa.data.covariates.data(), sb.data.covariates.data(),
                           sizeof(double) * sa.data.covariates.size()));
  EXPECT_EQ(sa.truth.xi, sb.truth.xi);
  EXPECT_EQ(sa.truth.z, sb.truth.z);
  EXPECT_NE(sa.data.counts, sc.data.counts);
}

TEST(Generate, TransitionFrequencies) {
  // Discrete covariates give a finite set of transition laws per from-state,
  // so a Pearson test is exact in the limit.
  SimulationSpec s;
  s.n_patients = 400;
  s.min_days = 100;
  s.max_days = 110;
  s.baseline_state = 2;
  s.truth = ModelParameters::zeros(3, 2);
  auto& t = s.truth;
  t.r << 2, 4, 6;
  t.p_zero << 0.2, 0.1, 0.05;
  t.pi << 0.4, 0.3, 0.3;
  t.beta[0].row(0) << 0.9, -0.6;
  t.beta[0].row(1) << -0.4, 0.8;
  t.beta[1].row(0) << 0.2, 0.5;
  t.beta[1].row(1) << 0.7, -1.0;
  t.beta[2].row(0) << -0.3, 0.4;
  t.beta[2].row(1) << 0.1, 0.6;
  t.rho << 0.1, -0.2, 0.3, 0.1, -0.4, 0.2;
  s.covariates = {CovariateLaw::bernoulli(0.5), CovariateLaw::bernoulli(0.3)};
  s.covariate_names = {"X1", "X2"};
  RngHandle rng(6);
  const auto sim = generate_dataset(s, rng);
  const auto& d = sim.data;
  // counts[from][pattern][to]
  double obs[3][4][3] = {};
  for (std::size_t i = 0; i < d.n_patients(); ++i)
    for (std::size_t g = d.begin(i) + 1; g < d.end(i); ++g) {
      const auto row = static_cast<Eigen::Index>(g - 1);
      const int pat = static_cast<int>(d.covariates(row, 0)) * 2 +
                      static_cast<int>(d.covariates(row, 1));
      obs[sim.truth.xi[g - 1]][pat][sim.truth.xi[g]] += 1.0;
    }
  for (int f = 0; f < 3; ++f) {
    double stat = 0.0, total = 0.0;
    for (int pat = 0; pat < 4; ++pat) {
      Eigen::RowVectorXd x(2);
      x << pat / 2, pat % 2;
      const Eigen::VectorXd zeta = t.beta[f] * x.transpose();
      const Eigen::VectorXd prob = softmax_with_baseline(zeta, 2);
      double n = 0.0;
      for (int to = 0; to < 3; ++to) n += obs[f][pat][to];
      total += n;
      for (int to = 0; to < 3; ++to) {
        const double e = n * prob[to];
        stat += (obs[f][pat][to] - e) * (obs[f][pat][to] - e) / e;
      }
    }
    ASSERT_GE(total, 1e4) << f;
    EXPECT_GT(chi2_pvalue(stat, 4 * 2), 0.01) << "from " << f << " stat " << stat;
  }
}

TEST(Generate, NegativeBinomialMoments) {
  // r = 3, psi = 0.6: mu = 4.5, var = mu + mu^2 / r = 11.25.
  const auto s = constant_design(3.0, 0.6, 0.3, 1500, 100);
  RngHandle rng(7);
  const auto sim = generate_dataset(s, rng);
  std::vector<double> y;
  for (std::size_t g = 0; g < sim.data.n_days(); ++g)
    if (!sim.truth.z[g]) y.push_back(sim.data.counts[g]);
  ASSERT_GE(y.size(), 100000u);
  const auto m = zt::moments(y);
  EXPECT_NEAR(m.mean, 4.5, 0.05 * 4.5);
  EXPECT_NEAR(m.var, 11.25, 0.05 * 11.25);
  const double frac_structural =
      1.0 - static_cast<double>(y.size()) / static_cast<double>(sim.data.n_days());
  EXPECT_NEAR(frac_structural, 0.3, 0.01);
}

TEST(Generate, PoissonDesign) {
  const auto s = poisson_default_spec();
  ASSERT_EQ(s.family, EmissionFamily::poisson);
  EXPECT_EQ(s.n_states(), 2);
  EXPECT_EQ(s.n_covariates(), 15);
  EXPECT_EQ(s.truth.pi, Eigen::Vector2d(0.9, 0.1));
  EXPECT_EQ(s.truth.rho(0, 4), -4.0);
  EXPECT_EQ(s.truth.rho(1, 4), 0.7);
  EXPECT_TRUE(s.truth.rho.rightCols(8).isZero());
  EXPECT_NO_THROW(s.validate());

  // Poisson counts at a constant covariate: mean equals variance equals exp(eta).
  SimulationSpec c = constant_design(1.0, 0.5, 0.0, 1000, 100);
  c.family = EmissionFamily::poisson;
  c.truth.rho(0, 0) = std::log(3.0);
  RngHandle rng(8);
  const auto sim = generate_dataset(c, rng);
  std::vector<double> y(sim.data.counts.begin(), sim.data.counts.end());
  const auto m = zt::moments(y);
  EXPECT_NEAR(m.mean, 3.0, 0.05 * 3.0);
  EXPECT_NEAR(m.var, 3.0, 0.05 * 3.0);
  for (auto z : sim.truth.z) EXPECT_EQ(z, 0);
}

TEST(ScaleEffects, Factors) {
  const auto s = paper_default_spec();
  const auto same = scale_effects(s, 1.0);
  EXPECT_EQ(same.truth.rho, s.truth.rho);
  for (int f = 0; f < 3; ++f) EXPECT_EQ(same.truth.beta[f], s.truth.beta[f]);

  const auto half = scale_effects(s, 0.5);
  EXPECT_EQ(half.truth.rho, s.truth.rho * 0.5);
  EXPECT_EQ(half.truth.delta, s.truth.delta);
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(half.truth.beta[f], s.truth.beta[f] * 0.5);
    EXPECT_EQ(half.truth.gamma[f], s.truth.gamma[f]);
  }
  EXPECT_EQ(half.truth.r, s.truth.r);
  EXPECT_EQ(half.truth.beta[0](0, 0), 1.75);

  EXPECT_THROW(scale_effects(s, 0.0), ConfigError);
  EXPECT_THROW(scale_effects(s, -1.0), ConfigError);
  EXPECT_THROW(scale_effects(s, std::nan("")), ConfigError);
}

TEST(NoiseCovariates, Extend) {
  const auto s = paper_default_spec();
  const auto same = add_noise_covariates(s, 0);
  EXPECT_EQ(same.n_covariates(), 7);
  EXPECT_EQ(same.truth.rho, s.truth.rho);

  const auto w = add_noise_covariates(s, 43);
  ASSERT_EQ(w.n_covariates(), 50);
  EXPECT_EQ(w.covariate_names.size(), 50u);
  EXPECT_EQ(w.covariate_names.back(), "X50");
  EXPECT_EQ(w.truth.rho.leftCols(7), s.truth.rho);
  EXPECT_TRUE(w.truth.rho.rightCols(43).isZero());
  EXPECT_EQ(w.truth.delta.rightCols(43).sum(), 0);
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(w.truth.beta[f].cols(), 50);
    EXPECT_EQ(w.truth.beta[f].leftCols(7), s.truth.beta[f]);
    EXPECT_TRUE(w.truth.beta[f].rightCols(43).isZero());
    EXPECT_EQ(w.truth.gamma[f].rightCols(43).sum(), 0);
  }
  EXPECT_NO_THROW(w.validate());
  EXPECT_THROW(add_noise_covariates(s, -1), ConfigError);
}

TEST(NoiseCovariates, CountLawUnchanged) {
  auto s = paper_default_spec();
  s.n_patients = 200;
  const auto w = add_noise_covariates(s, 10);
  RngHandle a(9), b(10);
  const auto sa = generate_dataset(s, a);
  const auto sb = generate_dataset(w, b);
  std::vector<double> ya(sa.data.counts.begin(), sa.data.counts.end());
  std::vector<double> yb(sb.data.counts.begin(), sb.data.counts.end());
  const auto ma = zt::moments(ya), mb = zt::moments(yb);
  // paths are strongly persistent, so allow for between-patient correlation
  EXPECT_NEAR(ma.mean, mb.mean, 0.25 * std::max(ma.mean, 0.1));
  double za = 0, zb = 0;
  for (double v : ya) za += v == 0.0;
  for (double v : yb) zb += v == 0.0;
  EXPECT_NEAR(za / ya.size(), zb / yb.size(), 0.03);
}

TEST(SimulationSpec, RejectsInconsistentDimensions) {
  auto s = paper_default_spec();
  s.covariate_names.pop_back();
  EXPECT_THROW(s.validate(), ConfigError);
  s = paper_default_spec();
  s.truth.pi << 0.5, 0.5, 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = paper_default_spec();
  s.min_days = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = paper_default_spec();
  s.baseline_state = 3;
  EXPECT_THROW(s.validate(), ConfigError);
  s = paper_default_spec();
  s.truth.r[1] = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = paper_default_spec();
  s.covariates.push_back(CovariateLaw::uniform());
  s.covariate_names.push_back("X8");
  EXPECT_THROW(s.validate(), ConfigError);
}
