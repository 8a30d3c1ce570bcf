#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mogel/evaluation.hpp"
#include "support/classic_der.hpp"
#include "support/random_params.hpp"
#include "support/scenarios.hpp"

using namespace mogel;

TEST(Rmse, KnownValues) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  const std::vector<double> p{0.0, 0.0}, t{5.0, 0.0};
  EXPECT_NEAR(rmse(p, t), 3.5355339059327378, 1e-15);
}

TEST(Rmse, PermutationInvariant) {
  const std::vector<double> p{0.3, -1.2, 4.0, 2.5}, t{1.0, -1.0, 3.0, 2.0};
  const std::vector<double> pp{2.5, 4.0, 0.3, -1.2}, tp{2.0, 3.0, 1.0, -1.0};
  EXPECT_NEAR(rmse(p, t), rmse(pp, tp), 1e-15);
}

TEST(Rmse, RejectsMismatch) {
  const std::vector<double> a{1.0}, b{1.0, 2.0}, e;
  EXPECT_THROW(rmse(a, b), DimensionError);
  EXPECT_THROW(rmse(e, e), DimensionError);
}

TEST(NllMetric, FrozenValueAtMode) {
  const std::vector<double> y{0.7};
  const std::vector<MixtureEvidentialParams> p{MixtureEvidentialParams(0.7, NIGComponent(1.0, 2.0, 1.0))};
  EXPECT_NEAR(nll_metric(y, p), 0.980829253011726236, 1e-13);
}

TEST(NllMetric, TargetScaleShiftsByLog) {
  const std::vector<double> y{0.1, -0.4};
  const std::vector<MixtureEvidentialParams> p{MixtureEvidentialParams(0.0, NIGComponent(1.0, 2.0, 1.0)),
                                               MixtureEvidentialParams(0.2, NIGComponent(0.5, 3.0, 2.0))};
  EXPECT_NEAR(nll_metric(y, p, 2.0) - nll_metric(y, p, 1.0), std::log(2.0), 1e-14);
  EXPECT_THROW(nll_metric(y, p, 0.0), DomainError);
}

TEST(NllMetric, SingleComponentMatchesClassic) {
  std::mt19937_64 rng(4);
  std::vector<double> y;
  std::vector<MixtureEvidentialParams> p;
  std::vector<classic_der::Nig> q;
  std::normal_distribution<double> n01;
  for (int i = 0; i < 50; ++i) {
    const auto c = testing_support::random_component(rng);
    const double g = n01(rng);
    y.push_back(g + n01(rng));
    p.emplace_back(g, c);
    q.push_back({g, c.nu(), c.alpha(), c.beta()});
  }
  EXPECT_NEAR(nll_metric(y, p), classic_der::mean_nll(y, q), 1e-10);
}

TEST(Evaluate, RequiresStandardizedData) {
  auto raw = make_synthetic(SyntheticKind::linear, 40, NoiseParams{}, {-1.0, 1.0}, 1);
  const NetworkWeights w = init_weights(scenarios::spec_for(1, 1), 1);
  EXPECT_THROW(evaluate(w, raw), DataError);
}

TEST(Evaluate, ReportsOriginalUnits) {
  const auto d = scenarios::linear_data();
  const NetworkWeights w = init_weights(scenarios::spec_for(1, 1), 1);
  const auto m = evaluate(w, d);
  const auto out = forward(w, d.features_of(Split::test));
  const auto& s = *d.standardization;
  const Eigen::VectorXd raw_truth = d.targets_of(Split::test).array() * s.target_std + s.target_mean;
  std::vector<double> pred, truth;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    pred.push_back(s.restore_target(out.gamma(i)));
    truth.push_back(raw_truth(i));
  }
  EXPECT_NEAR(m.rmse, rmse(pred, truth), 1e-12);
  EXPECT_EQ(m.n_test, static_cast<std::int64_t>(pred.size()));
}

TEST(Aggregate, SampleStd) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto a = aggregate(v);
  EXPECT_DOUBLE_EQ(a.mean, 2.5);
  EXPECT_NEAR(a.std, std::sqrt(5.0 / 3.0), 1e-15);
  const std::vector<double> one{7.0};
  EXPECT_EQ(aggregate(one).std, 0.0);
}

TEST(TrialSeed, DistinctAndStable) {
  EXPECT_EQ(trial_seed(1, 0), trial_seed(1, 0));
  EXPECT_NE(trial_seed(1, 0), trial_seed(1, 1));
  EXPECT_NE(trial_seed(1, 0), trial_seed(2, 0));
}

namespace {

TrainConfig fast_config() {
  TrainConfig c;
  c.max_epochs = 5;
  c.patience = 2;
  c.seed = 1;
  return c;
}

}  // namespace

TEST(Benchmark, CountsTrials) {
  auto raw = make_synthetic(SyntheticKind::linear, 100, NoiseParams{}, {-1.0, 1.0}, 1);
  int seen = 0;
  const auto r = benchmark(raw, scenarios::spec_for(1, 1), fast_config(), 3, 7, [&](const TrialOutcome&) { ++seen; });
  EXPECT_EQ(seen, 3);
  EXPECT_EQ(r.n_ok, 3);
  EXPECT_EQ(r.trials.size(), 3u);
  EXPECT_TRUE(std::isfinite(r.rmse.mean));
  EXPECT_THROW(benchmark(raw, scenarios::spec_for(1, 1), fast_config(), 0, 7), ConfigError);
}

TEST(Sweep, SingleKGivesOneRow) {
  auto raw = make_synthetic(SyntheticKind::linear, 100, NoiseParams{}, {-1.0, 1.0}, 1);
  const auto r = component_sweep(raw, scenarios::spec_for(1, 1), fast_config(), {1}, 2, 3);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].k, 1);
  EXPECT_EQ(r.argmin_nll_k, 1);
}

TEST(Sweep, RowsSortedAndDeterministic) {
  auto raw = make_synthetic(SyntheticKind::linear, 100, NoiseParams{}, {-1.0, 1.0}, 1);
  const auto a = component_sweep(raw, scenarios::spec_for(1, 1), fast_config(), {3, 1, 2}, 2, 3);
  const auto b = component_sweep(raw, scenarios::spec_for(1, 1), fast_config(), {1, 2, 3}, 2, 3);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.rows[i].k, static_cast<int>(i) + 1);
    EXPECT_EQ(a.rows[i].nll.mean, b.rows[i].nll.mean);
    EXPECT_EQ(a.rows[i].rmse.mean, b.rows[i].rmse.mean);
  }
  EXPECT_EQ(a.argmin_nll_k, b.argmin_nll_k);
  EXPECT_THROW(component_sweep(raw, scenarios::spec_for(1, 1), fast_config(), {1, 1}, 1, 3), ConfigError);
  EXPECT_THROW(component_sweep(raw, scenarios::spec_for(1, 1), fast_config(), {}, 1, 3), ConfigError);
}

TEST(Sweep, PrefersMixtureOnBimodalData) {
  int mixture_wins = 0;
  for (int rep = 0; rep < 5; ++rep) {
    auto raw = make_synthetic(SyntheticKind::heteroscedastic_bimodal, 1000, NoiseParams{}, {-1.0, 1.0}, 100 + rep);
    auto cfg = scenarios::bimodal_config(1, rep);
    const auto r = component_sweep(raw, scenarios::spec_for(1, 1), cfg, {1, 2, 4}, 1, 500 + rep, {0.6, 0.2, 0.2});
    if (r.argmin_nll_k > 1) ++mixture_wins;
  }
  EXPECT_GE(mixture_wins, 4);
}

TEST(Ood, SameBatchGivesUnitRatio) {
  const NetworkWeights w = init_weights(scenarios::spec_for(1, 2), 3);
  const Eigen::MatrixXd x = scenarios::grid(-1.0, 1.0, 20);
  const auto r = ood_report(w, x, x);
  EXPECT_EQ(r.ratio, 1.0);
  EXPECT_GT(r.mean_epistemic_in, 0.0);
  EXPECT_THROW(ood_report(w, Eigen::MatrixXd(0, 1), x), DimensionError);
}
