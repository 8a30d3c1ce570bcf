#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "mogel/evidential_core.hpp"
#include "support/classic_der.hpp"
#include "support/random_params.hpp"

using namespace mogel;

namespace {

ComponentBatch batch_from(const std::vector<std::vector<NIGComponent>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd nu(n, k), alpha(n, k), beta(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      nu(i, j) = rows[i][j].nu();
      alpha(i, j) = rows[i][j].alpha();
      beta(i, j) = rows[i][j].beta();
    }
  }
  return ComponentBatch(nu, alpha, beta);
}

}  // namespace

TEST(Types, ComponentInvariantsEnforced) {
  EXPECT_THROW(NIGComponent(0.0, 2.0, 1.0), DomainError);
  EXPECT_THROW(NIGComponent(1.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(NIGComponent(1.0, 2.0, -1.0), DomainError);
  EXPECT_THROW(NIGComponent(NAN, 2.0, 1.0), DomainError);
  EXPECT_NO_THROW(NIGComponent(1e-6, 1.0 + 1e-6, 1e-6));
}

TEST(Types, MixtureInvariantsEnforced) {
  NIGComponent c(1.0, 2.0, 1.0);
  EXPECT_THROW(MixtureEvidentialParams(0.0, {}, {}), DomainError);
  EXPECT_THROW(MixtureEvidentialParams(0.0, {c, c}, {0.5, 0.6}), DomainError);
  EXPECT_THROW(MixtureEvidentialParams(0.0, {c, c}, {1.5, -0.5}), DomainError);
  EXPECT_THROW(MixtureEvidentialParams(0.0, {c, c}, {1.0}), DomainError);
  EXPECT_NO_THROW(MixtureEvidentialParams(0.0, {c, c}, {0.3, 0.7}));
}

TEST(Types, ResponsibilityRowsMustBeStochastic) {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(Responsibilities{bad}, DomainError);
  Eigen::MatrixXd neg(1, 2);
  neg << 1.2, -0.2;
  EXPECT_THROW(Responsibilities{neg}, DomainError);
}

TEST(StudentT, CauchyAtMode) {
  EXPECT_NEAR(student_t_logpdf(0.0, StudentTParams(0.0, 1.0, 1.0)), std::log(1.0 / std::numbers::pi), 1e-12);
  EXPECT_NEAR(student_t_logpdf(0.0, StudentTParams(0.0, 1.0, 1.0)), -1.1447299, 1e-7);
}

TEST(StudentT, ModeAndSymmetry) {
  const StudentTParams p(2.5, 0.8, 3.3);
  const double at_mode = student_t_logpdf(2.5, p);
  EXPECT_GT(at_mode, student_t_logpdf(2.6, p));
  EXPECT_DOUBLE_EQ(student_t_logpdf(2.5 + 0.7, p), student_t_logpdf(2.5 - 0.7, p));
}

TEST(StudentT, MatchesDirectGammaFunctionEvaluation) {
  // Frozen from an independent 30-digit evaluation of
  // Gamma((d+1)/2) / (Gamma(d/2) sqrt(d pi s)) (1 + (y-l)^2 / (d s))^(-(d+1)/2).
  EXPECT_NEAR(student_t_logpdf(1.3, StudentTParams(0.5, 2.0, 4.0)), -1.51980544613201970, 1e-13);
}

TEST(StudentT, RejectsBadInput) {
  EXPECT_THROW(student_t_logpdf(INFINITY, StudentTParams(0.0, 1.0, 1.0)), DomainError);
  EXPECT_THROW(StudentTParams(0.0, 0.0, 1.0), DomainError);
  EXPECT_THROW(StudentTParams(0.0, 1.0, -2.0), DomainError);
}

TEST(ComponentMarginal, DirectSubstitution) {
  const auto a = component_marginal(NIGComponent(1.0, 2.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(a.location(), 0.0);
  EXPECT_DOUBLE_EQ(a.scale(), 1.0);
  EXPECT_DOUBLE_EQ(a.dof(), 4.0);

  const auto b = component_marginal(NIGComponent(3.0, 1.5, 2.0), -1.0);
  EXPECT_DOUBLE_EQ(b.location(), -1.0);
  EXPECT_NEAR(b.scale(), 16.0 / 9.0, 1e-15);
  EXPECT_DOUBLE_EQ(b.dof(), 3.0);
}

TEST(MarginalLoglik, SingleComponentDegenerates) {
  const NIGComponent c(0.7, 2.3, 1.1);
  const MixtureEvidentialParams m(0.4, c);
  for (double y : {-3.0, 0.0, 0.4, 2.2}) {
    EXPECT_EQ(marginal_loglik(y, m), student_t_logpdf(y, component_marginal(c, 0.4)));
  }
}

TEST(MarginalLoglik, DuplicateComponentsCollapse) {
  const NIGComponent c(0.7, 2.3, 1.1);
  const MixtureEvidentialParams m(0.4, {c, c}, {0.3, 0.7});
  for (double y : {-3.0, 0.0, 0.4, 2.2}) {
    EXPECT_NEAR(marginal_loglik(y, m), student_t_logpdf(y, component_marginal(c, 0.4)), 1e-14);
  }
}

TEST(MarginalLoglik, StableForWidelySeparatedScales) {
  const MixtureEvidentialParams m(0.0, {NIGComponent(1.0, 2.0, 1e-6), NIGComponent(1.0, 2.0, 1e6)},
                                  {0.5, 0.5});
  for (double y : {0.0, 1.0, 1e3, 1e5}) {
    EXPECT_TRUE(std::isfinite(marginal_loglik(y, m))) << y;
  }
}

TEST(MarginalLoglik, ZeroWeightComponentIgnored) {
  const NIGComponent a(0.7, 2.3, 1.1);
  const NIGComponent b(5.0, 1.1, 40.0);
  const MixtureEvidentialParams m(0.0, {a, b}, {1.0, 0.0});
  EXPECT_EQ(marginal_loglik(1.5, m), marginal_loglik(1.5, MixtureEvidentialParams(0.0, a)));
}

TEST(MarginalLoglik, IntegratesToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    testing_support::ParamRanges r;
    r.alpha_lo = 1.5;  // keeps the 50-scale truncation error below 1e-4
    const auto m = testing_support::random_mixture(rng, 1 + trial % 3, r);
    double s = 0.0;
    for (const auto& c : m.components()) s = std::max(s, std::sqrt(component_marginal(c, 0.0).scale()));
    const double lo = m.gamma() - 50.0 * s;
    const double hi = m.gamma() + 50.0 * s;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double total = 0.5 * (std::exp(marginal_loglik(lo, m)) + std::exp(marginal_loglik(hi, m)));
    for (int j = 1; j < n; ++j) total += std::exp(marginal_loglik(lo + j * h, m));
    EXPECT_NEAR(total * h, 1.0, 1e-4) << "trial " << trial;
  }
}

TEST(MarginalLoglik, MonotoneInDistanceFromLocation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = testing_support::random_mixture(rng, 3);
    double prev = marginal_loglik(m.gamma(), m);
    for (double d = 0.05; d < 30.0; d += 0.05) {
      const double up = marginal_loglik(m.gamma() + d, m);
      const double down = marginal_loglik(m.gamma() - d, m);
      EXPECT_LE(up, prev + 1e-12);
      EXPECT_NEAR(up, down, 1e-12);
      prev = up;
    }
  }
}

TEST(Predict, ReturnsGammaExactly) {
  std::mt19937_64 rng(3);
  const NIGComponent c(1.0, 2.0, 1.0);
  EXPECT_EQ(predict(MixtureEvidentialParams(0.7, c)), 0.7);
  EXPECT_EQ(predict(MixtureEvidentialParams(0.0, c)), 0.0);
  std::vector<NIGComponent> comps;
  for (int k = 0; k < 5; ++k) comps.push_back(testing_support::random_component(rng));
  EXPECT_EQ(predict(MixtureEvidentialParams(-3.2, comps, testing_support::random_simplex(rng, 5))), -3.2);
}

TEST(Aleatoric, DirectFormula) {
  EXPECT_DOUBLE_EQ(aleatoric_per_component(NIGComponent(1.0, 2.0, 3.0)), 3.0);
  EXPECT_DOUBLE_EQ(aleatoric_per_component(NIGComponent(1.0, 1.5, 1.0)), 2.0);
}

TEST(Epistemic, HandValues) {
  EXPECT_DOUBLE_EQ(epistemic(MixtureEvidentialParams(0.0, NIGComponent(1.0, 2.0, 1.0))), 1.0);
  const NIGComponent c(2.0, 3.0, 2.0);
  EXPECT_DOUBLE_EQ(epistemic(MixtureEvidentialParams(0.0, {c, c}, {0.5, 0.5})), 0.5);
}

TEST(Uncertainty, StrictlyPositive) {
  std::mt19937_64 rng(4);
  testing_support::ParamRanges r;
  r.alpha_lo = 1.0 + 1e-6;
  r.nu_lo = 1e-6;
  r.beta_lo = 1e-6;
  r.alpha_hi = 1e3;
  r.nu_hi = 1e3;
  for (int i = 0; i < 1000; ++i) {
    const auto m = testing_support::random_mixture(rng, 1 + i % 4, r);
    EXPECT_GT(epistemic(m), 0.0);
    for (const auto& c : m.components()) EXPECT_GT(aleatoric_per_component(c), 0.0);
  }
}

TEST(NllComponent, IdentityWithStudentT) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const auto c = testing_support::random_component(rng);
    const double y = u(rng);
    const double g = u(rng);
    EXPECT_NEAR(nll_component(y, g, c) + student_t_logpdf(y, component_marginal(c, g)), 0.0, 1e-10);
  }
}

TEST(NllComponent, FrozenHandValue) {
  // 0.5 log(pi) - 1.5 log 2 + 2 log 2 + log(Gamma(1.5) / Gamma(2)), 30-digit evaluation.
  EXPECT_NEAR(nll_component(0.0, 0.0, NIGComponent(1.0, 1.5, 0.5)), 0.798156295569427519, 1e-13);
}

TEST(NllComponent, TranslationInvariant) {
  const NIGComponent c(0.8, 2.4, 1.3);
  EXPECT_NEAR(nll_component(1.7 + 5.0, -0.2 + 5.0, c), nll_component(1.7, -0.2, c), 1e-12);
}

TEST(NllComponent, MinimizedAtGamma) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = testing_support::random_component(rng);
    const double g = 0.3 * trial - 2.0;
    const double at = nll_component(g, g, c);
    for (double d = -20.0; d <= 20.0; d += 0.01) {
      EXPECT_GE(nll_component(g + d, g, c), at);
    }
  }
}

TEST(NllComponent, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const auto c = testing_support::random_component(rng);
    const double y = u(rng), g = u(rng);
    const auto grad = nll_component_grad(y, g, c.nu(), c.alpha(), c.beta());
    auto f = [&](double gg, double nu, double a, double b) { return nll_component(y, gg, NIGComponent(nu, a, b)); };
    EXPECT_NEAR(grad.value, f(g, c.nu(), c.alpha(), c.beta()), 1e-12);
    EXPECT_NEAR(grad.d_gamma, (f(g + h, c.nu(), c.alpha(), c.beta()) - f(g - h, c.nu(), c.alpha(), c.beta())) / (2 * h), 1e-6);
    EXPECT_NEAR(grad.d_nu, (f(g, c.nu() + h, c.alpha(), c.beta()) - f(g, c.nu() - h, c.alpha(), c.beta())) / (2 * h), 1e-6);
    EXPECT_NEAR(grad.d_alpha, (f(g, c.nu(), c.alpha() + h, c.beta()) - f(g, c.nu(), c.alpha() - h, c.beta())) / (2 * h), 1e-6);
    EXPECT_NEAR(grad.d_beta, (f(g, c.nu(), c.alpha(), c.beta() + h) - f(g, c.nu(), c.alpha(), c.beta() - h)) / (2 * h), 1e-6);
  }
}

TEST(WeightedNll, SingleComponentIsClassicLoss) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<std::vector<NIGComponent>> rows;
  std::vector<double> y, g;
  std::vector<classic_der::Nig> ref;
  for (int i = 0; i < 16; ++i) {
    const auto c = testing_support::random_component(rng);
    rows.push_back({c});
    y.push_back(u(rng));
    g.push_back(u(rng));
    ref.push_back({g.back(), c.nu(), c.alpha(), c.beta()});
  }
  const Responsibilities p(Eigen::MatrixXd::Ones(16, 1));
  EXPECT_NEAR(weighted_nll(y, g, batch_from(rows), p), classic_der::mean_nll(y, ref), 1e-10);
}

TEST(WeightedNll, ZeroResponsibilityComponentIsIgnored) {
  const NIGComponent a(1.0, 2.0, 1.0);
  const std::vector<double> y{0.3, -1.0}, g{0.0, 0.5};
  Eigen::MatrixXd pm(2, 2);
  pm << 1.0, 0.0, 1.0, 0.0;
  const Responsibilities p(pm);
  const double l1 = weighted_nll(y, g, batch_from({{a, NIGComponent(0.1, 1.1, 9.0)}, {a, NIGComponent(3.0, 7.0, 0.2)}}), p);
  const double l2 = weighted_nll(y, g, batch_from({{a, NIGComponent(8.0, 3.0, 0.5)}, {a, NIGComponent(0.4, 1.4, 4.0)}}), p);
  EXPECT_EQ(l1, l2);
}

TEST(WeightedNll, TwoByTwoHandExpansion) {
  const NIGComponent c11(1.0, 2.0, 1.0), c12(0.5, 3.0, 2.0), c21(2.0, 1.5, 0.5), c22(1.5, 2.5, 1.5);
  const std::vector<double> y{0.4, -1.2}, g{0.1, 0.3};
  Eigen::MatrixXd pm(2, 2);
  pm << 0.25, 0.75, 0.6, 0.4;
  const double expected = (0.25 * nll_component(0.4, 0.1, c11) + 0.75 * nll_component(0.4, 0.1, c12) +
                           0.6 * nll_component(-1.2, 0.3, c21) + 0.4 * nll_component(-1.2, 0.3, c22)) /
                          2.0;
  EXPECT_NEAR(weighted_nll(y, g, batch_from({{c11, c12}, {c21, c22}}), Responsibilities(pm)), expected, 1e-14);
}

TEST(WeightedNll, ShapeMismatchThrows) {
  const NIGComponent c(1.0, 2.0, 1.0);
  const std::vector<double> y{0.0, 1.0}, g{0.0};
  EXPECT_THROW(weighted_nll(y, g, batch_from({{c}, {c}}), Responsibilities(Eigen::MatrixXd::Ones(2, 1))),
               DimensionError);
  const std::vector<double> g2{0.0, 0.0};
  EXPECT_THROW(weighted_nll(y, g2, batch_from({{c}, {c}}), Responsibilities(Eigen::MatrixXd::Constant(2, 2, 0.5))),
               DimensionError);
  EXPECT_THROW(evidence_penalty(y, g, batch_from({{c}, {c}}), Responsibilities(Eigen::MatrixXd::Ones(2, 1))),
               DimensionError);
}

TEST(EvidencePenalty, HandValues) {
  const std::vector<double> y{2.0}, g{0.0};
  const Responsibilities p(Eigen::MatrixXd::Ones(1, 1));
  EXPECT_DOUBLE_EQ(evidence_penalty(y, g, batch_from({{NIGComponent(1.0, 2.0, 1.0)}}), p), 8.0);
  const double diff = evidence_penalty(y, g, batch_from({{NIGComponent(2.0, 2.0, 1.0)}}), p) -
                      evidence_penalty(y, g, batch_from({{NIGComponent(1.0, 2.0, 1.0)}}), p);
  EXPECT_DOUBLE_EQ(diff, 2.0 * 2.0 * 1.0);
  const std::vector<double> same{0.5, -0.25};
  EXPECT_EQ(evidence_penalty(same, same,
                             batch_from({{NIGComponent(1.0, 2.0, 1.0)}, {NIGComponent(3.0, 4.0, 2.0)}}),
                             Responsibilities(Eigen::MatrixXd::Ones(2, 1))),
            0.0);
}

TEST(TotalLoss, LambdaCombination) {
  const NIGComponent c11(1.0, 2.0, 1.0), c12(0.5, 3.0, 2.0), c21(2.0, 1.5, 0.5), c22(1.5, 2.5, 1.5);
  const std::vector<double> y{0.4, -1.2}, g{0.1, 0.3};
  Eigen::MatrixXd pm(2, 2);
  pm << 0.25, 0.75, 0.6, 0.4;
  const Responsibilities p(pm);
  const auto comps = batch_from({{c11, c12}, {c21, c22}});
  EXPECT_EQ(total_loss(y, g, comps, p, 0.0), weighted_nll(y, g, comps, p));
  EXPECT_NEAR(total_loss(y, g, comps, p, 1.0), weighted_nll(y, g, comps, p) + evidence_penalty(y, g, comps, p), 1e-15);
  EXPECT_THROW(total_loss(y, g, comps, p, -0.1), DomainError);
}

TEST(TotalLoss, SingleComponentMatchesClassicObjective) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<std::vector<NIGComponent>> rows;
  std::vector<double> y, g;
  std::vector<classic_der::Nig> ref;
  for (int i = 0; i < 32; ++i) {
    const auto c = testing_support::random_component(rng);
    rows.push_back({c});
    y.push_back(u(rng));
    g.push_back(u(rng));
    ref.push_back({g.back(), c.nu(), c.alpha(), c.beta()});
  }
  const Responsibilities p(Eigen::MatrixXd::Ones(32, 1));
  EXPECT_NEAR(total_loss(y, g, batch_from(rows), p, 0.01), classic_der::objective(y, ref, 0.01), 1e-10);
}

TEST(MixingEstimate, ColumnMeans) {
  Eigen::MatrixXd pm(2, 2);
  pm << 0.2, 0.8, 0.6, 0.4;
  const auto pi = mixing_estimate(Responsibilities(pm));
  EXPECT_NEAR(pi[0], 0.4, 1e-15);
  EXPECT_NEAR(pi[1], 0.6, 1e-15);

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(5, 3);
  onehot.col(0).setOnes();
  EXPECT_EQ(mixing_estimate(Responsibilities(onehot)), (std::vector<double>{1.0, 0.0, 0.0}));

  const auto uni = mixing_estimate(Responsibilities(Eigen::MatrixXd::Constant(7, 4, 0.25)));
  for (double v : uni) EXPECT_NEAR(v, 0.25, 1e-15);

  EXPECT_THROW(mixing_estimate(Responsibilities(Eigen::MatrixXd(0, 2))), DomainError);
}

TEST(Properties, ComponentPermutationInvariance) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 2 + trial % 4;
    const auto m = testing_support::random_mixture(rng, K);
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<NIGComponent> pc;
    std::vector<double> pw;
    for (auto j : perm) {
      pc.push_back(m.component(j));
      pw.push_back(m.weight(j));
    }
    const MixtureEvidentialParams mp(m.gamma(), pc, pw);
    const double y = u(rng);
    EXPECT_NEAR(marginal_loglik(y, m), marginal_loglik(y, mp), 1e-12);
    EXPECT_NEAR(epistemic(m), epistemic(mp), 1e-12);

    const int N = 6;
    std::vector<std::vector<NIGComponent>> rows, prow;
    Eigen::MatrixXd pm(N, K), ppm(N, K);
    std::vector<double> ys, gs;
    for (int i = 0; i < N; ++i) {
      std::vector<NIGComponent> r;
      for (std::size_t k = 0; k < K; ++k) r.push_back(testing_support::random_component(rng));
      const auto w = testing_support::random_simplex(rng, K);
      std::vector<NIGComponent> rp;
      for (std::size_t k = 0; k < K; ++k) {
        pm(i, k) = w[k];
        ppm(i, k) = w[perm[k]];
        rp.push_back(r[perm[k]]);
      }
      rows.push_back(r);
      prow.push_back(rp);
      ys.push_back(u(rng));
      gs.push_back(u(rng));
    }
    const auto a = batch_from(rows), b = batch_from(prow);
    const Responsibilities pa(pm), pb(ppm);
    EXPECT_NEAR(weighted_nll(ys, gs, a, pa), weighted_nll(ys, gs, b, pb), 1e-12);
    EXPECT_NEAR(evidence_penalty(ys, gs, a, pa), evidence_penalty(ys, gs, b, pb), 1e-12);
    EXPECT_NEAR(total_loss(ys, gs, a, pa, 0.1), total_loss(ys, gs, b, pb, 0.1), 1e-12);
  }
}
