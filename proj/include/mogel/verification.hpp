#pragma once

// Self-checks run by `mogel verify`: closed forms against the quadrature and
// Monte-Carlo oracles, the per-component loss against the Student-t log
// density, finite-difference gradients and the responsibility invariants.
//
// `perturb_loss` adds a constant to every per-component loss value used by the
// checks. It exists to show that the suite notices a wrong loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "mogel/error.hpp"
#include "mogel/evidential_core.hpp"
#include "mogel/network.hpp"
#include "mogel/reference_oracle.hpp"

namespace mogel::verification {

struct Options {
  std::uint64_t seed = 1;
  double perturb_loss = 0.0;
  int marginal_sets = 30;
  double marginal_tolerance = 1e-5;  // relative
  int moment_sets = 30;
  std::int64_t mc_samples = 1'000'000;
  double moment_se = 3.0;
  // When true the per-comparison bound is widened (Bonferroni) so that the
  // chance of any false alarm over all comparisons equals that of a single
  // comparison at `moment_se`.
  bool family_wise = true;
  int identity_inputs = 1000;
  double identity_tolerance = 1e-10;
  int gradient_configs = 10;
  int gradient_weights = 200;  // spread over the configurations
  double gradient_tolerance = 1e-4;
  int invariant_trials = 100;
  double invariant_tolerance = 1e-9;
};

struct CheckResult {
  std::string name;
  double statistic = 0.0;  // worst observed value of the compared quantity
  double tolerance = 0.0;
  int cases = 0;
  int failures = 0;
  std::string detail;

  bool passed() const { return failures == 0; }
};

/// Samples valid NIG parameters. `alpha_lo` > 2 keeps the sigma^2 variance
/// finite so Monte-Carlo standard errors mean something.
inline MixtureEvidentialParams random_mixture(std::mt19937_64& rng, std::size_t k, double alpha_lo = 1.2) {
  std::uniform_real_distribution<double> nu(0.2, 5.0), alpha(alpha_lo, 6.0), beta(0.2, 3.0), gamma(-3.0, 3.0);
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<NIGComponent> comps;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double n = nu(rng), a = alpha(rng), b = beta(rng);
    comps.emplace_back(n, a, b);
    w.push_back(g(rng) + 1e-3);
    total += w.back();
  }
  for (double& v : w) v /= total;
  return MixtureEvidentialParams(gamma(rng), std::move(comps), std::move(w));
}

/// log p(y) assembled from the per-component loss expansion (plus bias).
inline double loglik_from_loss(double y, const MixtureEvidentialParams& m, double bias) {
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.weight(k) <= 0.0) continue;
    const NIGComponent& c = m.component(k);
    terms.push_back(std::log(m.weight(k)) - (nll_component(y, m.gamma(), c) + bias));
    mx = std::max(mx, terms.back());
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

inline CheckResult check_marginal_likelihood(const Options& o) {
  CheckResult r{"marginal_likelihood", 0.0, o.marginal_tolerance, 0, 0, ""};
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> k_of(1, 3);
  std::normal_distribution<double> offset(0.0, 2.0);
  for (int s = 0; s < o.marginal_sets; ++s) {
    const auto m = random_mixture(rng, static_cast<std::size_t>(k_of(rng)));
    const double y = m.gamma() + offset(rng);
    const double oracle = oracle::quad_marginal(y, m);
    const double closed = std::exp(loglik_from_loss(y, m, o.perturb_loss));
    const double err = std::abs(closed - oracle) / oracle;
    r.statistic = std::max(r.statistic, err);
    ++r.cases;
    if (!(err < o.marginal_tolerance)) ++r.failures;
  }
  r.detail = "max relative error, closed form vs double quadrature";
  return r;
}

/// Two-sided z bound with the same false-alarm probability over `n`
/// comparisons as a single comparison at `z`.
inline double bonferroni_z(double z, int n) {
  const boost::math::normal std_normal;
  const double tail = 2.0 * boost::math::cdf(boost::math::complement(std_normal, z));
  return boost::math::quantile(boost::math::complement(std_normal, tail / (2.0 * std::max(n, 1))));
}

inline CheckResult check_moments(const Options& o) {
  CheckResult r{"moments", 0.0, o.moment_se, 0, 0, ""};
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_int_distribution<int> k_of(1, 3);
  std::vector<double> z;
  for (int s = 0; s < o.moment_sets; ++s) {
    const auto m = random_mixture(rng, static_cast<std::size_t>(k_of(rng)), 2.5);
    const auto est = oracle::mc_moments(m, o.mc_samples, rng());
    z.push_back(std::abs(est.mean_mu - predict(m)) / est.se_mean_mu);
    z.push_back(std::abs(est.var_mu - epistemic(m)) / est.se_var_mu);
    for (std::size_t k = 0; k < m.size(); ++k) {
      z.push_back(std::abs(est.mean_sigma2[k] - aleatoric_per_component(m.component(k))) / est.se_mean_sigma2[k]);
    }
  }
  r.cases = static_cast<int>(z.size());
  if (o.family_wise) r.tolerance = bonferroni_z(o.moment_se, r.cases);
  int beyond_nominal = 0;
  for (double v : z) {
    r.statistic = std::max(r.statistic, v);
    if (!(v <= r.tolerance)) ++r.failures;
    if (!(v <= o.moment_se)) ++beyond_nominal;
  }
  r.detail = "max |MC - closed form| in standard errors (prediction, epistemic, aleatoric); " +
             std::to_string(beyond_nominal) + " beyond " + std::to_string(o.moment_se).substr(0, 4) + " SE";
  return r;
}

inline CheckResult check_loss_identity(const Options& o) {
  CheckResult r{"loss_identity", 0.0, o.identity_tolerance, 0, 0, ""};
  std::mt19937_64 rng(o.seed + 2);
  std::normal_distribution<double> offset(0.0, 2.0);
  for (int s = 0; s < o.identity_inputs; ++s) {
    const auto m = random_mixture(rng, 1);
    const NIGComponent& c = m.component(0);
    const double y = m.gamma() + offset(rng);
    const double loss = nll_component(y, m.gamma(), c) + o.perturb_loss;
    const double ref = -student_t_logpdf(y, component_marginal(c, m.gamma()));
    const double err = std::abs(loss - ref) / std::max(1.0, std::abs(ref));
    r.statistic = std::max(r.statistic, err);
    ++r.cases;
    if (!(err <= o.identity_tolerance)) ++r.failures;
  }
  r.detail = "max error, per-component loss vs -log Student-t";
  return r;
}

inline CheckResult check_gradients(const Options& o) {
  CheckResult r{"gradients", 0.0, o.gradient_tolerance, 0, 0, ""};
  std::mt19937_64 rng(o.seed + 3);
  std::uniform_int_distribution<int> dim(1, 3), width(3, 8), depth(1, 2), k_of(1, 3), rows(4, 12);
  std::normal_distribution<double> n01;
  const double h = 1e-5;
  const int per_config = std::max(1, o.gradient_weights / std::max(1, o.gradient_configs));
  for (int c = 0; c < o.gradient_configs; ++c) {
    NetworkSpec spec;
    spec.input_dim = dim(rng);
    spec.hidden_layers.assign(static_cast<std::size_t>(depth(rng)), 0);
    for (int& w : spec.hidden_layers) w = width(rng);
    spec.activation = c % 2 ? Activation::tanh : Activation::relu;
    spec.n_components = k_of(rng);
    NetworkWeights w = init_weights(spec, rng());
    // Nonzero biases: with all-zero biases a dead ReLU row puts the next
    // pre-activation exactly on the kink, where no gradient matches a
    // central difference.
    Eigen::VectorXd theta = w.flatten();
    Eigen::Index at = 0;
    w.for_each_layer([&](const std::string&, const DenseLayer& l) {
      at += l.weight.size();
      for (Eigen::Index j = 0; j < l.bias.size(); ++j) theta(at + j) = 0.1 * n01(rng);
      at += l.bias.size();
    });
    w.assign(theta);
    const Eigen::Index n = rows(rng);
    Eigen::MatrixXd x(n, spec.input_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (double& v : y) v = n01(rng);
    const double lambda = 0.05 * (c + 1);

    const Eigen::VectorXd analytic = loss_and_grad(w, x, y, lambda).grad.flatten();
    NetworkWeights probe = w;
    std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
    for (int s = 0; s < per_config; ++s) {
      const Eigen::Index idx = pick(rng);
      const double saved = theta(idx);
      theta(idx) = saved + h;
      probe.assign(theta);
      const double up = evaluate_loss(probe, x, y, lambda);
      theta(idx) = saved - h;
      probe.assign(theta);
      const double down = evaluate_loss(probe, x, y, lambda);
      theta(idx) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic(idx) - numeric) / std::max({std::abs(analytic(idx)), std::abs(numeric), 1e-6});
      r.statistic = std::max(r.statistic, err);
      ++r.cases;
      if (!(err < o.gradient_tolerance)) ++r.failures;
    }
  }
  r.detail = "max relative error, analytic vs central difference";
  return r;
}

inline CheckResult check_responsibilities(const Options& o) {
  CheckResult r{"responsibilities", 0.0, o.invariant_tolerance, 0, 0, ""};
  std::mt19937_64 rng(o.seed + 4);
  std::uniform_int_distribution<int> k_of(1, 6);
  std::normal_distribution<double> n01;
  for (int t = 0; t < o.invariant_trials; ++t) {
    NetworkSpec spec;
    spec.input_dim = 2;
    spec.hidden_layers = {6};
    spec.n_components = k_of(rng);
    NetworkWeights w = init_weights(spec, rng());
    Eigen::VectorXd theta = w.flatten();
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) *= 1.0 + 5.0 * std::abs(n01(rng));
    w.assign(theta);
    Eigen::MatrixXd x(16, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * n01(rng);
    const EvidentialOutput out = forward(w, x);
    const double row_err = (out.p.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const auto pi = mixing_estimate(out.responsibilities());
    double pi_sum = 0.0;
    for (double v : pi) pi_sum += v;
    const double err = std::max(row_err, std::abs(pi_sum - 1.0));
    r.statistic = std::max(r.statistic, err);
    ++r.cases;
    if (!(err <= o.invariant_tolerance)) ++r.failures;
  }
  r.detail = "max |row sum - 1| of responsibilities and mixing estimate";
  return r;
}

/// Runs every check in a fixed order. `on_check` sees each result as it
/// finishes.
inline std::vector<CheckResult> run_all(const Options& o,
                                        const std::function<void(const CheckResult&)>& on_check = {}) {
  std::vector<CheckResult> out;
  for (auto fn : {check_marginal_likelihood, check_moments, check_loss_identity, check_gradients,
                  check_responsibilities}) {
    out.push_back(fn(o));
    if (on_check) on_check(out.back());
  }
  return out;
}

}  // namespace mogel::verification
