#pragma once

// Brute-force reference values for the closed-form model: double quadrature
// of likelihood x prior over (mu, sigma^2) and Monte-Carlo moments of the
// mixture-weighted NIG joint. Nothing here calls the Student-t path in
// evidential_core.hpp; it only consumes the parameter types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mogel/error.hpp"
#include "mogel/evidential_core.hpp"

namespace mogel::oracle {

/// Integration box and resolution. sigma2 is integrated on a log scale.
struct QuadratureSpec {
  std::pair<double, double> mu_range;
  std::pair<double, double> sigma2_range;
  int mu_points = 128;
  int sigma2_points = 512;

  void validate() const {
    if (!(mu_range.first < mu_range.second) || !std::isfinite(mu_range.first) ||
        !std::isfinite(mu_range.second)) {
      throw DomainError("QuadratureSpec: empty or non-finite mu range");
    }
    if (!(sigma2_range.first > 0.0 && sigma2_range.first < sigma2_range.second) ||
        !std::isfinite(sigma2_range.second)) {
      throw DomainError("QuadratureSpec: sigma2 range must satisfy 0 < lo < hi < inf");
    }
    if (mu_points < 64 || sigma2_points < 64) {
      throw DomainError("QuadratureSpec: at least 64 points per axis are required");
    }
  }
};

/// Minimum prior mass the box must hold.
inline constexpr double kRequiredPriorMass = 1.0 - 1e-4;

/// Tail probability cut from each side of the inverse-gamma prior.
inline constexpr double kSigma2TailMass = 1e-12;

namespace detail {

using Rule = boost::math::quadrature::gauss<double, 16>;

/// Composite 16-point Gauss-Legendre on [lo, hi] with at least `points` nodes.
template <class F>
double composite_gauss(F&& f, double lo, double hi, int points) {
  const int panels = std::max(1, (points + 15) / 16);
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int j = 0; j < panels; ++j) {
    const double a = lo + j * width;
    const double half = 0.5 * width;
    const double mid = a + half;
    double panel = 0.0;
    const auto& x = Rule::abscissa();
    const auto& w = Rule::weights();
    for (std::size_t n = 0; n < x.size(); ++n) {
      if (x[n] == 0.0) {
        panel += w[n] * f(mid);
      } else {
        panel += w[n] * (f(mid - half * x[n]) + f(mid + half * x[n]));
      }
    }
    total += half * panel;
  }
  return total;
}

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double inverse_gamma_logpdf(double s2, double alpha, double beta) {
  return alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * std::log(s2) - beta / s2;
}

/// Integrates g(sigma2) * inner(sigma2) over the log-sigma2 axis.
template <class Inner>
double integrate_prior(const NIGComponent& c, const QuadratureSpec& q, Inner&& inner) {
  const double t_lo = std::log(q.sigma2_range.first);
  const double t_hi = std::log(q.sigma2_range.second);
  auto outer = [&](double t) {
    const double s2 = std::exp(t);
    const double prior = std::exp(inverse_gamma_logpdf(s2, c.alpha(), c.beta()));
    if (prior == 0.0) {
      return 0.0;
    }
    return prior * s2 * inner(s2);
  };
  return composite_gauss(outer, t_lo, t_hi, q.sigma2_points);
}

/// mu window for one sigma2 node: both the prior N(gamma, s2/nu) and the
/// likelihood N(y | ., s2) bulks, clipped to the box.
inline std::pair<double, double> mu_window(double gamma, double y, double s2, double nu,
                                           const QuadratureSpec& q) {
  const double prior_sd = std::sqrt(s2 / nu);
  const double lik_sd = std::sqrt(s2);
  const double lo = std::min(gamma - 12.0 * prior_sd, y - 12.0 * lik_sd);
  const double hi = std::max(gamma + 12.0 * prior_sd, y + 12.0 * lik_sd);
  return {std::max(lo, q.mu_range.first), std::min(hi, q.mu_range.second)};
}

}  // namespace detail

/// Mass of NIG(gamma, c) inside the box.
inline double prior_mass(const NIGComponent& c, double gamma, const QuadratureSpec& q) {
  q.validate();
  return detail::integrate_prior(c, q, [&](double s2) {
    const auto [lo, hi] = detail::mu_window(gamma, gamma, s2, c.nu(), q);
    if (!(lo < hi)) {
      return 0.0;
    }
    const double var = s2 / c.nu();
    return detail::composite_gauss([&](double mu) { return detail::normal_pdf(mu, gamma, var); }, lo,
                                   hi, q.mu_points);
  });
}

/// Box with sigma2 between extreme inverse-gamma quantiles of every component
/// (stretched upward for targets far from gamma) and mu wide enough for both
/// the prior and the likelihood at `y`.
inline QuadratureSpec adaptive_quadrature(const MixtureEvidentialParams& m, double y) {
  double s2_lo = std::numeric_limits<double>::infinity();
  double s2_hi = 0.0;
  double nu_min = std::numeric_limits<double>::infinity();
  const double r2 = (y - m.gamma()) * (y - m.gamma());
  for (const NIGComponent& c : m.components()) {
    // X ~ IG(alpha, beta)  <=>  1/X ~ Gamma(alpha, rate beta).
    const double lo = c.beta() / boost::math::gamma_q_inv(c.alpha(), kSigma2TailMass);
    double hi = c.beta() / boost::math::gamma_p_inv(c.alpha(), kSigma2TailMass);
    hi *= 1.0 + r2 * c.nu() / c.beta();
    s2_lo = std::min(s2_lo, lo);
    s2_hi = std::max(s2_hi, hi);
    nu_min = std::min(nu_min, c.nu());
  }
  const double half_width = 12.0 * std::sqrt(s2_hi / std::min(nu_min, 1.0));
  QuadratureSpec q;
  q.mu_range = {std::min(m.gamma(), y) - half_width, std::max(m.gamma(), y) + half_width};
  q.sigma2_range = {s2_lo, s2_hi};
  return q;
}

/// Quadrature estimate of p(y | m) = sum_k pi_k int int N(y | mu, s2) NIG(mu, s2) dmu ds2.
inline double quad_marginal(double y, const MixtureEvidentialParams& m, const QuadratureSpec& q) {
  q.validate();
  if (!std::isfinite(y)) {
    throw DomainError("quad_marginal: y must be finite");
  }
  const double gamma = m.gamma();
  double total = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const NIGComponent& c = m.component(k);
    const double mass = prior_mass(c, gamma, q);
    if (mass < kRequiredPriorMass) {
      throw CoverageError(mass, "quad_marginal: box holds prior mass " + std::to_string(mass) +
                                    " for component " + std::to_string(k));
    }
    if (m.weight(k) == 0.0) {
      continue;
    }
    const double lik = detail::integrate_prior(c, q, [&](double s2) {
      const auto [lo, hi] = detail::mu_window(gamma, y, s2, c.nu(), q);
      if (!(lo < hi)) {
        return 0.0;
      }
      const double prior_var = s2 / c.nu();
      return detail::composite_gauss(
          [&](double mu) { return detail::normal_pdf(y, mu, s2) * detail::normal_pdf(mu, gamma, prior_var); },
          lo, hi, q.mu_points);
    });
    total += m.weight(k) * lik;
  }
  return total;
}

inline double quad_marginal(double y, const MixtureEvidentialParams& m) {
  return quad_marginal(y, m, adaptive_quadrature(m, y));
}

/// E[sigma^2] under IG(alpha, beta) by 1-D quadrature on the log axis.
inline double quad_inverse_gamma_mean(double alpha, double beta) {
  const double lo = beta / boost::math::gamma_q_inv(alpha, kSigma2TailMass);
  const double hi = beta / boost::math::gamma_p_inv(alpha, kSigma2TailMass);
  // The mean integrand s2 * p(s2) decays only like s2^-alpha; use the full
  // tail bound for alpha near 1.
  const double upper = std::max(hi, beta * std::pow(1e16, 1.0 / (alpha - 1.0 + 1e-300)));
  const double t_lo = std::log(lo);
  const double t_hi = std::log(std::min(upper, 1e300));
  return detail::composite_gauss(
      [&](double t) {
        const double s2 = std::exp(t);
        return std::exp(detail::inverse_gamma_logpdf(s2, alpha, beta) + 2.0 * t);
      },
      t_lo, t_hi, 4096);
}

struct MomentEstimate {
  double mean_mu = 0.0;
  double se_mean_mu = 0.0;
  double var_mu = 0.0;
  double se_var_mu = 0.0;
  std::vector<double> mean_sigma2;
  std::vector<double> se_mean_sigma2;
  std::vector<std::int64_t> component_counts;
  std::int64_t n_samples = 0;
};

/// Monte-Carlo moments: k ~ Categorical(pi), sigma2 = 1 / Gamma(alpha_k, rate beta_k),
/// mu ~ N(gamma, sigma2 / nu_k).
inline MomentEstimate mc_moments(const MixtureEvidentialParams& m, std::int64_t n_samples,
                                 std::uint64_t seed) {
  if (n_samples < 100000) {
    throw DomainError("mc_moments: need at least 1e5 samples, got " + std::to_string(n_samples));
  }
  const std::size_t K = m.size();
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(m.weights().begin(), m.weights().end());
  std::vector<std::gamma_distribution<double>> precision;
  precision.reserve(K);
  for (const NIGComponent& c : m.components()) {
    precision.emplace_back(c.alpha(), 1.0 / c.beta());
  }
  std::normal_distribution<double> standard(0.0, 1.0);

  // Shifted sums around gamma keep the variance accumulation well conditioned.
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  std::vector<double> sig_sum(K, 0.0), sig_sq(K, 0.0);
  std::vector<std::int64_t> counts(K, 0);
  for (std::int64_t n = 0; n < n_samples; ++n) {
    const std::size_t k = pick(rng);
    const double sigma2 = 1.0 / precision[k](rng);
    const double d = std::sqrt(sigma2 / m.component(k).nu()) * standard(rng);
    const double d2 = d * d;
    s1 += d;
    s2 += d2;
    s3 += d2 * d;
    s4 += d2 * d2;
    sig_sum[k] += sigma2;
    sig_sq[k] += sigma2 * sigma2;
    ++counts[k];
  }

  const double N = static_cast<double>(n_samples);
  MomentEstimate out;
  out.n_samples = n_samples;
  const double m1 = s1 / N;
  const double m2 = s2 / N;
  const double m3 = s3 / N;
  const double m4 = s4 / N;
  out.mean_mu = m.gamma() + m1;
  const double var = m2 - m1 * m1;
  out.se_mean_mu = std::sqrt(var / N);
  out.var_mu = var * N / (N - 1.0);
  // Fourth central moment from raw moments about gamma.
  const double c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
  out.se_var_mu = std::sqrt(std::max(c4 - var * var, 0.0) / N);
  out.mean_sigma2.resize(K);
  out.se_mean_sigma2.resize(K);
  out.component_counts = counts;
  for (std::size_t k = 0; k < K; ++k) {
    const double nk = static_cast<double>(counts[k]);
    if (counts[k] < 2) {
      out.mean_sigma2[k] = std::numeric_limits<double>::quiet_NaN();
      out.se_mean_sigma2[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = sig_sum[k] / nk;
    const double v = std::max(sig_sq[k] / nk - mean * mean, 0.0);
    out.mean_sigma2[k] = mean;
    out.se_mean_sigma2[k] = std::sqrt(v / nk);
  }
  return out;
}

}  // namespace mogel::oracle
