#pragma once

// Closed-form math of the mixture evidential model: per-component
// Normal-Inverse-Gamma priors sharing one location, their Student-t
// marginals, the moments used for prediction and uncertainty, and the
// responsibility-weighted training losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "mogel/error.hpp"

namespace mogel {

/// Lower bound applied to nu and beta (and to alpha - 1) after activation.
inline constexpr double kEvidenceFloor = 1e-6;

/// Tolerance for the sum-to-one checks on weights and responsibility rows.
inline constexpr double kSimplexTolerance = 1e-9;

class NIGComponent {
 public:
  NIGComponent(double nu, double alpha, double beta) : nu_(nu), alpha_(alpha), beta_(beta) {
    if (!(std::isfinite(nu) && nu > 0.0)) {
      throw DomainError("NIGComponent: nu must be finite and > 0, got " + std::to_string(nu));
    }
    if (!(std::isfinite(alpha) && alpha > 1.0)) {
      throw DomainError("NIGComponent: alpha must be finite and > 1, got " + std::to_string(alpha));
    }
    if (!(std::isfinite(beta) && beta > 0.0)) {
      throw DomainError("NIGComponent: beta must be finite and > 0, got " + std::to_string(beta));
    }
  }

  double nu() const noexcept { return nu_; }
  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  /// Virtual-observation count 2*nu + alpha.
  double total_evidence() const noexcept { return 2.0 * nu_ + alpha_; }

 private:
  double nu_;
  double alpha_;
  double beta_;
};

/// Location-scale Student-t. `scale` is the squared scale; the density uses
/// its square root.
class StudentTParams {
 public:
  StudentTParams(double location, double scale, double dof)
      : location_(location), scale_(scale), dof_(dof) {
    if (!std::isfinite(location)) {
      throw DomainError("StudentTParams: location must be finite");
    }
    if (!(std::isfinite(scale) && scale > 0.0)) {
      throw DomainError("StudentTParams: scale must be finite and > 0, got " + std::to_string(scale));
    }
    if (!(std::isfinite(dof) && dof > 0.0)) {
      throw DomainError("StudentTParams: dof must be finite and > 0, got " + std::to_string(dof));
    }
  }

  double location() const noexcept { return location_; }
  double scale() const noexcept { return scale_; }
  double dof() const noexcept { return dof_; }

 private:
  double location_;
  double scale_;
  double dof_;
};

/// Hyperparameters of one sample's evidential mixture: a shared location
/// gamma, K NIG components and their mixing weights.
class MixtureEvidentialParams {
 public:
  MixtureEvidentialParams(double gamma, std::vector<NIGComponent> components,
                          std::vector<double> weights)
      : gamma_(gamma), components_(std::move(components)), weights_(std::move(weights)) {
    if (!std::isfinite(gamma_)) {
      throw DomainError("MixtureEvidentialParams: gamma must be finite");
    }
    if (components_.empty()) {
      throw DomainError("MixtureEvidentialParams: at least one component is required");
    }
    if (weights_.size() != components_.size()) {
      throw DomainError("MixtureEvidentialParams: " + std::to_string(weights_.size()) +
                        " weights for " + std::to_string(components_.size()) + " components");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(std::isfinite(w) && w >= 0.0)) {
        throw DomainError("MixtureEvidentialParams: weights must be finite and >= 0");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
      throw DomainError("MixtureEvidentialParams: weights sum to " + std::to_string(total));
    }
  }

  /// Single-component convenience constructor.
  MixtureEvidentialParams(double gamma, NIGComponent component)
      : MixtureEvidentialParams(gamma, std::vector<NIGComponent>{component}, std::vector<double>{1.0}) {}

  double gamma() const noexcept { return gamma_; }
  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<NIGComponent>& components() const noexcept { return components_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const NIGComponent& component(std::size_t k) const { return components_.at(k); }
  double weight(std::size_t k) const { return weights_.at(k); }

 private:
  double gamma_;
  std::vector<NIGComponent> components_;
  std::vector<double> weights_;
};

/// Row-stochastic N x K matrix of expected component indicators.
class Responsibilities {
 public:
  explicit Responsibilities(Eigen::MatrixXd p) : p_(std::move(p)) {
    if (p_.cols() < 1) {
      throw DomainError("Responsibilities: need at least one component column");
    }
    for (Eigen::Index i = 0; i < p_.rows(); ++i) {
      double row = 0.0;
      for (Eigen::Index k = 0; k < p_.cols(); ++k) {
        const double v = p_(i, k);
        if (!(std::isfinite(v) && v >= 0.0 && v <= 1.0)) {
          throw DomainError("Responsibilities: entry (" + std::to_string(i) + ", " +
                            std::to_string(k) + ") outside [0, 1]");
        }
        row += v;
      }
      if (std::abs(row - 1.0) > kSimplexTolerance) {
        throw DomainError("Responsibilities: row " + std::to_string(i) + " sums to " +
                          std::to_string(row));
      }
    }
  }

  Eigen::Index rows() const noexcept { return p_.rows(); }
  Eigen::Index cols() const noexcept { return p_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index k) const { return p_(i, k); }
  const Eigen::MatrixXd& matrix() const noexcept { return p_; }

 private:
  Eigen::MatrixXd p_;
};

/// Per-sample, per-component NIG hyperparameters (all N x K).
class ComponentBatch {
 public:
  ComponentBatch(Eigen::MatrixXd nu, Eigen::MatrixXd alpha, Eigen::MatrixXd beta)
      : nu_(std::move(nu)), alpha_(std::move(alpha)), beta_(std::move(beta)) {
    if (nu_.rows() != alpha_.rows() || nu_.rows() != beta_.rows() || nu_.cols() != alpha_.cols() ||
        nu_.cols() != beta_.cols()) {
      throw DimensionError("ComponentBatch: nu/alpha/beta shapes differ");
    }
    for (Eigen::Index i = 0; i < nu_.rows(); ++i) {
      for (Eigen::Index k = 0; k < nu_.cols(); ++k) {
        (void)NIGComponent(nu_(i, k), alpha_(i, k), beta_(i, k));
      }
    }
  }

  Eigen::Index rows() const noexcept { return nu_.rows(); }
  Eigen::Index cols() const noexcept { return nu_.cols(); }
  NIGComponent component(Eigen::Index i, Eigen::Index k) const {
    return NIGComponent(nu_(i, k), alpha_(i, k), beta_(i, k));
  }
  const Eigen::MatrixXd& nu() const noexcept { return nu_; }
  const Eigen::MatrixXd& alpha() const noexcept { return alpha_; }
  const Eigen::MatrixXd& beta() const noexcept { return beta_; }

 private:
  Eigen::MatrixXd nu_;
  Eigen::MatrixXd alpha_;
  Eigen::MatrixXd beta_;
};

// ---------------------------------------------------------------------------
// Densities

inline double student_t_logpdf(double y, const StudentTParams& p) {
  if (!std::isfinite(y)) {
    throw DomainError("student_t_logpdf: y must be finite");
  }
  const double d = p.dof();
  const double z2 = (y - p.location()) * (y - p.location()) / (d * p.scale());
  return std::lgamma(0.5 * (d + 1.0)) - std::lgamma(0.5 * d) -
         0.5 * std::log(d * std::numbers::pi * p.scale()) - 0.5 * (d + 1.0) * std::log1p(z2);
}

/// Student-t obtained by integrating N(y | mu, sigma^2) against the NIG prior.
inline StudentTParams component_marginal(const NIGComponent& c, double gamma) {
  return StudentTParams(gamma, c.beta() * (1.0 + c.nu()) / (c.nu() * c.alpha()), 2.0 * c.alpha());
}

inline double marginal_loglik(double y, const MixtureEvidentialParams& m) {
  const std::size_t K = m.size();
  std::vector<double> terms;
  terms.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double w = m.weight(k);
    if (w <= 0.0) {
      continue;
    }
    terms.push_back(std::log(w) + student_t_logpdf(y, component_marginal(m.component(k), m.gamma())));
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) {
    acc += std::exp(t - top);
  }
  return top + std::log(acc);
}

// ---------------------------------------------------------------------------
// Moments

inline double predict(const MixtureEvidentialParams& m) noexcept { return m.gamma(); }

/// E[sigma_k^2] = beta / (alpha - 1).
inline double aleatoric_per_component(const NIGComponent& c) {
  if (!(c.alpha() > 1.0)) {
    throw DomainError("aleatoric_per_component: alpha must be > 1");
  }
  return c.beta() / (c.alpha() - 1.0);
}

/// Var[mu] = sum_k pi_k beta_k / (nu_k (alpha_k - 1)).
inline double epistemic(const MixtureEvidentialParams& m) {
  double v = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const NIGComponent& c = m.component(k);
    v += m.weight(k) * aleatoric_per_component(c) / c.nu();
  }
  return v;
}

// ---------------------------------------------------------------------------
// Losses

/// Negative log Student-t marginal of one component, written in the
/// Omega = 2 beta (1 + nu), Psi = Gamma(alpha) / Gamma(alpha + 1/2) form.
inline double nll_component(double y, double gamma, const NIGComponent& c) {
  if (!std::isfinite(y) || !std::isfinite(gamma)) {
    throw DomainError("nll_component: y and gamma must be finite");
  }
  const double nu = c.nu();
  const double alpha = c.alpha();
  const double omega = 2.0 * c.beta() * (1.0 + nu);
  const double r = y - gamma;
  return 0.5 * std::log(std::numbers::pi / nu) - alpha * std::log(omega) +
         (alpha + 0.5) * std::log(r * r * nu + omega) + std::lgamma(alpha) - std::lgamma(alpha + 0.5);
}

/// Partial derivatives of nll_component with respect to its hyperparameters.
struct NllGradient {
  double value;
  double d_gamma;
  double d_nu;
  double d_alpha;
  double d_beta;
};

inline NllGradient nll_component_grad(double y, double gamma, double nu, double alpha, double beta) {
  const double r = y - gamma;
  const double omega = 2.0 * beta * (1.0 + nu);
  const double q = r * r * nu + omega;
  const double a_half = alpha + 0.5;
  NllGradient g{};
  g.value = 0.5 * std::log(std::numbers::pi / nu) - alpha * std::log(omega) + a_half * std::log(q) +
            std::lgamma(alpha) - std::lgamma(a_half);
  g.d_gamma = -2.0 * a_half * nu * r / q;
  g.d_nu = -0.5 / nu - alpha * 2.0 * beta / omega + a_half * (r * r + 2.0 * beta) / q;
  g.d_alpha = std::log(q) - std::log(omega) + boost::math::digamma(alpha) - boost::math::digamma(a_half);
  g.d_beta = -alpha / beta + a_half * 2.0 * (1.0 + nu) / q;
  return g;
}

namespace detail {

inline void check_batch_shapes(std::span<const double> y, std::span<const double> gamma,
                               const ComponentBatch& comps, const Responsibilities& p) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (static_cast<Eigen::Index>(gamma.size()) != n || comps.rows() != n || p.rows() != n) {
    throw DimensionError("batch size mismatch: y=" + std::to_string(y.size()) +
                         " gamma=" + std::to_string(gamma.size()) +
                         " components=" + std::to_string(comps.rows()) +
                         " responsibilities=" + std::to_string(p.rows()));
  }
  if (comps.cols() != p.cols()) {
    throw DimensionError("component count mismatch: components=" + std::to_string(comps.cols()) +
                         " responsibilities=" + std::to_string(p.cols()));
  }
  if (n == 0) {
    throw DimensionError("empty batch");
  }
}

}  // namespace detail

/// Mean over samples of sum_k p_ik * nll_component(y_i, gamma_i, c_ik).
inline double weighted_nll(std::span<const double> y, std::span<const double> gamma,
                           const ComponentBatch& comps, const Responsibilities& p) {
  detail::check_batch_shapes(y, gamma, comps, p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < comps.rows(); ++i) {
    for (Eigen::Index k = 0; k < comps.cols(); ++k) {
      if (p(i, k) == 0.0) {
        continue;
      }
      total += p(i, k) * nll_component(y[i], gamma[i], comps.component(i, k));
    }
  }
  return total / static_cast<double>(y.size());
}

/// Mean over samples of sum_k p_ik |y_i - gamma_i| (2 nu_ik + alpha_ik).
inline double evidence_penalty(std::span<const double> y, std::span<const double> gamma,
                               const ComponentBatch& comps, const Responsibilities& p) {
  detail::check_batch_shapes(y, gamma, comps, p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < comps.rows(); ++i) {
    const double abs_r = std::abs(y[i] - gamma[i]);
    for (Eigen::Index k = 0; k < comps.cols(); ++k) {
      total += p(i, k) * abs_r * (2.0 * comps.nu()(i, k) + comps.alpha()(i, k));
    }
  }
  return total / static_cast<double>(y.size());
}

inline double total_loss(std::span<const double> y, std::span<const double> gamma,
                         const ComponentBatch& comps, const Responsibilities& p, double lambda) {
  if (!(lambda >= 0.0)) {
    throw DomainError("total_loss: lambda must be >= 0");
  }
  return weighted_nll(y, gamma, comps, p) + lambda * evidence_penalty(y, gamma, comps, p);
}

/// Column means of the responsibilities.
inline std::vector<double> mixing_estimate(const Responsibilities& p) {
  if (p.rows() == 0) {
    throw DomainError("mixing_estimate: no samples");
  }
  const Eigen::VectorXd means = p.matrix().colwise().mean().transpose();
  std::vector<double> out(means.data(), means.data() + means.size());
  // Renormalize away the accumulated rounding so the output is a simplex.
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

}  // namespace mogel
