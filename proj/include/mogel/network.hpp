#pragma once

// Fully-connected regressor with five evidential heads (gamma, nu, alpha,
// beta and responsibility logits) and a hand-written reverse pass for the
// responsibility-weighted evidential loss.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mogel/error.hpp"
#include "mogel/evidential_core.hpp"

namespace mogel {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_layers{64, 64};
  Activation activation = Activation::relu;
  int n_components = 1;

  void validate() const {
    if (input_dim < 1) throw ConfigError("NetworkSpec: input_dim must be >= 1");
    if (n_components < 1) throw ConfigError("NetworkSpec: n_components must be >= 1");
    for (int h : hidden_layers) {
      if (h < 1) throw ConfigError("NetworkSpec: hidden layer widths must be >= 1");
    }
  }

  int trunk_output_dim() const { return hidden_layers.empty() ? input_dim : hidden_layers.back(); }

  bool operator==(const NetworkSpec&) const = default;
};

/// y = x W + b with x laid out one sample per row.
struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::RowVectorXd bias;  // fan_out

  DenseLayer() = default;
  DenseLayer(Eigen::Index fan_in, Eigen::Index fan_out)
      : weight(Eigen::MatrixXd::Zero(fan_in, fan_out)), bias(Eigen::RowVectorXd::Zero(fan_out)) {}

  Eigen::Index size() const { return weight.size() + bias.size(); }
};

/// Names of the five output heads, in declared order.
inline const std::vector<std::string>& head_names() {
  static const std::vector<std::string> names{"gamma", "nu", "alpha", "beta", "responsibility"};
  return names;
}

/// All parameters. Declared order: trunk layers (weight then bias), then the
/// gamma, nu, alpha, beta and responsibility heads. The same layout serves
/// as the gradient container.
struct NetworkWeights {
  NetworkSpec spec;
  std::vector<DenseLayer> trunk;
  DenseLayer gamma_head;
  DenseLayer nu_head;
  DenseLayer alpha_head;
  DenseLayer beta_head;
  DenseLayer responsibility_head;

  /// Zero-initialized parameters of the right shapes.
  explicit NetworkWeights(NetworkSpec s = {}) : spec(std::move(s)) {
    spec.validate();
    int fan_in = spec.input_dim;
    for (int h : spec.hidden_layers) {
      trunk.emplace_back(fan_in, h);
      fan_in = h;
    }
    const int K = spec.n_components;
    gamma_head = DenseLayer(fan_in, 1);
    nu_head = DenseLayer(fan_in, K);
    alpha_head = DenseLayer(fan_in, K);
    beta_head = DenseLayer(fan_in, K);
    responsibility_head = DenseLayer(fan_in, K);
  }

  template <class F>
  void for_each_layer(F&& f) {
    for (std::size_t l = 0; l < trunk.size(); ++l) f("trunk." + std::to_string(l), trunk[l]);
    f("gamma", gamma_head);
    f("nu", nu_head);
    f("alpha", alpha_head);
    f("beta", beta_head);
    f("responsibility", responsibility_head);
  }

  template <class F>
  void for_each_layer(F&& f) const {
    const_cast<NetworkWeights*>(this)->for_each_layer(
        [&](const std::string& name, DenseLayer& layer) { f(name, static_cast<const DenseLayer&>(layer)); });
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for_each_layer([&](const std::string&, const DenseLayer& l) { n += l.size(); });
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(parameter_count());
    Eigen::Index at = 0;
    for_each_layer([&](const std::string&, const DenseLayer& l) {
      out.segment(at, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
      at += l.weight.size();
      out.segment(at, l.bias.size()) = l.bias.transpose();
      at += l.bias.size();
    });
    return out;
  }

  void assign(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) {
      throw DimensionError("NetworkWeights::assign: expected " + std::to_string(parameter_count()) +
                           " values, got " + std::to_string(flat.size()));
    }
    Eigen::Index at = 0;
    for_each_layer([&](const std::string&, DenseLayer& l) {
      Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = flat.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = flat.segment(at, l.bias.size()).transpose();
      at += l.bias.size();
    });
  }

  /// Layer name owning flat index `index`.
  std::string layer_of(Eigen::Index index) const {
    std::string found;
    Eigen::Index at = 0;
    for_each_layer([&](const std::string& name, const DenseLayer& l) {
      if (found.empty() && index < at + l.size()) found = name;
      at += l.size();
    });
    return found;
  }

  bool all_finite() const { return flatten().allFinite(); }
};

/// Glorot-uniform weights, zero biases.
inline NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkWeights w(spec);
  std::mt19937_64 rng(seed);
  w.for_each_layer([&](const std::string&, DenseLayer& l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = u(rng);
    }
  });
  return w;
}

namespace detail {

inline double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

inline double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace detail

/// Per-sample evidential hyperparameters produced by the heads.
struct EvidentialOutput {
  Eigen::VectorXd gamma;   // N
  Eigen::MatrixXd nu;      // N x K
  Eigen::MatrixXd alpha;   // N x K
  Eigen::MatrixXd beta;    // N x K
  Eigen::MatrixXd p;       // N x K, row-stochastic

  Eigen::Index rows() const { return gamma.size(); }
  Eigen::Index components() const { return p.cols(); }

  ComponentBatch component_batch() const { return ComponentBatch(nu, alpha, beta); }
  Responsibilities responsibilities() const { return Responsibilities(p); }

  /// Mixture for sample i, weighted by its responsibilities.
  MixtureEvidentialParams sample(Eigen::Index i) const {
    std::vector<NIGComponent> comps;
    std::vector<double> weights;
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      comps.emplace_back(nu(i, k), alpha(i, k), beta(i, k));
      weights.push_back(p(i, k));
    }
    return MixtureEvidentialParams(gamma(i), std::move(comps), std::move(weights));
  }
};

/// Intermediate values kept for the reverse pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // trunk pre-activations
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l + 1] = act(pre[l])
  Eigen::MatrixXd raw_nu, raw_alpha, raw_beta, logits;
  EvidentialOutput out;
};

inline ForwardCache forward_cached(const NetworkWeights& w, const Eigen::MatrixXd& x) {
  if (x.cols() != w.spec.input_dim) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) + " features, network expects " +
                         std::to_string(w.spec.input_dim));
  }
  if (!x.allFinite()) {
    throw DomainError("forward: non-finite input features");
  }
  ForwardCache c;
  c.post.push_back(x);
  for (const DenseLayer& layer : w.trunk) {
    Eigen::MatrixXd z = c.post.back() * layer.weight;
    z.rowwise() += layer.bias;
    Eigen::MatrixXd h = w.spec.activation == Activation::relu ? Eigen::MatrixXd(z.cwiseMax(0.0))
                                                              : Eigen::MatrixXd(z.array().tanh().matrix());
    c.pre.push_back(std::move(z));
    c.post.push_back(std::move(h));
  }
  const Eigen::MatrixXd& h = c.post.back();
  auto affine = [&](const DenseLayer& l) {
    Eigen::MatrixXd z = h * l.weight;
    z.rowwise() += l.bias;
    return z;
  };
  c.out.gamma = affine(w.gamma_head).col(0);
  c.raw_nu = affine(w.nu_head);
  c.raw_alpha = affine(w.alpha_head);
  c.raw_beta = affine(w.beta_head);
  c.logits = affine(w.responsibility_head);

  c.out.nu = c.raw_nu.unaryExpr([](double u) { return detail::softplus(u) + kEvidenceFloor; });
  c.out.alpha = c.raw_alpha.unaryExpr([](double u) { return detail::softplus(u) + 1.0 + kEvidenceFloor; });
  c.out.beta = c.raw_beta.unaryExpr([](double u) { return detail::softplus(u) + kEvidenceFloor; });

  const Eigen::VectorXd row_max = c.logits.rowwise().maxCoeff();
  Eigen::MatrixXd e = (c.logits.colwise() - row_max).array().exp().matrix();
  const Eigen::VectorXd row_sum = e.rowwise().sum();
  c.out.p = e.array().colwise() / row_sum.array();
  return c;
}

inline EvidentialOutput forward(const NetworkWeights& w, const Eigen::MatrixXd& x) {
  return forward_cached(w, x).out;
}

/// How the responsibility head enters the loss.
enum class ResponsibilityMode {
  /// p_ik from the head weights the loss and receives its gradient.
  joint,
  /// Classic EM: the loss is weighted by the posterior q_ik proportional to
  /// p_ik St_k(y_i), held constant; the head is fitted to q by cross-entropy.
  frozen_posterior,
};

struct LossAndGrad {
  double loss = 0.0;
  double nll = 0.0;
  double penalty = 0.0;
  NetworkWeights grad;
};

namespace detail {

inline void check_outputs_finite(const EvidentialOutput& out) {
  if (!out.gamma.allFinite()) throw NumericError("gamma", "non-finite gamma head output");
  if (!out.nu.allFinite()) throw NumericError("nu", "non-finite nu head output");
  if (!out.alpha.allFinite()) throw NumericError("alpha", "non-finite alpha head output");
  if (!out.beta.allFinite()) throw NumericError("beta", "non-finite beta head output");
  if (!out.p.allFinite()) throw NumericError("responsibility", "non-finite responsibility head output");
}

/// Posterior component probabilities given the targets.
inline Eigen::MatrixXd posterior_responsibilities(const EvidentialOutput& out, std::span<const double> y) {
  const Eigen::Index N = out.rows(), K = out.components();
  Eigen::MatrixXd q(N, K);
  for (Eigen::Index i = 0; i < N; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      const double lp = out.p(i, k) > 0.0
                            ? std::log(out.p(i, k)) -
                                  nll_component(y[i], out.gamma(i), NIGComponent(out.nu(i, k), out.alpha(i, k), out.beta(i, k)))
                            : -std::numeric_limits<double>::infinity();
      q(i, k) = lp;
      top = std::max(top, lp);
    }
    q.row(i) = (q.row(i).array() - top).exp();
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

}  // namespace detail

/// Loss of the batch (mean of NLL + lambda * evidence penalty) and its
/// gradient with respect to every weight.
inline LossAndGrad loss_and_grad(const NetworkWeights& w, const Eigen::MatrixXd& x, std::span<const double> y,
                                 double lambda, ResponsibilityMode mode = ResponsibilityMode::joint) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw DimensionError("loss_and_grad: " + std::to_string(x.rows()) + " inputs but " + std::to_string(y.size()) +
                         " targets");
  }
  if (y.empty()) throw DimensionError("loss_and_grad: empty batch");
  if (!(lambda >= 0.0)) throw DomainError("loss_and_grad: lambda must be >= 0");
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("loss_and_grad: non-finite target");
  }

  const ForwardCache c = forward_cached(w, x);
  const EvidentialOutput& out = c.out;
  detail::check_outputs_finite(out);

  const Eigen::Index N = out.rows(), K = out.components();
  const double inv_n = 1.0 / static_cast<double>(N);
  const Eigen::MatrixXd weights =
      mode == ResponsibilityMode::joint ? out.p : detail::posterior_responsibilities(out, y);

  Eigen::VectorXd d_gamma = Eigen::VectorXd::Zero(N);
  Eigen::MatrixXd d_nu(N, K), d_alpha(N, K), d_beta(N, K), term(N, K);
  double nll = 0.0, penalty = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double r = y[i] - out.gamma(i);
    const double abs_r = std::abs(r);
    const double sign_r = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double nu = out.nu(i, k), alpha = out.alpha(i, k);
      const NllGradient g = nll_component_grad(y[i], out.gamma(i), nu, alpha, out.beta(i, k));
      const double reg = abs_r * (2.0 * nu + alpha);
      const double pk = weights(i, k);
      nll += pk * g.value;
      penalty += pk * reg;
      term(i, k) = (g.value + lambda * reg) * inv_n;
      d_gamma(i) += pk * inv_n * (g.d_gamma - lambda * sign_r * (2.0 * nu + alpha));
      d_nu(i, k) = pk * inv_n * (g.d_nu + lambda * 2.0 * abs_r);
      d_alpha(i, k) = pk * inv_n * (g.d_alpha + lambda * abs_r);
      d_beta(i, k) = pk * inv_n * g.d_beta;
    }
  }
  nll *= inv_n;
  penalty *= inv_n;

  LossAndGrad result{nll + lambda * penalty, nll, penalty, NetworkWeights(w.spec)};
  if (!std::isfinite(result.loss)) {
    throw NumericError(std::isfinite(nll) ? "gamma" : "nu/alpha/beta",
                       "non-finite loss (nll=" + std::to_string(nll) + ", penalty=" + std::to_string(penalty) + ")");
  }

  // Through the activations.
  const Eigen::MatrixXd d_raw_nu = d_nu.cwiseProduct(c.raw_nu.unaryExpr(&detail::sigmoid));
  const Eigen::MatrixXd d_raw_alpha = d_alpha.cwiseProduct(c.raw_alpha.unaryExpr(&detail::sigmoid));
  const Eigen::MatrixXd d_raw_beta = d_beta.cwiseProduct(c.raw_beta.unaryExpr(&detail::sigmoid));
  Eigen::MatrixXd d_logits(N, K);
  if (mode == ResponsibilityMode::joint) {
    // Softmax Jacobian: p_k (g_k - sum_j p_j g_j).
    for (Eigen::Index i = 0; i < N; ++i) {
      const double mean = out.p.row(i).dot(term.row(i));
      d_logits.row(i) = out.p.row(i).cwiseProduct((term.row(i).array() - mean).matrix());
    }
  } else {
    d_logits = (out.p - weights) * inv_n;
  }

  const Eigen::MatrixXd& h = c.post.back();
  auto head_grad = [&](DenseLayer& g, const Eigen::MatrixXd& dz) {
    g.weight = h.transpose() * dz;
    g.bias = dz.colwise().sum();
  };
  NetworkWeights& grad = result.grad;
  const Eigen::MatrixXd d_gamma_mat = d_gamma;
  head_grad(grad.gamma_head, d_gamma_mat);
  head_grad(grad.nu_head, d_raw_nu);
  head_grad(grad.alpha_head, d_raw_alpha);
  head_grad(grad.beta_head, d_raw_beta);
  head_grad(grad.responsibility_head, d_logits);

  Eigen::MatrixXd d_h = d_gamma_mat * w.gamma_head.weight.transpose() + d_raw_nu * w.nu_head.weight.transpose() +
                        d_raw_alpha * w.alpha_head.weight.transpose() + d_raw_beta * w.beta_head.weight.transpose() +
                        d_logits * w.responsibility_head.weight.transpose();
  for (std::size_t l = w.trunk.size(); l-- > 0;) {
    Eigen::MatrixXd d_z;
    if (w.spec.activation == Activation::relu) {
      d_z = d_h.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
    } else {
      d_z = d_h.cwiseProduct((1.0 - c.post[l + 1].array().square()).matrix());
    }
    grad.trunk[l].weight = c.post[l].transpose() * d_z;
    grad.trunk[l].bias = d_z.colwise().sum();
    if (l > 0) d_h = d_z * w.trunk[l].weight.transpose();
  }
  return result;
}

/// Loss only; same value as loss_and_grad(...).loss in joint mode.
inline double evaluate_loss(const NetworkWeights& w, const Eigen::MatrixXd& x, std::span<const double> y,
                            double lambda) {
  const EvidentialOutput out = forward(w, x);
  detail::check_outputs_finite(out);
  std::vector<double> gamma(out.gamma.data(), out.gamma.data() + out.gamma.size());
  return total_loss(y, gamma, out.component_batch(), out.responsibilities(), lambda);
}

/// Objective monitored in frozen-posterior mode: mean negative mixture
/// log-likelihood -log sum_k p_ik St_k(y_i) plus lambda times the
/// posterior-weighted evidence penalty.
inline double evaluate_em_objective(const NetworkWeights& w, const Eigen::MatrixXd& x, std::span<const double> y,
                                    double lambda) {
  const EvidentialOutput out = forward(w, x);
  detail::check_outputs_finite(out);
  const Eigen::MatrixXd q = detail::posterior_responsibilities(out, y);
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    total -= marginal_loglik(y[i], out.sample(i));
    const double abs_r = std::abs(y[i] - out.gamma(i));
    for (Eigen::Index k = 0; k < out.components(); ++k) {
      total += lambda * q(i, k) * abs_r * (2.0 * out.nu(i, k) + out.alpha(i, k));
    }
  }
  return total / static_cast<double>(out.rows());
}

}  // namespace mogel
