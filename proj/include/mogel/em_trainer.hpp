#pragma once

// Training loop: each minibatch step evaluates the responsibility head
// (expectation) together with the evidential heads and takes one gradient
// step on the combined loss (maximization). Early stopping on validation
// loss; the best weights are returned.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mogel/datasets.hpp"
#include "mogel/error.hpp"
#include "mogel/evidential_core.hpp"
#include "mogel/network.hpp"

namespace mogel {

struct TrainConfig {
  int n_components = 1;
  double lambda = 0.01;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 20;
  std::uint64_t seed = 0;
  bool freeze_responsibilities = false;

  void validate() const {
    if (n_components < 1) throw ConfigError("n_components must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }

  ResponsibilityMode mode() const {
    return freeze_responsibilities ? ResponsibilityMode::frozen_posterior : ResponsibilityMode::joint;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double best_val_loss = 0.0;  // best so far, including this epoch
  std::vector<double> mixing;  // mean responsibilities over the train split
  int skipped_steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> mixing;  // final mixing estimate over the train split
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  double wall_time_seconds = 0.0;
};

struct TrainResult {
  NetworkWeights weights;
  TrainReport report;
};

/// Loss was non-finite for every step of an epoch.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, NetworkWeights last_finite, TrainReport report)
      : std::runtime_error(what), last_finite_(std::move(last_finite)), report_(std::move(report)) {}

  const NetworkWeights& last_finite_weights() const noexcept { return last_finite_; }
  const TrainReport& report() const noexcept { return report_; }

 private:
  NetworkWeights last_finite_;
  TrainReport report_;
};

/// Per-parameter adaptive steps from first/second moment estimates.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(size)),
        v_(Eigen::VectorXd::Zero(size)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  int steps() const noexcept { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

/// Mean responsibilities of the network over `x`.
/// Throws NumericError when the network output is non-finite.
inline std::vector<double> mixing_over(const NetworkWeights& w, const Eigen::MatrixXd& x) {
  const EvidentialOutput out = forward(w, x);
  detail::check_outputs_finite(out);
  return mixing_estimate(Responsibilities(out.p));
}

/// Stateful loop over one standardized, split dataset.
class Trainer {
 public:
  Trainer(const NetworkSpec& spec, const RegressionDataset& data, const TrainConfig& cfg)
      : cfg_(cfg), weights_(init_weights(checked(spec, data, cfg), cfg.seed)),
        optimizer_(weights_.parameter_count(), cfg.learning_rate), shuffle_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
    x_train_ = data.features_of(Split::train);
    y_train_ = data.target_vector(Split::train);
    x_val_ = data.features_of(Split::val);
    y_val_ = data.target_vector(Split::val);
    if (x_train_.rows() == 0) throw DataError("train: no train rows");
    if (x_val_.rows() == 0) throw DataError("train: no validation rows");
    order_.resize(static_cast<std::size_t>(x_train_.rows()));
    std::iota(order_.begin(), order_.end(), 0);
  }

  /// One optimizer step on the given batch; returns the batch loss before the
  /// update, or nullopt when the loss is non-finite (no update is made).
  std::optional<double> step(const Eigen::MatrixXd& x, std::span<const double> y) {
    std::optional<LossAndGrad> lg;
    try {
      lg.emplace(loss_and_grad(weights_, x, y, cfg_.lambda, cfg_.mode()));
    } catch (const NumericError&) {
      return std::nullopt;
    }
    if (!std::isfinite(lg->loss)) return std::nullopt;
    const Eigen::VectorXd grad = lg->grad.flatten();
    if (!grad.allFinite()) return std::nullopt;
    Eigen::VectorXd theta = weights_.flatten();
    optimizer_.step(theta, grad);
    if (!theta.allFinite()) return std::nullopt;
    weights_.assign(theta);
    return lg->loss;
  }

  /// Shuffled pass over the train split. Returns mean step loss (nullopt when
  /// every step was non-finite) and the number of skipped steps.
  std::pair<std::optional<double>, int> run_epoch() {
    std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    double total = 0.0;
    Eigen::Index counted = 0;
    int skipped = 0;
    const auto n = static_cast<Eigen::Index>(order_.size());
    for (Eigen::Index start = 0; start < n; start += cfg_.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg_.batch_size, n - start);
      std::vector<Eigen::Index> idx(order_.begin() + start, order_.begin() + start + len);
      const Eigen::MatrixXd xb = x_train_(idx, Eigen::all);
      std::vector<double> yb(static_cast<std::size_t>(len));
      for (Eigen::Index j = 0; j < len; ++j) yb[static_cast<std::size_t>(j)] = y_train_[static_cast<std::size_t>(idx[j])];
      if (auto loss = step(xb, yb)) {
        total += *loss * static_cast<double>(len);
        counted += len;
      } else {
        ++skipped;
      }
    }
    if (counted == 0) return {std::nullopt, skipped};
    return {total / static_cast<double>(counted), skipped};
  }

  double validation_loss() const {
    try {
      if (cfg_.freeze_responsibilities) return evaluate_em_objective(weights_, x_val_, y_val_, cfg_.lambda);
      return evaluate_loss(weights_, x_val_, y_val_, cfg_.lambda);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  std::vector<double> train_mixing() const { return mixing_over(weights_, x_train_); }

  const NetworkWeights& weights() const noexcept { return weights_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const Eigen::MatrixXd& train_features() const noexcept { return x_train_; }

 private:
  static const NetworkSpec& checked(const NetworkSpec& spec, const RegressionDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (spec.n_components != cfg.n_components) {
      throw ConfigError("network has " + std::to_string(spec.n_components) + " components, config asks for " +
                        std::to_string(cfg.n_components));
    }
    if (spec.input_dim != data.dims()) {
      throw ConfigError("network input_dim " + std::to_string(spec.input_dim) + " does not match " +
                        std::to_string(data.dims()) + " dataset features");
    }
    if (data.rows() == 0) throw DataError("train: empty dataset");
    if (data.split_assignment.size() != static_cast<std::size_t>(data.rows())) {
      throw DataError("train: dataset has no train/validation split");
    }
    return spec;
  }

  TrainConfig cfg_;
  NetworkWeights weights_;
  AdamOptimizer optimizer_;
  std::mt19937_64 shuffle_rng_;
  Eigen::MatrixXd x_train_, x_val_;
  std::vector<double> y_train_, y_val_;
  std::vector<Eigen::Index> order_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs epochs until `patience` epochs pass without a validation improvement
/// or `max_epochs` is reached; returns the weights with the lowest validation
/// loss.
inline TrainResult train(const NetworkSpec& spec, const RegressionDataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  const auto started = std::chrono::steady_clock::now();
  Trainer trainer(spec, data, cfg);
  TrainReport report;
  NetworkWeights best = trainer.weights();
  double best_val = trainer.validation_loss();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto [train_loss, skipped] = trainer.run_epoch();
    if (!train_loss) {
      report.epochs_run = epoch;
      report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingError("training diverged: loss non-finite for every step of epoch " + std::to_string(epoch),
                          best, report);
    }
    const double val = trainer.validation_loss();
    if (val < best_val) {
      best_val = val;
      best = trainer.weights();
      report.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = *train_loss;
    rec.val_loss = val;
    rec.best_val_loss = best_val;
    try {
      rec.mixing = trainer.train_mixing();
    } catch (const NumericError& e) {
      report.epochs_run = epoch;
      report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingError("training diverged after epoch " + std::to_string(epoch) + ": " + e.what(), best, report);
    }
    rec.skipped_steps = skipped;
    report.epochs.push_back(rec);
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(rec);
    if (since_best >= cfg.patience) {
      report.early_stopped = true;
      break;
    }
  }
  report.best_val_loss = best_val;
  report.mixing = mixing_over(best, trainer.train_features());
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------
// Prediction

struct UncertaintyReport {
  Eigen::VectorXd prediction;       // N, gamma
  Eigen::MatrixXd aleatoric;        // N x K, beta_k / (alpha_k - 1)
  Eigen::VectorXd epistemic;        // N, sum_k p_ik beta_k / (nu_k (alpha_k - 1))
  Eigen::MatrixXd responsibilities; // N x K
  std::vector<double> mixing;       // K, column means of the responsibilities
};

inline UncertaintyReport predict_with_uncertainty(const NetworkWeights& w, const Eigen::MatrixXd& x) {
  const EvidentialOutput out = forward(w, x);
  const Eigen::Index N = out.rows(), K = out.components();
  UncertaintyReport r;
  r.prediction = out.gamma;
  r.aleatoric.resize(N, K);
  r.epistemic.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const MixtureEvidentialParams m = out.sample(i);
    r.epistemic(i) = epistemic(m);
    for (Eigen::Index k = 0; k < K; ++k) r.aleatoric(i, k) = aleatoric_per_component(m.component(static_cast<std::size_t>(k)));
  }
  r.responsibilities = out.p;
  if (N > 0) r.mixing = mixing_estimate(out.responsibilities());
  return r;
}

}  // namespace mogel
