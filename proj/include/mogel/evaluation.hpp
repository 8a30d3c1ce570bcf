#pragma once

// Metrics and experiment harnesses: RMSE / NLL on held-out data, repeated
// random-split benchmarks, component-count sweeps and the in/out-of-domain
// epistemic comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mogel/datasets.hpp"
#include "mogel/em_trainer.hpp"
#include "mogel/error.hpp"
#include "mogel/evidential_core.hpp"
#include "mogel/network.hpp"

namespace mogel {

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("rmse: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw DimensionError("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

/// Mean negative marginal log-likelihood. `y` and `params` live in the
/// standardized space; adding log(target_std) reports it in original units.
inline double nll_metric(std::span<const double> y, std::span<const MixtureEvidentialParams> params,
                         double target_std = 1.0) {
  if (y.size() != params.size()) throw DimensionError("nll_metric: targets and params differ in length");
  if (y.empty()) throw DimensionError("nll_metric: empty input");
  if (!(target_std > 0.0)) throw DomainError("nll_metric: target_std must be > 0");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s -= marginal_loglik(y[i], params[i]);
  return s / static_cast<double>(y.size()) + std::log(target_std);
}

struct MetricReport {
  double rmse = 0.0;
  double nll = 0.0;
  std::int64_t n_test = 0;
  int trial_id = 0;
};

/// RMSE and NLL of `w` on one split of a standardized dataset, in original
/// target units.
inline MetricReport evaluate(const NetworkWeights& w, const RegressionDataset& data, Split which = Split::test,
                             int trial_id = 0) {
  if (!data.standardization) throw DataError("evaluate: dataset must be standardized");
  const Eigen::MatrixXd x = data.features_of(which);
  const std::vector<double> z = data.target_vector(which);
  if (z.empty()) throw DataError(std::string("evaluate: no rows in split ") + to_string(which));
  const EvidentialOutput out = forward(w, x);
  std::vector<MixtureEvidentialParams> params;
  params.reserve(z.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i) params.push_back(out.sample(i));

  const Standardization& s = *data.standardization;
  std::vector<double> pred(z.size()), truth(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    pred[i] = s.restore_target(out.gamma(static_cast<Eigen::Index>(i)));
    truth[i] = s.restore_target(z[i]);
  }
  MetricReport r;
  r.rmse = rmse(pred, truth);
  r.nll = nll_metric(z, params, s.target_std);
  r.n_test = static_cast<std::int64_t>(z.size());
  r.trial_id = trial_id;
  return r;
}

// ---------------------------------------------------------------------------
// Repeated-split protocol

/// Seed for trial `t` derived from a base seed (splitmix64 finalizer).
inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t t) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (t + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 90/10 train/test with 10% of the train part held out for validation.
inline constexpr SplitFractions kBenchmarkFractions{0.81, 0.09, 0.10};

struct TrialOutcome {
  int trial_id = 0;
  std::uint64_t seed = 0;
  std::optional<MetricReport> metrics;
  std::string error;  // set when the trial failed
  int epochs_run = 0;
};

/// Split, standardize, train and evaluate one trial.
inline TrialOutcome run_trial(const RegressionDataset& raw, NetworkSpec spec, TrainConfig cfg, int trial_id,
                              std::uint64_t seed, const SplitFractions& fractions = kBenchmarkFractions) {
  TrialOutcome o;
  o.trial_id = trial_id;
  o.seed = seed;
  try {
    const RegressionDataset data = standardize(split(raw, fractions, seed));
    spec.input_dim = static_cast<int>(data.dims());
    spec.n_components = cfg.n_components;
    cfg.seed = seed;
    const TrainResult res = train(spec, data, cfg);
    o.metrics = evaluate(res.weights, data, Split::test, trial_id);
    o.epochs_run = res.report.epochs_run;
  } catch (const TrainingError& e) {
    o.error = e.what();
  } catch (const NumericError& e) {
    o.error = e.what();
  }
  return o;
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline Aggregate aggregate(std::span<const double> v) {
  Aggregate a;
  if (v.empty()) {
    a.mean = a.std = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return a;
}

struct BenchmarkReport {
  std::vector<TrialOutcome> trials;
  Aggregate rmse;
  Aggregate nll;
  int n_ok = 0;
  int n_failed = 0;
};

inline BenchmarkReport benchmark(const RegressionDataset& raw, const NetworkSpec& spec, const TrainConfig& cfg,
                                 int n_trials, std::uint64_t base_seed,
                                 const std::function<void(const TrialOutcome&)>& on_trial = {},
                                 const SplitFractions& fractions = kBenchmarkFractions) {
  if (n_trials < 1) throw ConfigError("benchmark: need at least one trial");
  BenchmarkReport r;
  std::vector<double> rm, nl;
  for (int t = 0; t < n_trials; ++t) {
    TrialOutcome o =
        run_trial(raw, spec, cfg, t, trial_seed(base_seed, static_cast<std::uint64_t>(t)), fractions);
    if (o.metrics) {
      rm.push_back(o.metrics->rmse);
      nl.push_back(o.metrics->nll);
      ++r.n_ok;
    } else {
      ++r.n_failed;
    }
    if (on_trial) on_trial(o);
    r.trials.push_back(std::move(o));
  }
  r.rmse = aggregate(rm);
  r.nll = aggregate(nl);
  return r;
}

// ---------------------------------------------------------------------------
// Component sweep

struct SweepRow {
  int k = 1;
  Aggregate rmse;
  Aggregate nll;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<TrialOutcome> trials;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // strictly increasing k
  int argmin_nll_k = 0;        // 0 when no cell succeeded
};

/// Trains one model per (K, trial); trial t uses the same split and seed for
/// every K.
inline SweepReport component_sweep(const RegressionDataset& raw, const NetworkSpec& spec, const TrainConfig& cfg,
                                   std::vector<int> k_values, int n_trials, std::uint64_t base_seed,
                                   const SplitFractions& fractions = kBenchmarkFractions) {
  if (k_values.empty()) throw ConfigError("component_sweep: k_values is empty");
  if (n_trials < 1) throw ConfigError("component_sweep: need at least one trial");
  std::sort(k_values.begin(), k_values.end());
  if (std::adjacent_find(k_values.begin(), k_values.end()) != k_values.end()) {
    throw ConfigError("component_sweep: duplicate K value");
  }
  if (k_values.front() < 1) throw ConfigError("component_sweep: K must be >= 1");

  SweepReport rep;
  double best = std::numeric_limits<double>::infinity();
  for (int k : k_values) {
    SweepRow row;
    row.k = k;
    TrainConfig c = cfg;
    c.n_components = k;
    std::vector<double> rm, nl;
    for (int t = 0; t < n_trials; ++t) {
      TrialOutcome o = run_trial(raw, spec, c, t, trial_seed(base_seed, static_cast<std::uint64_t>(t)), fractions);
      if (o.metrics) {
        rm.push_back(o.metrics->rmse);
        nl.push_back(o.metrics->nll);
        ++row.n_ok;
      } else {
        ++row.n_failed;
      }
      row.trials.push_back(std::move(o));
    }
    row.rmse = aggregate(rm);
    row.nll = aggregate(nl);
    if (row.n_ok > 0 && row.nll.mean < best) {
      best = row.nll.mean;
      rep.argmin_nll_k = k;
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Out-of-domain epistemic uncertainty

struct OodReport {
  double mean_epistemic_in = 0.0;
  double mean_epistemic_out = 0.0;
  double ratio = 0.0;
};

inline OodReport ood_report(const NetworkWeights& w, const Eigen::MatrixXd& in_domain, const Eigen::MatrixXd& out_domain) {
  if (in_domain.rows() == 0 || out_domain.rows() == 0) throw DimensionError("ood_report: empty batch");
  OodReport r;
  r.mean_epistemic_in = predict_with_uncertainty(w, in_domain).epistemic.mean();
  r.mean_epistemic_out = predict_with_uncertainty(w, out_domain).epistemic.mean();
  r.ratio = r.mean_epistemic_out / r.mean_epistemic_in;
  return r;
}

}  // namespace mogel
