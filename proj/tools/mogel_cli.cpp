// mogel: train, evaluate, sweep, predict, verify and benchmark mixture
// evidential regressors from the command line.
//
// Exit codes: 0 ok, 1 configuration error, 2 data or I/O error, 3 numeric
// divergence, 4 verification failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mogel/checkpoint.hpp"
#include "mogel/datasets.hpp"
#include "mogel/em_trainer.hpp"
#include "mogel/evaluation.hpp"
#include "mogel/verification.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mogel::cli {
namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kDiverged = 3, kVerifyFailed = 4 };

// ---------------------------------------------------------------------------
// Output formatting: 9 significant digits everywhere.

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json num_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::strtod(num(v).c_str(), nullptr);
}

/// Rounds every floating-point number in `j` to 9 significant digits.
void round_numbers(json& j) {
  if (j.is_number_float()) {
    j = num_json(j.get<double>());
  } else if (j.is_structured()) {
    for (auto& child : j) round_numbers(child);
  }
}

json aggregate_json(const Aggregate& a) { return {{"mean", a.mean}, {"std", a.std}}; }

json metrics_json(const MetricReport& m) { return {{"rmse", m.rmse}, {"nll", m.nll}, {"n", m.n_test}}; }

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

void write_manifest(const fs::path& out, json manifest) {
  round_numbers(manifest);
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

json base_manifest(const RunConfig& cfg) {
  json j;
  j["tool"] = "mogel";
  j["manifest_version"] = 1;
  j["command"] = cfg.command();
  j["config"] = cfg.to_json();
  return j;
}

// ---------------------------------------------------------------------------
// Config to library types

char delimiter_of(const RunConfig& cfg) {
  const std::string& d = cfg.str("delimiter");
  if (d == "tab") return '\t';
  if (d == "whitespace" || d == " ") return ' ';
  if (d.size() == 1) return d[0];
  throw ConfigError("delimiter must be one character, 'tab' or 'whitespace', got '" + d + "'");
}

RegressionDataset load_raw(const RunConfig& cfg) {
  if (!cfg.str("data").empty()) {
    return load_delimited(cfg.str("data"), cfg.str("target"), delimiter_of(cfg), cfg.flag("header"));
  }
  NoiseParams noise;
  noise.sigma = cfg.real("noise_sigma");
  noise.sigma_low = cfg.real("noise_low");
  noise.sigma_high = cfg.real("noise_high");
  noise.high_fraction = cfg.real("noise_high_fraction");
  const long long n = cfg.integer("n");
  if (n > 100'000'000) throw ConfigError("n is too large");
  return make_synthetic(synthetic_kind_from_string(cfg.str("synthetic")), static_cast<int>(n), noise,
                        {cfg.real("x_min"), cfg.real("x_max")}, cfg.seed("data_seed"));
}

SplitFractions fractions_of(const RunConfig& cfg) {
  return {cfg.real("train_fraction"), cfg.real("val_fraction"), cfg.real("test_fraction")};
}

int positive_int(const RunConfig& cfg, const std::string& key) {
  const long long v = cfg.integer(key);
  if (v < 1 || v > 1'000'000'000) throw ConfigError("config key '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

NetworkSpec spec_of(const RunConfig& cfg, Eigen::Index input_dim) {
  NetworkSpec s;
  s.input_dim = static_cast<int>(input_dim);
  s.hidden_layers.clear();
  for (long long h : cfg.integers("hidden")) {
    if (h < 1 || h > 100'000) throw ConfigError("hidden layer widths must be between 1 and 100000");
    s.hidden_layers.push_back(static_cast<int>(h));
  }
  s.activation = activation_from_string(cfg.str("activation"));
  s.n_components = cfg.has_key("components") ? positive_int(cfg, "components") : 1;
  s.validate();
  return s;
}

TrainConfig train_config_of(const RunConfig& cfg, int k) {
  TrainConfig t;
  t.n_components = k;
  t.lambda = cfg.real("lambda");
  t.learning_rate = cfg.real("learning_rate");
  t.batch_size = positive_int(cfg, "batch_size");
  t.max_epochs = positive_int(cfg, "max_epochs");
  t.patience = positive_int(cfg, "patience");
  t.seed = cfg.seed("seed");
  t.freeze_responsibilities = cfg.flag("freeze_responsibilities");
  t.validate();
  return t;
}

Split split_of(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("eval_split must be train, val, test or all, got '" + s + "'");
}

fs::path out_dir(const RunConfig& cfg) {
  const fs::path out = cfg.str("out");
  if (out.empty()) throw ConfigError("out must not be empty");
  fs::create_directories(out);
  return out;
}

std::string epoch_line(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["best_val_loss"] = r.best_val_loss;
  j["mixing"] = r.mixing;
  j["skipped_steps"] = r.skipped_steps;
  round_numbers(j);
  return j.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const RunConfig& cfg) {
  const RegressionDataset raw = load_raw(cfg);
  const RegressionDataset data = standardize(split(raw, fractions_of(cfg), cfg.seed("seed")));
  const NetworkSpec spec = spec_of(cfg, data.dims());
  const TrainConfig tc = train_config_of(cfg, spec.n_components);
  const fs::path out = out_dir(cfg);

  json manifest = base_manifest(cfg);
  manifest["dataset"] = dataset_manifest(data);
  std::string log;
  TrainResult result;
  try {
    result = train(spec, data, tc, [&](const EpochRecord& r) { log += epoch_line(r); });
  } catch (const TrainingError& e) {
    write_text(out / "train_log.jsonl", log);
    save_checkpoint(out / "checkpoint_last_finite.txt", {e.last_finite_weights(), data.standardization});
    manifest["status"] = "diverged";
    manifest["error"] = e.what();
    manifest["results"] = {{"epochs_run", e.report().epochs_run}};
    write_manifest(out, manifest);
    std::cerr << "mogel train: " << e.what() << "\n";
    return kDiverged;
  }
  write_text(out / "train_log.jsonl", log);
  save_checkpoint(out / "checkpoint.txt", {result.weights, data.standardization});

  const MetricReport val = evaluate(result.weights, data, Split::val);
  const MetricReport test = evaluate(result.weights, data, Split::test);
  const TrainReport& r = result.report;
  manifest["status"] = "ok";
  manifest["results"] = {{"epochs_run", r.epochs_run},     {"best_epoch", r.best_epoch},
                         {"best_val_loss", r.best_val_loss}, {"early_stopped", r.early_stopped},
                         {"mixing", r.mixing},             {"val", metrics_json(val)},
                         {"test", metrics_json(test)}};
  write_manifest(out, manifest);

  std::cout << "epochs " << r.epochs_run << " (best " << r.best_epoch << ")  test rmse " << num(test.rmse)
            << "  test nll " << num(test.nll) << "\n";
  std::cerr << "trained in " << num(r.wall_time_seconds) << " s; outputs in " << out.string() << "\n";
  return kOk;
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.str("checkpoint").empty()) throw ConfigError("checkpoint is required");
  return load_checkpoint(cfg.str("checkpoint"));
}

int cmd_evaluate(const RunConfig& cfg) {
  const Checkpoint ckpt = require_checkpoint(cfg);
  if (!ckpt.standardization) throw DataError(cfg.str("checkpoint") + ": checkpoint has no standardization");
  const std::string& which = cfg.str("eval_split");
  if (which != "all") split_of(which);
  const RegressionDataset raw = load_raw(cfg);
  if (raw.dims() != ckpt.weights.spec.input_dim) {
    throw DataError("dataset has " + std::to_string(raw.dims()) + " features, checkpoint expects " +
                    std::to_string(ckpt.weights.spec.input_dim));
  }
  RegressionDataset data = split(raw, fractions_of(cfg), cfg.seed("seed"));
  if (which == "all") data.split_assignment.assign(static_cast<std::size_t>(data.rows()), Split::test);
  data = apply_standardization(std::move(data), *ckpt.standardization);
  const MetricReport m = evaluate(ckpt.weights, data, which == "all" ? Split::test : split_of(which));

  const fs::path out = out_dir(cfg);
  json manifest = base_manifest(cfg);
  manifest["dataset"] = dataset_manifest(data);
  manifest["status"] = "ok";
  manifest["results"] = metrics_json(m);
  write_manifest(out, manifest);
  std::cout << which << " rmse " << num(m.rmse) << "  nll " << num(m.nll) << "  n " << m.n_test << "\n";
  return kOk;
}

int cmd_predict(const RunConfig& cfg) {
  const Checkpoint ckpt = require_checkpoint(cfg);
  if (cfg.str("input").empty()) throw ConfigError("input is required");
  const NumericTable table = load_table(cfg.str("input"), delimiter_of(cfg), cfg.flag("header"));
  const Eigen::Index d = ckpt.weights.spec.input_dim;
  Eigen::MatrixXd x;
  if (table.values.cols() == d) {
    x = table.values;
  } else if (table.values.cols() == d + 1) {
    const auto t = static_cast<Eigen::Index>(resolve_column(table.header, cfg.str("target")));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j != t) keep.push_back(j);
    }
    x = table.values(Eigen::all, keep);
  } else {
    throw DataError(cfg.str("input") + ": has " + std::to_string(table.values.cols()) + " columns, checkpoint expects " +
                    std::to_string(d) + " features (or " + std::to_string(d + 1) + " with a target column)");
  }
  double scale = 1.0, shift = 0.0;
  if (ckpt.standardization) {
    x = ckpt.standardization->apply_features(x);
    scale = ckpt.standardization->target_std;
    shift = ckpt.standardization->target_mean;
  }
  const UncertaintyReport u = predict_with_uncertainty(ckpt.weights, x);
  const Eigen::Index k = u.aleatoric.cols();

  // Predictions in target units; variances scale with target_std^2.
  std::ostringstream csv, resp;
  csv << "prediction,aleatoric";
  for (Eigen::Index c = 0; c < k; ++c) csv << ",aleatoric_" << c + 1;
  csv << ",epistemic\n";
  for (Eigen::Index c = 0; c < k; ++c) resp << (c ? "," : "") << "p_" << c + 1;
  resp << "\n";
  const double var_scale = scale * scale;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double total = u.responsibilities.row(i).dot(u.aleatoric.row(i));
    csv << num(u.prediction(i) * scale + shift) << "," << num(total * var_scale);
    for (Eigen::Index c = 0; c < k; ++c) csv << "," << num(u.aleatoric(i, c) * var_scale);
    csv << "," << num(u.epistemic(i) * var_scale) << "\n";
    for (Eigen::Index c = 0; c < k; ++c) resp << (c ? "," : "") << num(u.responsibilities(i, c));
    resp << "\n";
  }
  const fs::path out = out_dir(cfg);
  write_text(out / "predictions.csv", csv.str());
  write_text(out / "responsibilities.csv", resp.str());

  json manifest = base_manifest(cfg);
  manifest["status"] = "ok";
  manifest["results"] = {{"rows", x.rows()}, {"components", k}, {"mixing", u.mixing}};
  write_manifest(out, manifest);
  std::cout << "wrote " << x.rows() << " predictions to " << (out / "predictions.csv").string() << "\n";
  return kOk;
}

int cmd_sweep(const RunConfig& cfg) {
  const RegressionDataset raw = load_raw(cfg);
  const NetworkSpec spec = spec_of(cfg, raw.dims());
  std::vector<int> ks;
  for (long long k : cfg.integers("k_values")) {
    if (k < 1 || k > 1000) throw ConfigError("k_values entries must be between 1 and 1000");
    ks.push_back(static_cast<int>(k));
  }
  const std::vector<double> lambdas = cfg.reals("lambda_values");
  if (lambdas.empty()) throw ConfigError("lambda_values is empty");
  const int trials = positive_int(cfg, "sweep_trials");
  const SplitFractions fr = fractions_of(cfg);
  const fs::path out = out_dir(cfg);

  std::ostringstream csv;
  csv << "lambda,k,rmse_mean,rmse_std,nll_mean,nll_std,n_ok,n_failed\n";
  json rows = json::array(), by_lambda = json::array();
  double best = std::numeric_limits<double>::infinity();
  int best_k = 0;
  double best_lambda = 0.0;
  for (double lambda : lambdas) {
    TrainConfig tc = train_config_of(cfg, 1);
    tc.lambda = lambda;
    tc.validate();
    const SweepReport rep = component_sweep(raw, spec, tc, ks, trials, cfg.seed("seed"), fr);
    for (const SweepRow& row : rep.rows) {
      csv << num(lambda) << "," << row.k << "," << num(row.rmse.mean) << "," << num(row.rmse.std) << ","
          << num(row.nll.mean) << "," << num(row.nll.std) << "," << row.n_ok << "," << row.n_failed << "\n";
      rows.push_back({{"lambda", lambda},
                      {"k", row.k},
                      {"rmse", aggregate_json(row.rmse)},
                      {"nll", aggregate_json(row.nll)},
                      {"n_ok", row.n_ok},
                      {"n_failed", row.n_failed}});
      if (row.n_ok > 0 && row.nll.mean < best) {
        best = row.nll.mean;
        best_k = row.k;
        best_lambda = lambda;
      }
      if (row.n_failed > 0) {
        std::cerr << "warning: lambda " << num(lambda) << " K " << row.k << ": " << row.n_failed
                  << " trial(s) failed\n";
      }
    }
    by_lambda.push_back({{"lambda", lambda}, {"argmin_nll_k", rep.argmin_nll_k}});
    std::cerr << "lambda " << num(lambda) << " done\n";
  }
  write_text(out / "sweep.csv", csv.str());

  json manifest = base_manifest(cfg);
  manifest["dataset"] = dataset_manifest(raw);
  manifest["status"] = best_k > 0 ? "ok" : "all_failed";
  manifest["results"] = {{"rows", rows},
                         {"argmin_nll_k", best_k},
                         {"argmin_nll_lambda", best_lambda},
                         {"argmin_nll_k_by_lambda", by_lambda}};
  write_manifest(out, manifest);
  std::cout << csv.str();
  if (best_k == 0) {
    std::cerr << "mogel sweep: every trial failed\n";
    return kDiverged;
  }
  std::cout << "argmin NLL: K=" << best_k << " lambda=" << num(best_lambda) << "\n";
  return kOk;
}

int cmd_benchmark(const RunConfig& cfg) {
  const RegressionDataset raw = load_raw(cfg);
  const NetworkSpec spec = spec_of(cfg, raw.dims());
  const TrainConfig tc = train_config_of(cfg, spec.n_components);
  const int trials = positive_int(cfg, "trials");
  const fs::path out = out_dir(cfg);

  std::ostringstream csv;
  csv << "trial,seed,rmse,nll,epochs_run,error\n";
  const BenchmarkReport rep = benchmark(
      raw, spec, tc, trials, cfg.seed("seed"),
      [&](const TrialOutcome& o) {
        csv << o.trial_id << "," << o.seed << ",";
        if (o.metrics) {
          csv << num(o.metrics->rmse) << "," << num(o.metrics->nll) << "," << o.epochs_run << ",\n";
          std::cerr << "trial " << o.trial_id << ": rmse " << num(o.metrics->rmse) << " nll "
                    << num(o.metrics->nll) << "\n";
        } else {
          std::string err = o.error;
          std::replace(err.begin(), err.end(), ',', ';');
          csv << ",," << o.epochs_run << "," << err << "\n";
          std::cerr << "trial " << o.trial_id << " failed: " << o.error << "\n";
        }
      },
      fractions_of(cfg));
  write_text(out / "trials.csv", csv.str());

  json manifest = base_manifest(cfg);
  manifest["dataset"] = dataset_manifest(raw);
  manifest["status"] = rep.n_ok > 0 ? "ok" : "all_failed";
  manifest["results"] = {{"n_ok", rep.n_ok},
                         {"n_failed", rep.n_failed},
                         {"rmse", aggregate_json(rep.rmse)},
                         {"nll", aggregate_json(rep.nll)}};
  write_manifest(out, manifest);
  if (rep.n_ok == 0) {
    std::cerr << "mogel benchmark: every trial failed\n";
    return kDiverged;
  }
  if (rep.n_failed > 0) {
    std::cerr << "warning: " << rep.n_failed << " of " << trials << " trials failed; aggregates cover "
              << rep.n_ok << "\n";
  }
  std::cout << "RMSE " << num(rep.rmse.mean) << " +- " << num(rep.rmse.std) << "  NLL " << num(rep.nll.mean)
            << " +- " << num(rep.nll.std) << "  (" << rep.n_ok << "/" << trials << " trials)\n";
  return kOk;
}

int cmd_verify(const RunConfig& cfg) {
  verification::Options o;
  o.seed = cfg.seed("seed");
  o.perturb_loss = cfg.real("perturb_loss");
  o.marginal_sets = positive_int(cfg, "marginal_sets");
  o.moment_sets = positive_int(cfg, "moment_sets");
  o.mc_samples = cfg.integer("mc_samples");
  o.identity_inputs = positive_int(cfg, "identity_inputs");
  o.gradient_configs = positive_int(cfg, "gradient_configs");
  o.gradient_weights = positive_int(cfg, "gradient_weights");
  o.family_wise = cfg.flag("family_wise");
  if (o.mc_samples < 100'000) throw ConfigError("mc_samples must be >= 100000");
  const fs::path out = out_dir(cfg);

  std::ostringstream table;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-16s %-16s %8s %9s  %s\n", "check", "statistic", "tolerance", "cases",
                "failures", "status");
  table << line;
  std::cout << line << std::flush;
  json checks = json::array();
  std::string first_failure;
  verification::run_all(o, [&](const verification::CheckResult& r) {
    std::snprintf(line, sizeof line, "%-20s %-16s %-16s %8d %9d  %s\n", r.name.c_str(), num(r.statistic).c_str(),
                  num(r.tolerance).c_str(), r.cases, r.failures, r.passed() ? "PASS" : "FAIL");
    table << line;
    std::cout << line << std::flush;
    checks.push_back({{"name", r.name},
                      {"statistic", r.statistic},
                      {"tolerance", r.tolerance},
                      {"cases", r.cases},
                      {"failures", r.failures},
                      {"passed", r.passed()},
                      {"detail", r.detail}});
    if (!r.passed() && first_failure.empty()) first_failure = r.name;
  });
  write_text(out / "verify.txt", table.str());

  json manifest = base_manifest(cfg);
  manifest["status"] = first_failure.empty() ? "ok" : "failed";
  manifest["results"] = {{"checks", checks}};
  if (!first_failure.empty()) manifest["results"]["first_failure"] = first_failure;
  write_manifest(out, manifest);
  if (!first_failure.empty()) {
    std::cerr << "verification failed: first failing check: " << first_failure << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Command table

std::vector<KeySpec> concat(std::initializer_list<std::vector<KeySpec>> groups,
                            const std::map<std::string, std::string>& overrides = {}) {
  std::vector<KeySpec> out;
  for (const auto& g : groups) {
    for (KeySpec k : g) {
      if (auto it = overrides.find(k.name); it != overrides.end()) k.fallback = it->second;
      out.push_back(std::move(k));
    }
  }
  return out;
}

std::vector<KeySpec> only(const std::vector<KeySpec>& group, std::initializer_list<const char*> names) {
  std::vector<KeySpec> out;
  for (const char* n : names) {
    for (const auto& k : group) {
      if (k.name == n) out.push_back(k);
    }
  }
  return out;
}

struct Command {
  std::string name;
  std::string description;
  std::vector<KeySpec> keys;
  std::function<int(const RunConfig&)> run;
};

std::vector<Command> commands() {
  const std::map<std::string, std::string> bench_split{
      {"train_fraction", "0.81"}, {"val_fraction", "0.09"}, {"test_fraction", "0.1"}};
  const std::vector<KeySpec> ckpt{{"checkpoint", "", "checkpoint file written by train"}};
  return {
      {"train", "Train one model; writes checkpoint.txt, train_log.jsonl and manifest.json.",
       concat({data_keys(), split_keys(), model_keys(), train_keys(), seed_key(), out_key()}), cmd_train},
      {"evaluate", "RMSE and NLL of a checkpoint on one split of a dataset (split with the same seed and fractions).",
       concat({ckpt, data_keys(), split_keys(), seed_key(),
               {{"eval_split", "test", "split to score: train, val, test or all"}}, out_key()}),
       cmd_evaluate},
      {"predict",
       "Prediction, aleatoric (mixture and per component) and epistemic variance per row; writes predictions.csv "
       "(columns: prediction, aleatoric, aleatoric_1..K, epistemic) and responsibilities.csv (p_1..K).",
       concat({ckpt,
               {{"input", "", "feature file; an extra column is dropped as the target"}},
               only(data_keys(), {"target", "delimiter", "header"}), out_key()}),
       cmd_predict},
      {"sweep",
       "Component-count sweep over a lambda grid with repeated splits; writes sweep.csv (columns: lambda, k, "
       "rmse_mean, rmse_std, nll_mean, nll_std, n_ok, n_failed) and the argmin-NLL K in manifest.json.",
       concat({data_keys(), split_keys(), only(model_keys(), {"hidden", "activation"}), train_keys(),
               {{"k_values", "1,2,3,4", "component counts to try"},
                {"lambda_values", "0,0.001,0.01,0.1", "penalty weights to try"},
                {"sweep_trials", "3", "random splits per cell"}},
               seed_key(), out_key()},
              bench_split),
       cmd_sweep},
      {"benchmark",
       "Repeated random-split benchmark; writes trials.csv (columns: trial, seed, rmse, nll, epochs_run, error) "
       "and mean/std in manifest.json.",
       concat({data_keys(), split_keys(), model_keys(), train_keys(), {{"trials", "20", "number of random splits"}},
               seed_key(), out_key()},
              bench_split),
       cmd_benchmark},
      {"verify", "Oracle, loss-identity, gradient and invariant checks; prints a per-check table.",
       concat({{{"seed", "1", "seed for every randomized check"},
                {"perturb_loss", "0", "constant added to the per-component loss (fault injection)"},
                {"marginal_sets", "30", "parameter sets for the quadrature comparison"},
                {"moment_sets", "30", "parameter sets for the Monte-Carlo comparison"},
                {"mc_samples", "1000000", "Monte-Carlo samples per set"},
                {"identity_inputs", "1000", "inputs for the loss identity check"},
                {"gradient_configs", "10", "random network configurations"},
                {"gradient_weights", "200", "weights checked by central differences, over all configurations"},
                {"family_wise", "true", "widen the 3-SE moment bound for the number of comparisons"}},
               out_key()}),
       cmd_verify},
  };
}

bool is_bool_key(const KeySpec& k) { return k.fallback == "true" || k.fallback == "false"; }

int run(int argc, char** argv) {
  CLI::App app{"Mixture-of-Gaussian evidential regression.\n"
               "Settings come from --config FILE (key = value lines, or a manifest.json from an earlier run) and "
               "are overridden by flags. Exit codes: 0 ok, 1 config, 2 data/IO, 3 divergence, 4 verification "
               "failure.",
               "mogel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mogel 1.0");

  const std::vector<Command> cmds = commands();
  std::map<std::string, std::string> overrides;
  std::string config_path;
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.description);
    sub->add_option("--config", config_path, "key = value file or manifest.json");
    for (const auto& k : c.keys) {
      std::string names = "--" + k.name;
      if (k.name.find('_') != std::string::npos) {
        std::string dashed = k.name;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      const std::string help = k.help + " [default: " + (k.fallback.empty() ? "none" : k.fallback) + "]";
      CLI::Option* opt = sub->add_option_function<std::string>(
          names, [&overrides, key = k.name](const std::string& v) { overrides[key] = v; }, help);
      if (is_bool_key(k)) opt->expected(0, 1)->default_str("true");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    RunConfig cfg(cmds[i].name, cmds[i].keys);
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cmds[i].run(cfg);
  }
  return kConfig;
}

}  // namespace
}  // namespace mogel::cli

int main(int argc, char** argv) {
  using namespace mogel;
  try {
    return cli::run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return cli::kData;
  } catch (const TrainingError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return cli::kDiverged;
  } catch (const NumericError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return cli::kDiverged;
  } catch (const CoverageError& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return cli::kVerifyFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kData;
  }
}
