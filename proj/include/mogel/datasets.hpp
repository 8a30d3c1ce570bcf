#pragma once

// Tabular regression data: delimited-text loading, synthetic generators with
// known ground truth, deterministic splits and train-split standardization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "mogel/error.hpp"

namespace mogel {

enum class Split : std::uint8_t { unassigned, train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "unassigned";
  }
}

/// Per-column affine maps applied to features and targets.
struct Standardization {
  Eigen::RowVectorXd feature_means;
  Eigen::RowVectorXd feature_stds;
  double target_mean = 0.0;
  double target_std = 1.0;

  Eigen::MatrixXd apply_features(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - feature_means).array().rowwise() / feature_stds.array();
  }
  double apply_target(double y) const { return (y - target_mean) / target_std; }
  double restore_target(double z) const { return z * target_std + target_mean; }
};

struct RegressionDataset {
  Eigen::MatrixXd features;  // N x D
  Eigen::VectorXd targets;   // N
  std::vector<std::string> feature_names;
  std::string target_name;
  std::vector<Split> split_assignment;  // empty until split()
  std::optional<Standardization> standardization;  // set once features/targets are standardized
  std::map<std::string, std::string> metadata;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dims() const { return features.cols(); }

  std::vector<Eigen::Index> indices(Split s) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < split_assignment.size(); ++i) {
      if (split_assignment[i] == s) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  Eigen::MatrixXd features_of(Split s) const { return features(indices(s), Eigen::all); }
  Eigen::VectorXd targets_of(Split s) const { return targets(indices(s)); }

  std::vector<double> target_vector(Split s) const {
    const Eigen::VectorXd t = targets_of(s);
    return {t.data(), t.data() + t.size()};
  }
};

// ---------------------------------------------------------------------------
// Delimited text

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits on `delim`; a space delimiter means runs of blanks/tabs.
inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ' || delim == '\t') {
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.emplace_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string join(const std::vector<std::string>& xs, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

}  // namespace detail

/// All-numeric delimited table with its column names.
struct NumericTable {
  std::vector<std::string> header;  // "c0", "c1", ... when the file has none
  Eigen::MatrixXd values;
};

inline NumericTable load_table(const std::filesystem::path& path, char delimiter = ',', bool has_header = true) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::vector<std::vector<std::string>> cells;
  std::string line;
  NumericTable t;
  bool first = true;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto row = detail::split_line(line, delimiter);
    if (first && has_header) {
      t.header = std::move(row);
      first = false;
      continue;
    }
    first = false;
    cells.push_back(std::move(row));
  }
  if (cells.empty()) throw DataError("dataset is empty: " + path.string());

  const std::size_t width = has_header ? t.header.size() : cells.front().size();
  if (!has_header) {
    for (std::size_t j = 0; j < width; ++j) t.header.push_back("c" + std::to_string(j));
  }
  t.values.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& row = cells[i];
    const std::size_t file_row = i + (has_header ? 2 : 1);
    if (row.size() != width) {
      throw DataError(path.string() + ": row " + std::to_string(file_row) + " has " + std::to_string(row.size()) +
                      " columns, expected " + std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const auto v = detail::parse_number(row[j]);
      if (!v) {
        throw DataError(path.string() + ": non-numeric cell '" + row[j] + "' at row " + std::to_string(file_row) +
                        ", column '" + t.header[j] + "'");
      }
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return t;
}

/// Column index for a header name, or a 0-based index (negative counts from
/// the end) when the name is not found.
inline std::size_t resolve_column(const std::vector<std::string>& header, const std::string& column) {
  if (auto it = std::find(header.begin(), header.end(), column); it != header.end()) {
    return static_cast<std::size_t>(it - header.begin());
  }
  if (auto idx = detail::parse_number(column); idx && *idx == std::floor(*idx)) {
    const long long j = static_cast<long long>(*idx);
    const long long w = static_cast<long long>(header.size());
    if (j >= -w && j < w) return static_cast<std::size_t>(j < 0 ? j + w : j);
  }
  throw SchemaError("target column '" + column + "' not found; available columns: " + detail::join(header));
}

/// Loads a numeric table and separates the target column from the features.
inline RegressionDataset load_delimited(const std::filesystem::path& path, const std::string& target_column,
                                        char delimiter = ',', bool has_header = true) {
  NumericTable t = load_table(path, delimiter, has_header);
  const std::size_t target = resolve_column(t.header, target_column);
  if (t.header.size() < 2) throw SchemaError(path.string() + ": need at least one feature column besides the target");

  RegressionDataset data;
  std::vector<Eigen::Index> feature_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == target) {
      data.target_name = t.header[j];
    } else {
      data.feature_names.push_back(t.header[j]);
      feature_cols.push_back(static_cast<Eigen::Index>(j));
    }
  }
  data.features = t.values(Eigen::all, feature_cols);
  data.targets = t.values.col(static_cast<Eigen::Index>(target));
  data.metadata["source"] = "file";
  data.metadata["path"] = path.string();
  data.metadata["target_column"] = data.target_name;
  return data;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticKind { linear, cubic, heteroscedastic_bimodal };

inline std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::linear: return "linear";
    case SyntheticKind::cubic: return "cubic";
    default: return "heteroscedastic_bimodal";
  }
}

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "linear") return SyntheticKind::linear;
  if (s == "cubic") return SyntheticKind::cubic;
  if (s == "heteroscedastic_bimodal" || s == "bimodal") return SyntheticKind::heteroscedastic_bimodal;
  throw ConfigError("unknown synthetic kind '" + s + "' (expected linear, cubic, heteroscedastic_bimodal)");
}

struct NoiseParams {
  double sigma = 0.1;        // linear and cubic
  double sigma_low = 0.05;   // heteroscedastic_bimodal
  double sigma_high = 0.5;
  double high_fraction = 0.5;
};

/// x ~ U(x_range); y = f(x) + N(0, s^2) with f(x) = 2x (linear) or x^3, and
/// s = sigma, or s in {sigma_low, sigma_high} per point for the bimodal kind.
inline RegressionDataset make_synthetic(SyntheticKind kind, int n, const NoiseParams& noise,
                                        std::pair<double, double> x_range, std::uint64_t seed) {
  if (n < 10) throw ConfigError("make_synthetic: n must be >= 10, got " + std::to_string(n));
  if (!(x_range.first < x_range.second) || !std::isfinite(x_range.first) || !std::isfinite(x_range.second)) {
    throw ConfigError("make_synthetic: x range must be finite with lo < hi");
  }
  if (!(noise.sigma >= 0.0 && noise.sigma_low >= 0.0 && noise.sigma_high >= 0.0)) {
    throw ConfigError("make_synthetic: noise scales must be >= 0");
  }
  if (!(noise.high_fraction >= 0.0 && noise.high_fraction <= 1.0)) {
    throw ConfigError("make_synthetic: high_fraction must lie in [0, 1]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x_range.first, x_range.second);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution high(noise.high_fraction);

  RegressionDataset data;
  data.features.resize(n, 1);
  data.targets.resize(n);
  data.feature_names = {"x"};
  data.target_name = "y";
  for (int i = 0; i < n; ++i) {
    const double x = ux(rng);
    double mean = 0.0, sd = noise.sigma;
    switch (kind) {
      case SyntheticKind::linear: mean = 2.0 * x; break;
      case SyntheticKind::cubic: mean = x * x * x; break;
      case SyntheticKind::heteroscedastic_bimodal:
        mean = x * x * x;
        sd = high(rng) ? noise.sigma_high : noise.sigma_low;
        break;
    }
    data.features(i, 0) = x;
    data.targets(i) = mean + sd * z(rng);
  }

  std::ostringstream formula;
  formula.precision(9);
  switch (kind) {
    case SyntheticKind::linear: formula << "y = 2x + N(0, " << noise.sigma << "^2)"; break;
    case SyntheticKind::cubic: formula << "y = x^3 + N(0, " << noise.sigma << "^2)"; break;
    case SyntheticKind::heteroscedastic_bimodal:
      formula << "y = x^3 + N(0, s^2), s = " << noise.sigma_high << " w.p. " << noise.high_fraction << " else "
              << noise.sigma_low;
      break;
  }
  formula << ", x ~ U(" << x_range.first << ", " << x_range.second << ")";
  data.metadata["source"] = "synthetic";
  data.metadata["kind"] = to_string(kind);
  data.metadata["formula"] = formula.str();
  data.metadata["seed"] = std::to_string(seed);
  data.metadata["n"] = std::to_string(n);
  return data;
}

// ---------------------------------------------------------------------------
// Splits and standardization

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Shuffled, disjoint and exhaustive assignment; counts by largest remainders.
inline RegressionDataset split(RegressionDataset data, const SplitFractions& f, std::uint64_t seed) {
  const double fr[3] = {f.train, f.val, f.test};
  for (double v : fr) {
    if (!(v > 0.0)) throw ConfigError("split: fractions must be > 0");
  }
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
  const auto n = static_cast<std::size_t>(data.rows());
  if (n < 3) throw DataError("split: need at least 3 rows");

  std::size_t counts[3];
  double rem[3];
  std::size_t used = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = fr[s] * static_cast<double>(n);
    counts[s] = static_cast<std::size_t>(std::floor(exact));
    rem[s] = exact - std::floor(exact);
    used += counts[s];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++counts[order[j % 3]];

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  data.split_assignment.assign(n, Split::unassigned);
  std::size_t at = 0;
  const Split labels[3] = {Split::train, Split::val, Split::test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) data.split_assignment[perm[at++]] = labels[s];
  }
  data.metadata["split_seed"] = std::to_string(seed);
  std::ostringstream fs;
  fs.precision(9);
  fs << f.train << "," << f.val << "," << f.test;
  data.metadata["split_fractions"] = fs.str();
  return data;
}

/// Scales features and targets with statistics of the train split (population
/// standard deviation; constant columns keep std 1).
inline RegressionDataset standardize(RegressionDataset data) {
  if (data.standardization) throw DataError("standardize: dataset is already standardized");
  const auto train = data.indices(Split::train);
  if (train.empty()) throw DataError("standardize: no train rows (call split first)");

  const Eigen::MatrixXd xt = data.features(train, Eigen::all);
  const Eigen::VectorXd yt = data.targets(train);
  Standardization s;
  s.feature_means = xt.colwise().mean();
  s.feature_stds = ((xt.rowwise() - s.feature_means).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.feature_stds.size(); ++j) {
    if (!(s.feature_stds(j) > 1e-12)) s.feature_stds(j) = 1.0;
  }
  s.target_mean = yt.mean();
  s.target_std = std::sqrt((yt.array() - s.target_mean).square().mean());
  if (!(s.target_std > 1e-12)) s.target_std = 1.0;
  if (!s.feature_means.allFinite() || !s.feature_stds.allFinite() || !std::isfinite(s.target_mean) ||
      !std::isfinite(s.target_std)) {
    throw DataError("standardize: non-finite statistics (values too large or not finite)");
  }

  data.features = s.apply_features(data.features);
  data.targets = (data.targets.array() - s.target_mean) / s.target_std;
  data.standardization = s;
  return data;
}

/// Applies statistics computed elsewhere (e.g. stored with a checkpoint).
inline RegressionDataset apply_standardization(RegressionDataset data, const Standardization& s) {
  if (data.standardization) throw DataError("apply_standardization: dataset is already standardized");
  if (s.feature_means.size() != data.dims()) {
    throw DataError("dataset has " + std::to_string(data.dims()) + " features, standardization expects " +
                    std::to_string(s.feature_means.size()));
  }
  data.features = s.apply_features(data.features);
  data.targets = (data.targets.array() - s.target_mean) / s.target_std;
  data.standardization = s;
  return data;
}

inline std::vector<double> destandardize_targets(std::span<const double> z, const Standardization& s) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = s.restore_target(z[i]);
  return out;
}

inline nlohmann::json standardization_json(const Standardization& s) {
  return {{"feature_means", std::vector<double>(s.feature_means.data(), s.feature_means.data() + s.feature_means.size())},
          {"feature_stds", std::vector<double>(s.feature_stds.data(), s.feature_stds.data() + s.feature_stds.size())},
          {"target_mean", s.target_mean},
          {"target_std", s.target_std}};
}

/// Provenance, split sizes and standardization statistics.
inline nlohmann::json dataset_manifest(const RegressionDataset& data) {
  nlohmann::json j;
  j["rows"] = data.rows();
  j["features"] = data.feature_names;
  j["target"] = data.target_name;
  j["provenance"] = data.metadata;
  if (!data.split_assignment.empty()) {
    j["split_sizes"] = {{"train", data.indices(Split::train).size()},
                        {"val", data.indices(Split::val).size()},
                        {"test", data.indices(Split::test).size()}};
  }
  if (data.standardization) j["standardization"] = standardization_json(*data.standardization);
  return j;
}

}  // namespace mogel
