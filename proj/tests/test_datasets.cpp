#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mogel/datasets.hpp"

using namespace mogel;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("mogel_test_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(LoadDelimited, ParsesSmallCsv) {
  const auto p = write_temp("small.csv", "x,y\n1,2\n2,4\n3,6\n");
  const auto d = load_delimited(p, "y");
  ASSERT_EQ(d.rows(), 3);
  ASSERT_EQ(d.dims(), 1);
  EXPECT_EQ(d.features(0, 0), 1.0);
  EXPECT_EQ(d.features(2, 0), 3.0);
  EXPECT_EQ(d.targets(0), 2.0);
  EXPECT_EQ(d.targets(1), 4.0);
  EXPECT_EQ(d.targets(2), 6.0);
  EXPECT_EQ(d.feature_names, std::vector<std::string>{"x"});
  EXPECT_TRUE(d.split_assignment.empty());
}

TEST(LoadDelimited, UnknownTargetNamesAvailableColumns) {
  const auto p = write_temp("schema.csv", "x,y\n1,2\n");
  try {
    load_delimited(p, "z");
    FAIL();
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("x"), std::string::npos);
    EXPECT_NE(msg.find("y"), std::string::npos);
  }
}

TEST(LoadDelimited, HeaderlessWhitespace) {
  const auto p = write_temp("ws.txt", "1 2 3\n4   5\t6\n");
  const auto d = load_delimited(p, "-1", ' ', false);
  ASSERT_EQ(d.rows(), 2);
  EXPECT_EQ(d.dims(), 2);
  EXPECT_EQ(d.features(0, 0), 1.0);
  EXPECT_EQ(d.targets(1), 6.0);
  const auto first = load_delimited(p, "0", ' ', false);
  EXPECT_EQ(first.targets(0), 1.0);
}

TEST(LoadDelimited, Errors) {
  EXPECT_THROW(load_delimited("/nonexistent/file.csv", "y"), DataError);
  const auto bad = write_temp("bad.csv", "x,y\n1,2\n3,abc\n");
  try {
    load_delimited(bad, "y");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'y'"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_delimited(write_temp("empty.csv", "x,y\n"), "y"), DataError);
  EXPECT_THROW(load_delimited(write_temp("ragged.csv", "x,y\n1,2,3\n"), "y"), DataError);
}

TEST(Synthetic, CubicWithoutNoiseIsExact) {
  NoiseParams n;
  n.sigma = 0.0;
  const auto d = make_synthetic(SyntheticKind::cubic, 100, n, {-4, 4}, 1);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const double x = d.features(i, 0);
    EXPECT_EQ(d.targets(i), x * x * x);
    EXPECT_GE(x, -4.0);
    EXPECT_LT(x, 4.0);
  }
  EXPECT_NE(d.metadata.at("formula").find("x^3"), std::string::npos);
}

TEST(Synthetic, BimodalResidualVarianceBetweenComponents) {
  const auto d = make_synthetic(SyntheticKind::heteroscedastic_bimodal, 5000, NoiseParams{}, {-1, 1}, 2);
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const double r = d.targets(i) - std::pow(d.features(i, 0), 3);
    s2 += r * r;
  }
  s2 /= static_cast<double>(d.rows());
  EXPECT_GT(s2, 0.05 * 0.05);
  EXPECT_LT(s2, 0.5 * 0.5);
}

TEST(Synthetic, DeterministicAndValidated) {
  const auto a = make_synthetic(SyntheticKind::linear, 50, NoiseParams{}, {-1, 1}, 7);
  const auto b = make_synthetic(SyntheticKind::linear, 50, NoiseParams{}, {-1, 1}, 7);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_THROW(make_synthetic(SyntheticKind::linear, 5, NoiseParams{}, {-1, 1}, 7), ConfigError);
  EXPECT_THROW(make_synthetic(SyntheticKind::linear, 50, NoiseParams{}, {1, -1}, 7), ConfigError);
  NoiseParams bad;
  bad.high_fraction = 1.5;
  EXPECT_THROW(make_synthetic(SyntheticKind::heteroscedastic_bimodal, 50, bad, {-1, 1}, 7), ConfigError);
}

TEST(SplitTest, LargestRemainderCounts) {
  const auto d = split(make_synthetic(SyntheticKind::linear, 10, NoiseParams{}, {-1, 1}, 1), {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(d.indices(Split::train).size(), 8u);
  EXPECT_EQ(d.indices(Split::val).size(), 1u);
  EXPECT_EQ(d.indices(Split::test).size(), 1u);
  const auto e = split(make_synthetic(SyntheticKind::linear, 11, NoiseParams{}, {-1, 1}, 1), {0.5, 0.25, 0.25}, 3);
  EXPECT_EQ(e.indices(Split::train).size() + e.indices(Split::val).size() + e.indices(Split::test).size(), 11u);
}

TEST(SplitTest, PartitionAndSeedDependence) {
  const auto base = make_synthetic(SyntheticKind::linear, 1000, NoiseParams{}, {-1, 1}, 1);
  const auto a = split(base, {0.7, 0.2, 0.1}, 10);
  const auto b = split(base, {0.7, 0.2, 0.1}, 11);
  const auto a2 = split(base, {0.7, 0.2, 0.1}, 10);
  EXPECT_EQ(a.split_assignment, a2.split_assignment);
  EXPECT_NE(a.split_assignment, b.split_assignment);
  std::set<Eigen::Index> all;
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (auto i : a.indices(s)) EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_THROW(split(base, {0.7, 0.2, 0.2}, 1), ConfigError);
  EXPECT_THROW(split(base, {1.0, 0.0, 0.0}, 1), ConfigError);
}

TEST(Standardize, TrainStatistics) {
  auto d = make_synthetic(SyntheticKind::cubic, 400, NoiseParams{}, {-4, 4}, 5);
  Eigen::MatrixXd wide(d.rows(), 3);
  wide.col(0) = d.features.col(0);
  wide.col(1) = d.features.col(0) * 100.0 + Eigen::VectorXd::Constant(d.rows(), 7.0);
  wide.col(2).setConstant(3.0);
  d.features = wide;
  d.feature_names = {"x", "x100", "const"};
  const auto original = d.targets;
  const auto s = standardize(split(d, {0.8, 0.1, 0.1}, 9));
  const Eigen::MatrixXd xt = s.features_of(Split::train);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double mean = xt.col(j).mean();
    const double sd = std::sqrt((xt.col(j).array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(sd, 1.0, 1e-6);
  }
  EXPECT_EQ(s.standardization->feature_stds(2), 1.0);
  EXPECT_NEAR(s.targets_of(Split::train).mean(), 0.0, 1e-9);

  // Statistics come from the train split only.
  const Eigen::VectorXd raw_train = original(s.indices(Split::train));
  EXPECT_NEAR(s.standardization->target_mean, raw_train.mean(), 1e-12);

  const std::vector<double> z(s.targets.data(), s.targets.data() + s.targets.size());
  const auto back = destandardize_targets(z, *s.standardization);
  for (Eigen::Index i = 0; i < original.size(); ++i) EXPECT_NEAR(back[i], original(i), 1e-10);

  EXPECT_THROW(standardize(s), DataError);
  EXPECT_THROW(standardize(d), DataError);
}

TEST(Manifest, RecordsProvenanceAndStats) {
  const auto s = standardize(split(make_synthetic(SyntheticKind::linear, 100, NoiseParams{}, {-1, 1}, 4), {0.8, 0.1, 0.1}, 2));
  const auto j = dataset_manifest(s);
  EXPECT_EQ(j["rows"], 100);
  EXPECT_EQ(j["provenance"]["seed"], "4");
  EXPECT_EQ(j["split_sizes"]["train"], 80);
  EXPECT_TRUE(j["standardization"].contains("target_std"));
}
