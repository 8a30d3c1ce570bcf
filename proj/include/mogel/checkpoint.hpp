#pragma once

// Versioned text checkpoint: network spec, optional standardization, then
// every layer in declared order. Numbers are written with 17 significant
// digits so a save/load cycle is lossless.
//
//   mogel-checkpoint 1
//   input_dim <D>
//   hidden_layers <L> <w_1> ... <w_L>
//   activation relu|tanh
//   n_components <K>
//   standardization 0|1
//   [feature_means <D> ...]  [feature_stds <D> ...]  [target <mean> <std>]
//   layer <name> <rows> <cols>      (weight values, row-major)
//   bias <cols>                     (bias values)
//   ...
//   end

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "mogel/datasets.hpp"
#include "mogel/error.hpp"
#include "mogel/network.hpp"

namespace mogel {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  NetworkWeights weights;
  std::optional<Standardization> standardization;
};

/// Formats a double with 17 significant digits.
inline std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes via a temporary sibling file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string serialize_checkpoint(const Checkpoint& c) {
  const NetworkSpec& s = c.weights.spec;
  std::ostringstream out;
  out << "mogel-checkpoint " << kCheckpointVersion << "\n";
  out << "input_dim " << s.input_dim << "\n";
  out << "hidden_layers " << s.hidden_layers.size();
  for (int h : s.hidden_layers) out << " " << h;
  out << "\nactivation " << to_string(s.activation) << "\n";
  out << "n_components " << s.n_components << "\n";
  out << "standardization " << (c.standardization ? 1 : 0) << "\n";
  if (c.standardization) {
    const Standardization& z = *c.standardization;
    out << "feature_means " << z.feature_means.size();
    for (Eigen::Index j = 0; j < z.feature_means.size(); ++j) out << " " << format_exact(z.feature_means(j));
    out << "\nfeature_stds " << z.feature_stds.size();
    for (Eigen::Index j = 0; j < z.feature_stds.size(); ++j) out << " " << format_exact(z.feature_stds(j));
    out << "\ntarget " << format_exact(z.target_mean) << " " << format_exact(z.target_std) << "\n";
  }
  c.weights.for_each_layer([&](const std::string& name, const DenseLayer& l) {
    out << "layer " << name << " " << l.weight.rows() << " " << l.weight.cols() << "\n";
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) out << (j ? " " : "") << format_exact(l.weight(i, j));
      out << "\n";
    }
    out << "bias " << l.bias.size() << "\n";
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) out << (j ? " " : "") << format_exact(l.bias(j));
    out << "\n";
  });
  out << "end\n";
  return out.str();
}

namespace detail {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }

  void expect(const std::string& keyword) {
    const std::string w = word();
    if (w != keyword) fail("expected '" + keyword + "', found '" + w + "'");
  }

  long long integer() {
    const std::string w = word();
    long long v = 0;
    const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("expected an integer, found '" + w + "'");
    return v;
  }

  double real() {
    const std::string w = word();
    double v = 0.0;
    const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("expected a number, found '" + w + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const { throw DataError(origin_ + ": malformed checkpoint: " + what); }

 private:
  std::istream& in_;
  std::string origin_;
};

}  // namespace detail

inline Checkpoint parse_checkpoint(std::istream& in, const std::string& origin = "checkpoint") {
  detail::TokenReader r(in, origin);
  r.expect("mogel-checkpoint");
  const long long version = r.integer();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));

  NetworkSpec spec;
  r.expect("input_dim");
  spec.input_dim = static_cast<int>(r.integer());
  r.expect("hidden_layers");
  spec.hidden_layers.resize(static_cast<std::size_t>(r.integer()));
  for (int& h : spec.hidden_layers) h = static_cast<int>(r.integer());
  r.expect("activation");
  try {
    spec.activation = activation_from_string(r.word());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  r.expect("n_components");
  spec.n_components = static_cast<int>(r.integer());
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  Checkpoint c{NetworkWeights(spec), std::nullopt};
  r.expect("standardization");
  if (r.integer() == 1) {
    Standardization z;
    r.expect("feature_means");
    z.feature_means.resize(r.integer());
    for (Eigen::Index j = 0; j < z.feature_means.size(); ++j) z.feature_means(j) = r.real();
    r.expect("feature_stds");
    z.feature_stds.resize(r.integer());
    for (Eigen::Index j = 0; j < z.feature_stds.size(); ++j) z.feature_stds(j) = r.real();
    r.expect("target");
    z.target_mean = r.real();
    z.target_std = r.real();
    if (z.feature_means.size() != spec.input_dim || z.feature_stds.size() != spec.input_dim) {
      r.fail("standardization width does not match input_dim");
    }
    c.standardization = z;
  }

  c.weights.for_each_layer([&](const std::string& name, DenseLayer& l) {
    r.expect("layer");
    r.expect(name);
    if (r.integer() != l.weight.rows() || r.integer() != l.weight.cols()) r.fail("shape mismatch for layer " + name);
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = r.real();
    r.expect("bias");
    if (r.integer() != l.bias.size()) r.fail("bias size mismatch for layer " + name);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = r.real();
  });
  r.expect("end");
  if (!c.weights.all_finite()) r.fail("non-finite weight");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  return parse_checkpoint(in, path.string());
}

}  // namespace mogel
