#pragma once

// Run configuration for the command-line tool: a flat key/value table with
// per-command defaults, filled from a config file and then from flags.
//
// A config file is either `key = value` lines (`#` starts a comment) or a
// manifest written by an earlier run, whose "config" object is read back.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mogel/error.hpp"

namespace mogel::cli {

struct KeySpec {
  std::string name;
  std::string fallback;
  std::string help;
};

// Groups of keys, listed in the order they appear in manifests and --help.
inline const std::vector<KeySpec>& data_keys() {
  static const std::vector<KeySpec> k{
      {"data", "", "delimited text file; empty means synthetic data"},
      {"target", "-1", "target column: header name or 0-based index (negative counts from the end)"},
      {"delimiter", ",", "field separator: a single character, 'tab' or 'whitespace'"},
      {"header", "true", "first line holds column names"},
      {"synthetic", "linear", "synthetic kind when no file is given: linear, cubic, heteroscedastic_bimodal"},
      {"n", "500", "synthetic sample count"},
      {"noise_sigma", "0.1", "synthetic noise std (linear, cubic)"},
      {"noise_low", "0.05", "bimodal: low-noise branch std"},
      {"noise_high", "0.5", "bimodal: high-noise branch std"},
      {"noise_high_fraction", "0.5", "bimodal: fraction of samples on the high-noise branch"},
      {"x_min", "-1", "synthetic input range, lower end"},
      {"x_max", "1", "synthetic input range, upper end"},
      {"data_seed", "1", "seed for synthetic data generation"},
  };
  return k;
}

inline const std::vector<KeySpec>& split_keys() {
  static const std::vector<KeySpec> k{
      {"train_fraction", "0.8", "train share of the rows"},
      {"val_fraction", "0.1", "validation share of the rows"},
      {"test_fraction", "0.1", "test share of the rows"},
  };
  return k;
}

inline const std::vector<KeySpec>& model_keys() {
  static const std::vector<KeySpec> k{
      {"hidden", "64,64", "hidden layer widths, comma separated"},
      {"activation", "relu", "trunk activation: relu or tanh"},
      {"components", "1", "mixture components K"},
  };
  return k;
}

inline const std::vector<KeySpec>& train_keys() {
  static const std::vector<KeySpec> k{
      {"lambda", "0.01", "evidence penalty weight"},
      {"learning_rate", "0.001", "Adam step size"},
      {"batch_size", "64", "minibatch size"},
      {"max_epochs", "200", "epoch limit"},
      {"patience", "20", "epochs without validation improvement before stopping"},
      {"freeze_responsibilities", "false", "hold posterior responsibilities fixed within a step (classic EM)"},
  };
  return k;
}

inline const std::vector<KeySpec>& seed_key() {
  static const std::vector<KeySpec> k{{"seed", "1", "seed for splitting, initialization and shuffling"}};
  return k;
}

inline const std::vector<KeySpec>& out_key() {
  static const std::vector<KeySpec> k{{"out", "mogel_out", "output directory"}};
  return k;
}

using Table = std::map<std::string, std::string>;

class RunConfig {
 public:
  RunConfig(std::string command, std::vector<KeySpec> keys) : command_(std::move(command)), keys_(std::move(keys)) {
    for (const auto& k : keys_) values_[k.name] = k.fallback;
  }

  const std::string& command() const { return command_; }
  const std::vector<KeySpec>& keys() const { return keys_; }
  bool has_key(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    if (!has_key(key)) throw ConfigError("unknown key '" + key + "' for command " + command_);
    values_[key] = value;
  }

  /// Reads `key = value` lines or a previous run's manifest.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
      }
      if (!j.contains("config") || !j["config"].is_object()) {
        throw ConfigError(path.string() + ": manifest has no \"config\" object");
      }
      for (const auto& [k, v] : j["config"].items()) {
        if (!v.is_string()) throw ConfigError(path.string() + ": config value for '" + k + "' is not a string");
        set(k, v.get<std::string>());
      }
      return;
    }
    std::istringstream lines(text);
    std::string line;
    int no = 0;
    while (std::getline(lines, line)) {
      ++no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(no) + ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("internal: key '" + key + "' not defined for " + command_);
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) bad(key, "a finite number");
    return v;
  }

  long long integer(const std::string& key) const {
    const std::string& s = str(key);
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, "an integer");
    return v;
  }

  std::uint64_t seed(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) bad(key, "a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key, "true or false");
  }

  std::vector<long long> integers(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& part : pieces(key)) {
      long long v = 0;
      const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || p != part.data() + part.size()) bad(key, "a comma separated list of integers");
      out.push_back(v);
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : pieces(key)) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || p != part.data() + part.size() || !std::isfinite(v)) {
        bad(key, "a comma separated list of numbers");
      }
      out.push_back(v);
    }
    return out;
  }

  /// Every key with its effective value, as strings, in declaration order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& k : keys_) j[k.name] = values_.at(k.name);
    return j;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::vector<std::string> pieces(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    throw ConfigError("config key '" + key + "' must be " + expected + ", got '" + str(key) + "'");
  }

  std::string command_;
  std::vector<KeySpec> keys_;
  Table values_;
};

}  // namespace mogel::cli
