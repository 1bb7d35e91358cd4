#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gebm::bench {

struct MetricReport {
  std::string metric;
  /// Empty for aggregates over seeds.
  std::optional<std::uint64_t> seed;
  double value = 0.0;
  double std_error = 0.0;
  nlohmann::json config;
  double wall_time = 0.0;
};

/// A hard pass/fail check of an experiment.
struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct BenchResult {
  std::string experiment;
  nlohmann::json config;
  std::vector<MetricReport> reports;
  std::vector<Assertion> assertions;
  bool passed() const;
  /// Reports with the given metric name, in seed order.
  std::vector<MetricReport> metric(const std::string& name) const;
};

const std::vector<std::string>& registered_experiments();

/// Runs a registered experiment. `config` holds "seeds" plus experiment keys;
/// missing keys take defaults and unknown keys raise ConfigError. With a
/// non-empty `out_root` the results are written under out_root/<name>/:
/// summary.json, one <seed>/report.json (+ series CSVs) per seed, and
/// timing.json, the only file whose contents vary between identical runs.
BenchResult run_benchmark(const std::string& name, const nlohmann::json& config = nlohmann::json::object(),
                          const std::filesystem::path& out_root = {});

nlohmann::json to_json(const MetricReport& r, bool with_time = false);
nlohmann::json to_json(const BenchResult& r);

}  // namespace gebm::bench
