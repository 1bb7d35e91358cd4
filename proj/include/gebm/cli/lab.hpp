#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gebm::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDiverged = 2, kAssertionFailed = 3 };

/// GEBM_LAB_OUT when set, else "gebm_out".
std::filesystem::path default_out_root();

/// Each command fills in defaults, writes config-echo.json into `out_dir`
/// and returns the effective config. Running the command again on that echo
/// reproduces every output file byte for byte (bench's timing.json aside).
/// Errors propagate as exceptions; run() maps them to exit codes.
nlohmann::json cmd_train(const nlohmann::json& config, const std::filesystem::path& out_dir,
                         std::ostream& log);
nlohmann::json cmd_sample(const nlohmann::json& config, const std::filesystem::path& out_dir,
                          std::ostream& log);
/// Also returns {value, family, config} on `log` as one JSON line.
nlohmann::json cmd_kale(const nlohmann::json& config, const std::filesystem::path& out_dir,
                        std::ostream& log);
/// Returns true when every assertion of the experiment passed.
bool cmd_bench(const nlohmann::json& config, const std::filesystem::path& out_root, std::ostream& log);

/// Full command line (args[0] is the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gebm::cli
