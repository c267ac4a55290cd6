#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mmfl/experiment.hpp"

namespace mmfl {

/// Process exit codes of the runner.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitData = 3, kExitInternal = 4 };

/// Environment variable holding the default output directory.
inline constexpr const char* kOutputDirEnv = "MMFL_OUTPUT_DIR";

struct RunnerConfig {
  ExperimentConfig experiment;
  std::filesystem::path output_dir;
  std::filesystem::path centralized_reference;
};

/// Parses an INI-style config (sections experiment, data, model, training,
/// federation, output). Unknown sections or keys are rejected; relative data
/// paths resolve against the config file's directory.
RunnerConfig parse_config_file(const std::filesystem::path& path);
RunnerConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentReport& report);

/// report.json, curves.csv and confusion_<modality>[_normalized].csv.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// Mean test accuracies of a report.json on disk.
std::map<std::string, double> read_mean_accuracies(const std::filesystem::path& report_json);

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

/// `run`: validate, execute, write outputs. Errors are reported as one line on `err`.
int run_command(const RunOptions& options, std::ostream& out, std::ostream& err);

/// `compare`: per-modality accuracies of two reports, their difference and gap.
int compare_command(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out,
                    std::ostream& err);

}  // namespace mmfl
