#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmfl/data.hpp"
#include "mmfl/federation.hpp"
#include "mmfl/metrics.hpp"
#include "mmfl/models.hpp"

namespace mmfl {

struct DataSource {
  enum class Kind { synthetic, csv };
  Kind kind = Kind::synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path image_csv;
  std::filesystem::path audio_csv;
  std::filesystem::path label_csv;
  std::filesystem::path combined_csv;
  std::optional<std::vector<std::string>> class_names;
};

struct FederationConfig {
  int participants = 30;
  int local_epochs = 10;
  int local_batch = 10;
  /// Smallest holding in unbalanced regimes; defaults to 50 samples per
  /// 13800 training samples, at least 1.
  std::optional<std::size_t> min_count;

  std::size_t effective_min_count(std::size_t train_size) const;
};

struct ExperimentConfig {
  ExperimentRegime regime;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  DataSource data;
  SplitSpec split;
  ModelConfig model;  // input dims and class count are taken from the data
  double learning_rate = 0.001;
  int batch = 10;
  double temperature = 0.5;
  FederationConfig federation;
  int threads = 1;

  /// Throws ConfigError on the first invalid field.
  void validate() const;
};

/// Test-set outcome for one modality.
struct ModalityResult {
  double accuracy = 0.0;
  double loss = 0.0;
  ConfusionMatrix confusion{1};
};

struct SeedResult {
  std::uint64_t seed = 0;
  Curves curves;
  std::map<std::string, ModalityResult> test;  // supervised modalities
  std::map<std::string, double> test_loss;      // every modality, contrastive included
  std::size_t aggregation_calls = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SeedResult> runs;
  Curves mean_curves;
  std::map<std::string, double> mean_test_accuracy;
  std::map<std::string, ConfusionMatrix> confusion;  // summed over seeds
  std::map<std::string, double> delta_gaps;          // vs a centralized reference, if any
  double wall_clock_seconds = 0.0;
};

/// Loads or generates the dataset described by `source`.
MultimodalDataset load_dataset(const DataSource& source);

/// Models, participants and split for one seed of an experiment.
FederationSetup make_setup(const ExperimentConfig& cfg, std::uint64_t seed, const MultimodalDataset& data,
                           const SplitIndices& split);

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const MultimodalDataset& data,
                    const SplitIndices& split);

/// Validates, loads data, runs every seed and averages.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Fills `delta_gaps` from a centralized run's mean test accuracies.
void attach_delta_gaps(ExperimentReport& report, const std::map<std::string, double>& centralized_accuracy);

}  // namespace mmfl
