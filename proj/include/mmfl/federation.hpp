#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmfl/data.hpp"
#include "mmfl/metrics.hpp"
#include "mmfl/models.hpp"

namespace mmfl {

/// Participant groups. `fusion` holds paired data trained with the
/// late-fusion classifier (baseline regimes only); `multimodal` holds paired
/// data trained contrastively (framework regimes only).
enum class Group { image, audio, multimodal, fusion };

std::string to_string(Group group);
/// Name used for report series: image, audio, multimodal, image_audio.
std::string modality_name(Group group);
ModelKind model_kind(Group group);

enum class RegimeKind {
  centralized_baseline,
  fl_baseline,
  framework_balanced,
  framework_unbalanced_paired,
  framework_unbalanced_random,
};

std::string to_string(RegimeKind kind);
RegimeKind parse_regime(const std::string& name);

struct ExperimentRegime {
  RegimeKind kind = RegimeKind::framework_balanced;
  int global_epochs = 100;

  /// Groups that exist under this regime, in processing order.
  std::vector<Group> groups() const;
  bool uses_cross_modal_transfer() const;
};

struct ParticipantState {
  int id = 0;
  Group group = Group::image;
  IndexList sample_indices;
  int local_epochs = 10;
  int local_batch = 10;

  void validate(std::size_t dataset_size) const;
};

struct TrainingConfig {
  double learning_rate = 0.001;
  double temperature = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Seed of the shuffle for one local pass. `pass` counts passes over the
/// participant's data since training began (round * local_epochs + e), so a
/// single participant replays centralized training exactly.
std::uint64_t pass_seed(std::uint64_t seed, Group group, int participant, std::uint64_t pass);

/// Mini-batch SGD with cross-entropy on the participant's samples, starting
/// from `global`. Returns the updated map; `global` is not modified.
ParameterMapd local_train_supervised(const ModelBundle& model, const ParameterMapd& global,
                                     const ParticipantState& participant, const MultimodalDataset& data,
                                     const TrainingConfig& cfg, std::uint64_t round);

/// Mini-batch SGD with the NT-Xent objective on paired views. Labels are
/// never read.
ParameterMapd local_train_contrastive(const ModelBundle& model, const ParameterMapd& global,
                                      const ParticipantState& participant, const MultimodalDataset& data,
                                      const TrainingConfig& cfg, std::uint64_t round);

/// Mean loss and accuracy of a global model over `indices` (accuracy is NaN
/// for the contrastive model). Evaluated in chunks of `batch` rows.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};
Evaluation evaluate(const ModelBundle& model, const ParameterMapd& params, const MultimodalDataset& data,
                    std::span<const std::size_t> indices, const TrainingConfig& cfg, int batch);

using Curves = std::map<std::string, std::vector<double>>;

/// Everything that stays fixed across global epochs of one run.
struct FederationSetup {
  ExperimentRegime regime;
  std::map<Group, ModelBundle> models;
  std::map<Group, std::vector<ParticipantState>> participants;
  SplitIndices split;
  TrainingConfig training;
  int eval_batch = 10;
  int threads = 1;
};

struct FederationState {
  std::map<Group, ParameterMapd> global;
  int epoch = 0;
  std::size_t aggregation_calls = 0;
  Curves history;
};

/// Initial state: every group's global map is its model's initial parameters.
FederationState initial_state(const FederationSetup& setup);

/// One synchronous round: local training of every participant, then
/// aggregation per the regime, then per-epoch metrics.
FederationState run_global_epoch(FederationState state, const FederationSetup& setup, const MultimodalDataset& data);

}  // namespace mmfl
