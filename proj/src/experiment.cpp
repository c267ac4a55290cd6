#include "mmfl/experiment.hpp"

#include <chrono>
#include <cmath>

#include "mmfl/random.hpp"

namespace mmfl {

std::size_t FederationConfig::effective_min_count(std::size_t train_size) const {
  if (min_count) return *min_count;
  return std::max<std::size_t>(1, train_size * 50 / 13800);
}

void ExperimentConfig::validate() const {
  if (regime.global_epochs < 1) throw ConfigError("global_epochs must be at least 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (federation.participants < 1) throw ConfigError("participants must be at least 1");
  if (federation.local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
  if (federation.local_batch < 1) throw ConfigError("local_batch must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  split.validate();
  if (!std::isfinite(model.scale) || model.scale <= 0.0) throw ConfigError("model scale must be positive");
  if (!(model.leaky_slope > 0.0 && model.leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0, 1)");
  if (data.kind == DataSource::Kind::synthetic) {
    data.synthetic.validate();
  } else {
    const bool separate = !data.image_csv.empty() && !data.audio_csv.empty() && !data.label_csv.empty();
    const bool combined = !data.combined_csv.empty();
    if (separate == combined)
      throw ConfigError("csv data needs either image_csv, audio_csv and label_csv, or combined_csv alone");
  }
}

MultimodalDataset load_dataset(const DataSource& source) {
  MultimodalDataset ds;
  if (source.kind == DataSource::Kind::synthetic) {
    ds = generate_synthetic(source.synthetic);
  } else if (!source.combined_csv.empty()) {
    ds = load_csv_features(source.combined_csv, source.class_names);
  } else {
    ds = load_csv_features(source.image_csv, source.audio_csv, source.label_csv, source.class_names);
  }
  ds.validate();
  return ds;
}

FederationSetup make_setup(const ExperimentConfig& cfg, std::uint64_t seed, const MultimodalDataset& data,
                           const SplitIndices& split) {
  FederationSetup setup;
  setup.regime = cfg.regime;
  setup.split = split;
  setup.training = {cfg.learning_rate, cfg.temperature, seed};
  setup.eval_batch = cfg.batch;
  setup.threads = cfg.threads;

  ModelConfig mc = cfg.model;
  mc.image_dim = data.image_dim();
  mc.audio_dim = data.audio_dim();
  mc.class_count = data.class_count;
  const auto model_seed = derive_seed({seed, 0x30de1});
  const auto groups = cfg.regime.groups();
  for (Group g : groups) setup.models.emplace(g, build_model(model_kind(g), mc, model_seed));

  auto enlist = [&](Group g, const std::vector<IndexList>& holdings, int local_epochs, int local_batch) {
    auto& list = setup.participants[g];
    for (std::size_t k = 0; k < holdings.size(); ++k)
      list.push_back({static_cast<int>(k), g, holdings[k], local_epochs, local_batch});
  };

  const auto& fed = cfg.federation;
  const auto partition_seed = derive_seed({seed, 0x9a27});
  switch (cfg.regime.kind) {
    case RegimeKind::centralized_baseline:
      for (Group g : groups) enlist(g, {split.train}, 1, cfg.batch);
      break;
    case RegimeKind::fl_baseline:
    case RegimeKind::framework_balanced:
      for (Group g : groups) {
        const auto p = partition_balanced(split.train, fed.participants,
                                          derive_seed({partition_seed, static_cast<std::uint64_t>(g)}));
        enlist(g, p.participants, fed.local_epochs, fed.local_batch);
      }
      break;
    case RegimeKind::framework_unbalanced_paired:
    case RegimeKind::framework_unbalanced_random: {
      const std::vector<IndexList> trains(groups.size(), split.train);
      const auto min_count = fed.effective_min_count(split.train.size());
      const auto parts = cfg.regime.kind == RegimeKind::framework_unbalanced_paired
                             ? partition_unbalanced_paired(trains, fed.participants, min_count, partition_seed)
                             : partition_unbalanced_random(trains, fed.participants, min_count, partition_seed);
      for (std::size_t i = 0; i < groups.size(); ++i) enlist(groups[i], parts[i].participants, fed.local_epochs, fed.local_batch);
      break;
    }
  }
  return setup;
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const MultimodalDataset& data,
                    const SplitIndices& split) {
  const FederationSetup setup = make_setup(cfg, seed, data, split);
  FederationState state = initial_state(setup);
  for (int e = 0; e < cfg.regime.global_epochs; ++e) state = run_global_epoch(std::move(state), setup, data);

  SeedResult result;
  result.seed = seed;
  result.curves = std::move(state.history);
  result.aggregation_calls = state.aggregation_calls;
  for (const auto& [g, model] : setup.models) {
    const auto eval = evaluate(model, state.global.at(g), data, split.test, setup.training, setup.eval_batch);
    const auto name = modality_name(g);
    result.test_loss[name] = eval.loss;
    if (model.kind == ModelKind::contrastive) continue;
    const auto labels = data.label_rows(split.test);
    result.test[name] = {eval.accuracy, eval.loss, confusion(eval.predictions, labels, data.class_count)};
  }
  return result;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const MultimodalDataset data = load_dataset(cfg.data);
  const SplitIndices split = mmfl::split(data, cfg.split);

  ExperimentReport report;
  report.config = cfg;
  for (auto seed : cfg.seeds) report.runs.push_back(run_seed(cfg, seed, data, split));

  const auto n = static_cast<double>(report.runs.size());
  for (const auto& run : report.runs) {
    for (const auto& [series, values] : run.curves) {
      auto& mean = report.mean_curves[series];
      mean.resize(values.size(), 0.0);
      for (std::size_t i = 0; i < values.size(); ++i) mean[i] += values[i] / n;
    }
    for (const auto& [modality, result] : run.test) {
      report.mean_test_accuracy[modality] += result.accuracy / n;
      auto [it, inserted] = report.confusion.try_emplace(modality, result.confusion);
      if (!inserted) it->second += result.confusion;
    }
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void attach_delta_gaps(ExperimentReport& report, const std::map<std::string, double>& centralized_accuracy) {
  report.delta_gaps.clear();
  for (const auto& [modality, acc] : report.mean_test_accuracy) {
    auto it = centralized_accuracy.find(modality);
    if (it != centralized_accuracy.end()) report.delta_gaps[modality] = delta_gap(acc, it->second);
  }
}

}  // namespace mmfl
