#include "mmfl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <thread>

#include "mmfl/aggregation.hpp"
#include "mmfl/losses.hpp"
#include "mmfl/random.hpp"

namespace mmfl {

std::string to_string(Group group) {
  switch (group) {
    case Group::image: return "image";
    case Group::audio: return "audio";
    case Group::multimodal: return "multimodal";
    case Group::fusion: return "fusion";
  }
  return "unknown";
}

std::string modality_name(Group group) {
  return group == Group::fusion ? "image_audio" : to_string(group);
}

ModelKind model_kind(Group group) {
  switch (group) {
    case Group::image: return ModelKind::image_classifier;
    case Group::audio: return ModelKind::audio_classifier;
    case Group::multimodal: return ModelKind::contrastive;
    case Group::fusion: return ModelKind::late_fusion;
  }
  throw InvariantError("unknown group");
}

std::string to_string(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::centralized_baseline: return "centralized_baseline";
    case RegimeKind::fl_baseline: return "fl_baseline";
    case RegimeKind::framework_balanced: return "framework_balanced";
    case RegimeKind::framework_unbalanced_paired: return "framework_unbalanced_paired";
    case RegimeKind::framework_unbalanced_random: return "framework_unbalanced_random";
  }
  return "unknown";
}

RegimeKind parse_regime(const std::string& name) {
  for (auto kind : {RegimeKind::centralized_baseline, RegimeKind::fl_baseline, RegimeKind::framework_balanced,
                    RegimeKind::framework_unbalanced_paired, RegimeKind::framework_unbalanced_random})
    if (to_string(kind) == name) return kind;
  throw ConfigError("unknown regime '" + name + "'");
}

std::vector<Group> ExperimentRegime::groups() const {
  if (uses_cross_modal_transfer()) return {Group::image, Group::audio, Group::multimodal};
  return {Group::image, Group::audio, Group::fusion};
}

bool ExperimentRegime::uses_cross_modal_transfer() const {
  return kind != RegimeKind::centralized_baseline && kind != RegimeKind::fl_baseline;
}

void ParticipantState::validate(std::size_t dataset_size) const {
  if (sample_indices.empty()) throw ConfigError("participant " + std::to_string(id) + " holds no samples");
  for (std::size_t i : sample_indices)
    if (i >= dataset_size)
      throw ConfigError("participant " + std::to_string(id) + " references sample " + std::to_string(i) +
                        " beyond the dataset");
  if (local_epochs < 0) throw ConfigError("local_epochs must be non-negative");
  if (local_batch < 1) throw ConfigError("local_batch must be positive");
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
}

std::uint64_t pass_seed(std::uint64_t seed, Group group, int participant, std::uint64_t pass) {
  return derive_seed({seed, 0x5e55, static_cast<std::uint64_t>(group), static_cast<std::uint64_t>(participant), pass});
}

namespace {

template <typename Step>
ParameterMapd local_sgd(const ParameterMapd& global, const ParticipantState& p, const MultimodalDataset& data,
                        const TrainingConfig& cfg, std::uint64_t round, Step&& step) {
  p.validate(data.size());
  ParameterMapd params = global;
  IndexList order;
  const auto batch = static_cast<std::size_t>(p.local_batch);
  for (int e = 0; e < p.local_epochs; ++e) {
    order = p.sample_indices;
    std::mt19937_64 rng(pass_seed(cfg.seed, p.group, p.id, round * static_cast<std::uint64_t>(p.local_epochs) +
                                                              static_cast<std::uint64_t>(e)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> chunk(order.data() + start, std::min(batch, order.size() - start));
      sgd_update(params, step(params, chunk).grads, cfg.learning_rate);
    }
  }
  return params;
}

}  // namespace

ParameterMapd local_train_supervised(const ModelBundle& model, const ParameterMapd& global,
                                     const ParticipantState& participant, const MultimodalDataset& data,
                                     const TrainingConfig& cfg, std::uint64_t round) {
  const RowMatrixd none;
  return local_sgd(global, participant, data, cfg, round, [&](const ParameterMapd& params, std::span<const std::size_t> chunk) {
    const RowMatrixd images = model.uses_images() ? data.image_rows(chunk) : none;
    const RowMatrixd audios = model.uses_audio() ? data.audio_rows(chunk) : none;
    const auto labels = data.label_rows(chunk);
    return supervised_loss_and_gradients(model, params, images, audios, labels);
  });
}

ParameterMapd local_train_contrastive(const ModelBundle& model, const ParameterMapd& global,
                                      const ParticipantState& participant, const MultimodalDataset& data,
                                      const TrainingConfig& cfg, std::uint64_t round) {
  return local_sgd(global, participant, data, cfg, round, [&](const ParameterMapd& params, std::span<const std::size_t> chunk) {
    return contrastive_loss_and_gradients(model, params, data.image_rows(chunk), data.audio_rows(chunk),
                                          cfg.temperature);
  });
}

Evaluation evaluate(const ModelBundle& model, const ParameterMapd& params, const MultimodalDataset& data,
                    std::span<const std::size_t> indices, const TrainingConfig& cfg, int batch) {
  if (indices.empty()) throw DataError("evaluation over an empty index set");
  if (batch < 1) throw ConfigError("evaluation batch must be positive");
  Evaluation out;
  const auto step = static_cast<std::size_t>(batch);
  const RowMatrixd none;
  double weighted = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += step) {
    const auto chunk = indices.subspan(start, std::min(step, indices.size() - start));
    const RowMatrixd images = model.uses_images() ? data.image_rows(chunk) : none;
    const RowMatrixd audios = model.uses_audio() ? data.audio_rows(chunk) : none;
    if (model.kind == ModelKind::contrastive) {
      const auto z = embed(model, params, images, audios);
      weighted += ntxent_loss(z.image, z.audio, cfg.temperature).loss * static_cast<double>(chunk.size());
    } else {
      const auto labels = data.label_rows(chunk);
      const RowMatrixd probs = predict_proba(model, params, images, audios);
      weighted += cross_entropy(probs, OneHotBatch<double>::from_labels(labels, probs.cols())).loss *
                  static_cast<double>(chunk.size());
      const auto preds = argmax_rows(probs);
      out.predictions.insert(out.predictions.end(), preds.begin(), preds.end());
    }
  }
  out.loss = weighted / static_cast<double>(indices.size());
  if (model.kind == ModelKind::contrastive) {
    out.accuracy = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto labels = data.label_rows(indices);
    out.accuracy = accuracy(out.predictions, labels);
  }
  return out;
}

FederationState initial_state(const FederationSetup& setup) {
  FederationState state;
  for (Group g : setup.regime.groups()) state.global.emplace(g, setup.models.at(g).params);
  return state;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be
// written to per-index slots so the outcome is independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void record(Curves& history, const std::string& series, double value) { history[series].push_back(value); }

}  // namespace

FederationState run_global_epoch(FederationState state, const FederationSetup& setup, const MultimodalDataset& data) {
  const auto groups = setup.regime.groups();
  struct Task {
    Group group;
    std::size_t slot;
  };
  std::vector<Task> tasks;
  std::map<Group, std::vector<ParameterMapd>> results;
  for (Group g : groups) {
    const auto& members = setup.participants.at(g);
    if (members.empty()) throw ConfigError("group " + to_string(g) + " has no participants");
    results[g].resize(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) tasks.push_back({g, k});
  }

  const auto round = static_cast<std::uint64_t>(state.epoch);
  parallel_for(tasks.size(), setup.threads, [&](std::size_t i) {
    const auto [g, k] = tasks[i];
    const auto& model = setup.models.at(g);
    const auto& participant = setup.participants.at(g)[k];
    const auto& global = state.global.at(g);
    results.at(g)[k] = g == Group::multimodal
                           ? local_train_contrastive(model, global, participant, data, setup.training, round)
                           : local_train_supervised(model, global, participant, data, setup.training, round);
  });

  switch (setup.regime.kind) {
    case RegimeKind::centralized_baseline:
      for (Group g : groups) {
        if (results[g].size() != 1) throw InvariantError("centralized training expects one participant per group");
        state.global[g] = std::move(results[g].front());
      }
      break;
    case RegimeKind::fl_baseline:
      for (Group g : groups) {
        state.global[g] = agg(results[g]);
        ++state.aggregation_calls;
      }
      break;
    default: {
      auto w = agg_avg(results[Group::image], results[Group::audio], results[Group::multimodal]);
      ++state.aggregation_calls;
      state.global[Group::image] = std::move(w.image);
      state.global[Group::audio] = std::move(w.audio);
      state.global[Group::multimodal] = std::move(w.multimodal);
      break;
    }
  }

  for (Group g : groups) {
    if (!state.global[g].all_finite())
      throw InvariantError("non-finite parameters in the " + to_string(g) + " global model after epoch " +
                           std::to_string(state.epoch + 1));
    const auto& model = setup.models.at(g);
    const auto name = modality_name(g);
    const auto train = evaluate(model, state.global[g], data, setup.split.train, setup.training, setup.eval_batch);
    const auto val = evaluate(model, state.global[g], data, setup.split.val, setup.training, setup.eval_batch);
    record(state.history, name + ".train_loss", train.loss);
    record(state.history, name + ".val_loss", val.loss);
    if (model.kind != ModelKind::contrastive) {
      record(state.history, name + ".train_accuracy", train.accuracy);
      record(state.history, name + ".val_accuracy", val.accuracy);
    }
  }
  ++state.epoch;
  return state;
}

}  // namespace mmfl
