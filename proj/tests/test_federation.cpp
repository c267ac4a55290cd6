#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mmfl/experiment.hpp"
#include "mmfl/federation.hpp"

using namespace mmfl;

namespace {

MultimodalDataset small_data(std::uint64_t seed = 7, int per_class = 20) {
  SyntheticSpec s;
  s.per_class = per_class;
  s.seed = seed;
  return generate_synthetic(s);
}

ModelConfig model_for(const MultimodalDataset& d) {
  ModelConfig m;
  m.image_dim = d.image_dim();
  m.audio_dim = d.audio_dim();
  m.class_count = d.class_count;
  return m;
}

IndexList all_indices(const MultimodalDataset& d) {
  IndexList v(d.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

ExperimentConfig small_experiment(RegimeKind kind, int epochs = 2) {
  ExperimentConfig cfg;
  cfg.regime = {kind, epochs};
  cfg.seeds = {1};
  cfg.data.synthetic.per_class = 20;
  cfg.federation.participants = 3;
  cfg.federation.local_epochs = 2;
  cfg.learning_rate = 0.01;
  return cfg;
}

struct Run {
  FederationSetup setup;
  FederationState state;
};

Run run_epochs(const ExperimentConfig& cfg, const MultimodalDataset& data, int epochs) {
  const auto sp = split(data, cfg.split);
  Run r{make_setup(cfg, 1, data, sp), {}};
  r.state = initial_state(r.setup);
  for (int e = 0; e < epochs; ++e) r.state = run_global_epoch(std::move(r.state), r.setup, data);
  return r;
}

/// Nearest-class-mean accuracy, fit on the first half and scored on the second.
double centroid_probe(const RowMatrixd& x, const std::vector<int>& y, int classes) {
  const Index n = x.rows(), half = n / 2;
  RowMatrixd means = RowMatrixd::Zero(classes, x.cols());
  std::vector<int> counts(classes, 0);
  for (Index i = 0; i < half; ++i) {
    means.row(y[i]) += x.row(i);
    ++counts[y[i]];
  }
  for (int c = 0; c < classes; ++c) means.row(c) /= std::max(1, counts[c]);
  int correct = 0;
  for (Index i = half; i < n; ++i) {
    Index best;
    (means.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    correct += (best == y[i]);
  }
  return double(correct) / double(n - half);
}

}  // namespace

TEST_CASE("regimes") {
  CHECK(parse_regime("framework_unbalanced_random") == RegimeKind::framework_unbalanced_random);
  CHECK_THROWS_AS(parse_regime("federated"), ConfigError);
  for (auto k : {RegimeKind::centralized_baseline, RegimeKind::fl_baseline, RegimeKind::framework_balanced,
                 RegimeKind::framework_unbalanced_paired, RegimeKind::framework_unbalanced_random})
    CHECK(parse_regime(to_string(k)) == k);
  CHECK(ExperimentRegime{RegimeKind::fl_baseline, 1}.groups() ==
        std::vector<Group>{Group::image, Group::audio, Group::fusion});
  CHECK(ExperimentRegime{RegimeKind::framework_balanced, 1}.groups() ==
        std::vector<Group>{Group::image, Group::audio, Group::multimodal});
  CHECK_FALSE(ExperimentRegime{RegimeKind::fl_baseline, 1}.uses_cross_modal_transfer());
  CHECK(ExperimentRegime{RegimeKind::framework_unbalanced_paired, 1}.uses_cross_modal_transfer());
  CHECK(modality_name(Group::fusion) == "image_audio");
}

TEST_CASE("participant validation") {
  ParticipantState p{0, Group::image, {}, 10, 10};
  CHECK_THROWS_AS(p.validate(10), ConfigError);
  p.sample_indices = {3, 10};
  CHECK_THROWS_AS(p.validate(10), ConfigError);
  p.sample_indices = {3, 9};
  CHECK_NOTHROW(p.validate(10));
  p.local_batch = 0;
  CHECK_THROWS_AS(p.validate(10), ConfigError);
}

TEST_CASE("local supervised training") {
  const auto data = small_data();
  const auto model = build_image_classifier(model_for(data), 3);
  TrainingConfig cfg{0.05, 0.5, 11};
  ParticipantState p{0, Group::image, all_indices(data), 0, 10};

  SUBCASE("zero local epochs is the identity") {
    CHECK(local_train_supervised(model, model.params, p, data, cfg, 0) == model.params);
  }
  SUBCASE("loss falls over ten local epochs") {
    p.local_epochs = 10;
    const auto before = evaluate(model, model.params, data, p.sample_indices, cfg, 10);
    const auto trained = local_train_supervised(model, model.params, p, data, cfg, 0);
    const auto after = evaluate(model, trained, data, p.sample_indices, cfg, 10);
    CHECK(after.loss < before.loss);
    CHECK(after.accuracy > before.accuracy);
    CHECK(trained.keys() == model.params.keys());
  }
  SUBCASE("same participant and seed gives identical maps") {
    p.local_epochs = 2;
    CHECK(local_train_supervised(model, model.params, p, data, cfg, 4) ==
          local_train_supervised(model, model.params, p, data, cfg, 4));
  }
  SUBCASE("global input is untouched") {
    p.local_epochs = 1;
    const auto copy = model.params;
    (void)local_train_supervised(model, model.params, p, data, cfg, 0);
    CHECK(model.params == copy);
  }
}

TEST_CASE("local contrastive training") {
  const auto data = small_data();
  const auto model = build_contrastive(model_for(data), 3);
  TrainingConfig cfg{0.05, 0.5, 11};
  ParticipantState p{0, Group::multimodal, all_indices(data), 0, 10};

  SUBCASE("zero local epochs is the identity") {
    CHECK(local_train_contrastive(model, model.params, p, data, cfg, 0) == model.params);
  }
  SUBCASE("loss falls over ten local epochs") {
    p.local_epochs = 10;
    const auto before = evaluate(model, model.params, data, p.sample_indices, cfg, 10);
    const auto trained = local_train_contrastive(model, model.params, p, data, cfg, 0);
    const auto after = evaluate(model, trained, data, p.sample_indices, cfg, 10);
    CHECK(after.loss < before.loss);
    CHECK(std::isnan(after.accuracy));
  }
  SUBCASE("labels are never read") {
    p.local_epochs = 2;
    auto shuffled = data;
    std::mt19937_64 rng(5);
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
    CHECK(local_train_contrastive(model, model.params, p, shuffled, cfg, 1) ==
          local_train_contrastive(model, model.params, p, data, cfg, 1));
  }
}

TEST_CASE("contrastive embeddings carry class information") {
  double total = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = small_data(seed, 40);
    const auto model = build_contrastive(model_for(data), seed);
    TrainingConfig cfg{0.05, 0.5, seed};
    ParticipantState p{0, Group::multimodal, all_indices(data), 5, 10};
    const auto trained = local_train_contrastive(model, model.params, p, data, cfg, 0);
    const auto z = embed(model, trained, data.images, data.audios);
    total += centroid_probe(z.audio, data.labels, data.class_count);
  }
  CHECK(total / 3.0 >= 1.0 / 9.0 + 0.20);
}

TEST_CASE("global epochs") {
  const auto data = small_data();

  SUBCASE("epoch counter and history grow by one") {
    const auto cfg = small_experiment(RegimeKind::framework_balanced);
    auto r = run_epochs(cfg, data, 1);
    CHECK(r.state.epoch == 1);
    const auto sizes = r.state.history.at("audio.val_accuracy").size();
    r.state = run_global_epoch(std::move(r.state), r.setup, data);
    CHECK(r.state.epoch == 2);
    CHECK(r.state.history.at("audio.val_accuracy").size() == sizes + 1);
    CHECK(r.state.aggregation_calls == 2);
    CHECK(r.state.history.count("multimodal.val_loss") == 1);
    CHECK(r.state.history.count("multimodal.val_accuracy") == 0);
  }
  SUBCASE("centralized regime makes no aggregation calls") {
    const auto r = run_epochs(small_experiment(RegimeKind::centralized_baseline), data, 2);
    CHECK(r.state.aggregation_calls == 0);
    CHECK(r.state.history.count("image_audio.val_accuracy") == 1);
  }
  SUBCASE("fl baseline aggregates each group separately") {
    const auto r = run_epochs(small_experiment(RegimeKind::fl_baseline), data, 2);
    CHECK(r.state.aggregation_calls == 6);
  }
  SUBCASE("transfer keeps the contract between groups") {
    const auto r = run_epochs(small_experiment(RegimeKind::framework_balanced), data, 1);
    const auto& img = r.state.global.at(Group::image);
    const auto& mm = r.state.global.at(Group::multimodal);
    CHECK(img.keys() == r.setup.models.at(Group::image).params.keys());
    CHECK(mm.keys() == r.setup.models.at(Group::multimodal).params.keys());
    CHECK_FALSE(shared_keys(img, mm).empty());
  }
}

TEST_CASE("one-participant fl baseline replays centralized training bit-exactly") {
  const auto data = small_data();
  for (int local_epochs : {1, 3}) {
    auto fl = small_experiment(RegimeKind::fl_baseline);
    fl.federation.participants = 1;
    fl.federation.local_epochs = local_epochs;
    fl.federation.local_batch = fl.batch;
    auto central = small_experiment(RegimeKind::centralized_baseline);

    const int rounds = 2;
    const auto a = run_epochs(fl, data, rounds);
    const auto b = run_epochs(central, data, rounds * local_epochs);
    for (Group g : {Group::image, Group::audio, Group::fusion}) CHECK(a.state.global.at(g) == b.state.global.at(g));
  }
}

TEST_CASE("concurrent participants match serial execution bit-for-bit") {
  const auto data = small_data();
  for (auto kind : {RegimeKind::fl_baseline, RegimeKind::framework_unbalanced_random}) {
    auto serial = small_experiment(kind);
    auto parallel = serial;
    parallel.threads = 4;
    const auto a = run_epochs(serial, data, 2);
    const auto b = run_epochs(parallel, data, 2);
    CHECK(a.state.global == b.state.global);
    CHECK(a.state.history == b.state.history);
  }
}

TEST_CASE("experiment configuration is validated before training") {
  auto cfg = small_experiment(RegimeKind::fl_baseline);
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  cfg = small_experiment(RegimeKind::fl_baseline);
  cfg.seeds.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  cfg = small_experiment(RegimeKind::fl_baseline);
  cfg.federation.participants = 0;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("run_experiment report shape") {
  auto cfg = small_experiment(RegimeKind::framework_balanced, 3);
  cfg.seeds = {1, 2};
  const auto report = run_experiment(cfg);
  CHECK(report.runs.size() == 2);
  for (const auto& [series, values] : report.mean_curves) CHECK(values.size() == 3);
  CHECK(report.mean_test_accuracy.count("image") == 1);
  CHECK(report.mean_test_accuracy.count("audio") == 1);
  CHECK(report.mean_test_accuracy.count("multimodal") == 0);
  CHECK(report.confusion.at("audio").total() == 2 * static_cast<long long>(split(load_dataset(cfg.data), cfg.split).test.size()));
  CHECK(report.runs[0].test_loss.count("multimodal") == 1);
}
