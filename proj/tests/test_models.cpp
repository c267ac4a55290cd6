#include <doctest.h>

#include <algorithm>
#include <random>

#include "mmfl/models.hpp"
#include "oracles.hpp"

using namespace mmfl;

namespace {

std::vector<Index> widths(const std::vector<LayerSpec>& layers) {
  std::vector<Index> w{layers.front().in_dim};
  for (const auto& l : layers) w.push_back(l.out_dim);
  return w;
}

std::vector<std::string> keys_with(const ParameterMapd& p, const std::vector<std::string>& prefixes) {
  std::vector<std::string> out;
  for (const auto& [k, v] : p)
    for (const auto& pre : prefixes)
      if (k.starts_with(pre + ".")) out.push_back(k);
  return out;
}

}  // namespace

TEST_CASE("scaling rule") {
  ModelConfig cfg;
  cfg.scale = 1.0;
  CHECK(cfg.scaled(703) == 703);
  CHECK(cfg.embed_dim() == 41);
  cfg.scale = 0.1;
  CHECK(cfg.scaled(703) == 70);
  CHECK(cfg.scaled(41) == 4);
  cfg.scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.scale = 0.25;
  cfg.class_count = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("full-scale widths") {
  ModelConfig cfg;
  cfg.scale = 1.0;
  cfg.audio_dim = 104;

  const auto img = build_image_classifier(cfg, 1);
  const auto& layers = img.network("image");
  REQUIRE(layers.size() == 6);
  CHECK(layers[3].in_dim == 128);
  CHECK(layers[3].out_dim == 703);
  CHECK(layers[4].out_dim == 41);
  CHECK(layers[5].in_dim == 41);
  CHECK(layers[5].out_dim == 9);
  CHECK(layers[5].activation == Activation::softmax);

  const auto aud = build_audio_classifier(cfg, 1);
  CHECK(widths(aud.network("audio")) == std::vector<Index>{104, 104, 977, 365, 703, 41, 9});
}

TEST_CASE("scale 0.1 projector widths") {
  ModelConfig cfg;
  cfg.scale = 0.1;
  const auto& layers = build_image_classifier(cfg, 1).network("image");
  CHECK(layers[3].out_dim == 70);
  CHECK(layers[4].out_dim == 4);
}

TEST_CASE("builders are deterministic under their seed") {
  const ModelConfig cfg;
  for (auto kind : {ModelKind::image_classifier, ModelKind::audio_classifier, ModelKind::late_fusion,
                    ModelKind::contrastive}) {
    CHECK(build_model(kind, cfg, 5).params == build_model(kind, cfg, 5).params);
    CHECK_FALSE(build_model(kind, cfg, 5).params == build_model(kind, cfg, 6).params);
  }
}

TEST_CASE("key naming and shared prefixes") {
  const ModelConfig cfg;
  const auto img = build_image_classifier(cfg, 1);
  const auto aud = build_audio_classifier(cfg, 1);
  const auto fus = build_late_fusion(cfg, 1);
  const auto con = build_contrastive(cfg, 1);

  CHECK(img.shared_prefixes == std::vector<std::string>{"img.enc", "img.proj"});
  CHECK(aud.shared_prefixes == std::vector<std::string>{"aud.enc", "aud.proj"});
  CHECK(con.shared_prefixes.size() == 4);
  for (const auto& [k, v] : img.params) CHECK(k.starts_with("img."));
  for (const auto& [k, v] : aud.params) CHECK(k.starts_with("aud."));
  CHECK(img.params.contains("img.out.0.weight"));
  CHECK(fus.params.contains("fus.out.0.weight"));
  for (const auto& [k, v] : con.params) CHECK(k.find(".out.") == std::string::npos);

  SUBCASE("transfer contract") {
    CHECK(shared_keys(img.params, con.params) == keys_with(img.params, {"img.enc", "img.proj"}));
    CHECK(shared_keys(aud.params, con.params) == keys_with(aud.params, {"aud.enc", "aud.proj"}));
    CHECK(shared_keys(img.params, aud.params).empty());
    CHECK(keys_with(con.params, {"aud.enc", "aud.proj"}) == keys_with(aud.params, {"aud.enc", "aud.proj"}));
  }
  SUBCASE("late fusion towers match the unimodal classifiers") {
    CHECK(keys_with(fus.params, {"img.enc", "img.proj"}) == keys_with(img.params, {"img.enc", "img.proj"}));
    CHECK(keys_with(fus.params, {"aud.enc", "aud.proj"}) == keys_with(aud.params, {"aud.enc", "aud.proj"}));
    CHECK(fus.network("fusion").front().in_dim == 2 * cfg.embed_dim());
  }
  SUBCASE("same-named layers start identical across models") {
    for (const auto& k : shared_keys(img.params, con.params)) CHECK(img.params.at(k) == con.params.at(k));
  }
}

TEST_CASE("shared_keys") {
  const ParameterMapd a{{"img.enc.0.weight", Tensord({4, 8})}, {"x", Tensord({1})}};
  const ParameterMapd b{{"y", Tensord({1})}};
  CHECK(shared_keys(a, b).empty());
  CHECK(shared_keys(a, a) == std::vector<std::string>{"img.enc.0.weight", "x"});
  const ParameterMapd c{{"img.enc.0.weight", Tensord({4, 9})}};
  try {
    shared_keys(a, c);
    FAIL("expected an incompatibility error");
  } catch (const CompatibilityError& e) {
    CHECK(e.key() == "img.enc.0.weight");
  }
}

TEST_CASE("forward contracts") {
  const ModelConfig cfg;
  std::mt19937_64 rng(4);
  const RowMatrixd images = oracle::random_matrix(rng, 2, cfg.image_dim);
  const RowMatrixd audios = oracle::random_matrix(rng, 2, cfg.audio_dim);

  const auto fus = build_late_fusion(cfg, 3);
  const RowMatrixd p = predict_proba(fus, fus.params, images, audios);
  CHECK(p.rows() == 2);
  CHECK(p.cols() == cfg.class_count);
  for (Index r = 0; r < 2; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  const auto con = build_contrastive(cfg, 3);
  const auto z = embed(con, con.params, images, audios);
  CHECK(z.image.rows() == 2);
  CHECK(z.image.cols() == cfg.embed_dim());
  CHECK(z.audio.cols() == cfg.embed_dim());

  const auto img = build_image_classifier(cfg, 3);
  CHECK_THROWS_AS(predict_proba(img, img.params, audios, RowMatrixd()), ShapeError);
}

TEST_CASE("model gradients match finite differences") {
  ModelConfig cfg;
  cfg.image_dim = 5;
  cfg.audio_dim = 4;
  cfg.class_count = 3;
  cfg.scale = 0.02;  // every hidden width clamps to 4
  std::mt19937_64 rng(12);
  const RowMatrixd images = oracle::random_matrix(rng, 3, cfg.image_dim);
  const RowMatrixd audios = oracle::random_matrix(rng, 3, cfg.audio_dim);
  const std::vector<int> labels{0, 2, 1};

  for (auto kind : {ModelKind::image_classifier, ModelKind::audio_classifier, ModelKind::late_fusion}) {
    const auto m = build_model(kind, cfg, 21);
    const auto r = supervised_loss_and_gradients(m, m.params, images, audios, labels);
    auto loss = [&](const ParameterMapd& p) {
      return supervised_loss_and_gradients(m, p, images, audios, labels).loss;
    };
    CHECK(oracle::max_relative_error(r.grads, oracle::finite_differences(loss, m.params)) < 1e-4);
  }

  const auto con = build_contrastive(cfg, 21);
  const auto r = contrastive_loss_and_gradients(con, con.params, images, audios, 0.5);
  auto loss = [&](const ParameterMapd& p) {
    const auto z = embed(con, p, images, audios);
    return oracle::ntxent_brute_force(z.image, z.audio, 0.5);
  };
  CHECK(r.loss == doctest::Approx(loss(con.params)).epsilon(1e-12));
  CHECK(oracle::max_relative_error(r.grads, oracle::finite_differences(loss, con.params)) < 1e-4);
}
