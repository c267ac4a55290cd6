#include "mmfl/models.hpp"

#include <algorithm>
#include <cmath>

#include "mmfl/losses.hpp"

namespace mmfl {

void ModelConfig::validate() const {
  if (image_dim < 1 || audio_dim < 1) throw ConfigError("model input dimensions must be positive");
  if (class_count < 2) throw ConfigError("class_count must be at least 2");
  if (!std::isfinite(scale) || scale <= 0.0) throw ConfigError("model scale must be a positive finite number");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0, 1)");
}

Index ModelConfig::scaled(Index width) const {
  const auto w = static_cast<Index>(std::floor(static_cast<double>(width) * scale));
  return std::max<Index>(w, 4);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::image_classifier: return "image_classifier";
    case ModelKind::audio_classifier: return "audio_classifier";
    case ModelKind::late_fusion: return "late_fusion";
    case ModelKind::contrastive: return "contrastive";
  }
  return "unknown";
}

const std::vector<LayerSpec>& ModelBundle::network(const std::string& name) const {
  auto it = networks.find(name);
  if (it == networks.end()) throw InvariantError(to_string(kind) + " has no sub-network '" + name + "'");
  return it->second;
}

namespace {

std::vector<LayerSpec> tower(const std::string& tag, Index input, std::initializer_list<Index> encoder,
                             std::initializer_list<Index> projector, Activation act, double slope) {
  std::vector<LayerSpec> layers;
  Index in = input;
  int k = 0;
  for (Index w : encoder) {
    layers.push_back({in, w, act, slope, tag + ".enc." + std::to_string(k++)});
    in = w;
  }
  k = 0;
  for (Index w : projector) {
    layers.push_back({in, w, act, slope, tag + ".proj." + std::to_string(k++)});
    in = w;
  }
  layers.back().activation = Activation::identity;
  return layers;
}

LayerSpec output_layer(const std::string& prefix, Index in, Index classes) {
  return {in, classes, Activation::softmax, 0.01, prefix};
}

ParameterMapd init_all(const ModelBundle& b, std::uint64_t seed) {
  ParameterMapd params;
  for (const auto& [_, layers] : b.networks) params.merge(init_parameters<double>(layers, seed));
  return params;
}

}  // namespace

std::vector<LayerSpec> image_tower(const ModelConfig& cfg) {
  cfg.validate();
  return tower("img", cfg.image_dim, {cfg.scaled(512), cfg.scaled(256), cfg.scaled(128)},
               {cfg.scaled(703), cfg.scaled(41)}, Activation::leaky_relu, cfg.leaky_slope);
}

std::vector<LayerSpec> audio_tower(const ModelConfig& cfg) {
  cfg.validate();
  return tower("aud", cfg.audio_dim, {cfg.scaled(104), cfg.scaled(977), cfg.scaled(365)},
               {cfg.scaled(703), cfg.scaled(41)}, Activation::relu, cfg.leaky_slope);
}

ModelBundle build_image_classifier(const ModelConfig& cfg, std::uint64_t seed) {
  ModelBundle b;
  b.kind = ModelKind::image_classifier;
  auto layers = image_tower(cfg);
  layers.push_back(output_layer("img.out.0", cfg.embed_dim(), cfg.class_count));
  b.networks.emplace("image", std::move(layers));
  b.params = init_all(b, seed);
  b.shared_prefixes = {"img.enc", "img.proj"};
  return b;
}

ModelBundle build_audio_classifier(const ModelConfig& cfg, std::uint64_t seed) {
  ModelBundle b;
  b.kind = ModelKind::audio_classifier;
  auto layers = audio_tower(cfg);
  layers.push_back(output_layer("aud.out.0", cfg.embed_dim(), cfg.class_count));
  b.networks.emplace("audio", std::move(layers));
  b.params = init_all(b, seed);
  b.shared_prefixes = {"aud.enc", "aud.proj"};
  return b;
}

ModelBundle build_late_fusion(const ModelConfig& cfg, std::uint64_t seed) {
  ModelBundle b;
  b.kind = ModelKind::late_fusion;
  b.networks.emplace("image", image_tower(cfg));
  b.networks.emplace("audio", audio_tower(cfg));
  b.networks.emplace("fusion", std::vector<LayerSpec>{output_layer("fus.out.0", 2 * cfg.embed_dim(), cfg.class_count)});
  b.params = init_all(b, seed);
  b.shared_prefixes = {"aud.enc", "aud.proj", "img.enc", "img.proj"};
  return b;
}

ModelBundle build_contrastive(const ModelConfig& cfg, std::uint64_t seed) {
  ModelBundle b;
  b.kind = ModelKind::contrastive;
  b.networks.emplace("image", image_tower(cfg));
  b.networks.emplace("audio", audio_tower(cfg));
  b.params = init_all(b, seed);
  b.shared_prefixes = {"aud.enc", "aud.proj", "img.enc", "img.proj"};
  return b;
}

ModelBundle build_model(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::image_classifier: return build_image_classifier(cfg, seed);
    case ModelKind::audio_classifier: return build_audio_classifier(cfg, seed);
    case ModelKind::late_fusion: return build_late_fusion(cfg, seed);
    case ModelKind::contrastive: return build_contrastive(cfg, seed);
  }
  throw ConfigError("unknown model kind");
}

std::vector<std::string> shared_keys(const ParameterMapd& a, const ParameterMapd& b) {
  std::vector<std::string> out;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      if (ia->second.shape() != ib->second.shape())
        throw CompatibilityError(ia->first, "shape " + shape_string(ia->second.shape()) + " vs " +
                                                shape_string(ib->second.shape()));
      out.push_back(ia->first);
      ++ia;
      ++ib;
    }
  }
  return out;
}

namespace {

using Span = std::span<const LayerSpec>;

Index class_count(const ModelBundle& model) {
  switch (model.kind) {
    case ModelKind::image_classifier: return model.network("image").back().out_dim;
    case ModelKind::audio_classifier: return model.network("audio").back().out_dim;
    case ModelKind::late_fusion: return model.network("fusion").back().out_dim;
    case ModelKind::contrastive: break;
  }
  throw ConfigError("the contrastive model has no classification head");
}

void require_rows(const RowMatrixd& m, Index rows, const char* what) {
  if (m.rows() != rows) throw ShapeError(std::string(what) + " batch has a different number of rows");
}

}  // namespace

RowMatrixd predict_proba(const ModelBundle& model, const ParameterMapd& params, const RowMatrixd& images,
                         const RowMatrixd& audios) {
  switch (model.kind) {
    case ModelKind::image_classifier:
      return forward(Span(model.network("image")), params, images).output;
    case ModelKind::audio_classifier:
      return forward(Span(model.network("audio")), params, audios).output;
    case ModelKind::late_fusion: {
      require_rows(audios, images.rows(), "audio");
      auto ti = forward(Span(model.network("image")), params, images);
      auto ta = forward(Span(model.network("audio")), params, audios);
      RowMatrixd fused(images.rows(), ti.output.cols() + ta.output.cols());
      fused << ti.output, ta.output;
      return forward(Span(model.network("fusion")), params, fused).output;
    }
    case ModelKind::contrastive:
      break;
  }
  throw ConfigError("the contrastive model has no classification head");
}

Embeddings embed(const ModelBundle& model, const ParameterMapd& params, const RowMatrixd& images,
                 const RowMatrixd& audios) {
  if (model.kind != ModelKind::contrastive) throw ConfigError("embed() expects a contrastive model");
  require_rows(audios, images.rows(), "audio");
  return {forward(Span(model.network("image")), params, images).output,
          forward(Span(model.network("audio")), params, audios).output};
}

LossAndGradients supervised_loss_and_gradients(const ModelBundle& model, const ParameterMapd& params,
                                               const RowMatrixd& images, const RowMatrixd& audios,
                                               std::span<const int> labels) {
  const auto& head_input = model.kind == ModelKind::audio_classifier ? audios : images;
  const auto targets = OneHotBatch<double>::from_labels(labels, class_count(model));
  require_rows(head_input, static_cast<Index>(labels.size()), "label");
  LossAndGradients out;
  switch (model.kind) {
    case ModelKind::image_classifier:
    case ModelKind::audio_classifier: {
      Span layers(model.network(model.kind == ModelKind::image_classifier ? "image" : "audio"));
      auto tape = forward(layers, params, head_input);
      auto ce = cross_entropy(tape.output, targets);
      out.loss = ce.loss;
      out.grads = backward(layers, params, tape, std::move(ce.grad_wrt_logits), GradientOf::pre_activation).grads;
      out.probs = std::move(tape.output);
      return out;
    }
    case ModelKind::late_fusion: {
      require_rows(audios, images.rows(), "audio");
      Span img(model.network("image"));
      Span aud(model.network("audio"));
      Span fus(model.network("fusion"));
      auto ti = forward(img, params, images);
      auto ta = forward(aud, params, audios);
      const Index wi = ti.output.cols();
      RowMatrixd fused(images.rows(), wi + ta.output.cols());
      fused << ti.output, ta.output;
      auto tf = forward(fus, params, fused);
      auto ce = cross_entropy(tf.output, targets);
      out.loss = ce.loss;
      auto bf = backward(fus, params, tf, std::move(ce.grad_wrt_logits), GradientOf::pre_activation);
      auto bi = backward(img, params, ti, RowMatrixd(bf.input_grad.leftCols(wi)));
      auto ba = backward(aud, params, ta, RowMatrixd(bf.input_grad.rightCols(bf.input_grad.cols() - wi)));
      out.grads = std::move(bf.grads);
      out.grads.merge(bi.grads);
      out.grads.merge(ba.grads);
      out.probs = std::move(tf.output);
      return out;
    }
    case ModelKind::contrastive:
      break;
  }
  throw ConfigError("the contrastive model cannot be trained with labels");
}

LossAndGradients contrastive_loss_and_gradients(const ModelBundle& model, const ParameterMapd& params,
                                                const RowMatrixd& images, const RowMatrixd& audios,
                                                double temperature) {
  if (model.kind != ModelKind::contrastive) throw ConfigError("contrastive training expects a contrastive model");
  require_rows(audios, images.rows(), "audio");
  Span img(model.network("image"));
  Span aud(model.network("audio"));
  auto ti = forward(img, params, images);
  auto ta = forward(aud, params, audios);
  auto nt = ntxent_loss(ti.output, ta.output, temperature);
  LossAndGradients out;
  out.loss = nt.loss;
  out.grads = backward(img, params, ti, std::move(nt.grad_img)).grads;
  out.grads.merge(backward(aud, params, ta, std::move(nt.grad_aud)).grads);
  return out;
}

}  // namespace mmfl
