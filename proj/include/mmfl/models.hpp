#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmfl/network.hpp"
#include "mmfl/tensor.hpp"

namespace mmfl {

/// Widths of the desk-scale model family. At scale 1 the projector and DMLP
/// widths are 703/41 and 104/977/365/703/41.
struct ModelConfig {
  Index image_dim = 64;
  Index audio_dim = 40;
  Index class_count = 9;
  double scale = 0.25;
  double leaky_slope = 0.01;

  void validate() const;
  /// floor(width * scale), never below 4.
  Index scaled(Index width) const;
  /// Shared embedding width of both towers (the scaled 41-unit projector output).
  Index embed_dim() const { return scaled(41); }
};

enum class ModelKind { image_classifier, audio_classifier, late_fusion, contrastive };

std::string to_string(ModelKind kind);

/// A model topology plus its initial parameters. `networks` holds the named
/// sub-networks ("image", "audio", "fusion"); their keys are disjoint and
/// together make up `params`.
struct ModelBundle {
  ModelKind kind{};
  std::map<std::string, std::vector<LayerSpec>> networks;
  ParameterMapd params;
  std::vector<std::string> shared_prefixes;

  const std::vector<LayerSpec>& network(const std::string& name) const;
  bool uses_images() const { return networks.count("image") != 0; }
  bool uses_audio() const { return networks.count("audio") != 0; }
};

/// img.enc (3 layers) + img.proj (2 layers), leaky ReLU, linear embedding.
std::vector<LayerSpec> image_tower(const ModelConfig& cfg);
/// aud.enc (3 layers) + aud.proj (2 layers), ReLU, linear embedding.
std::vector<LayerSpec> audio_tower(const ModelConfig& cfg);

ModelBundle build_image_classifier(const ModelConfig& cfg, std::uint64_t seed);
ModelBundle build_audio_classifier(const ModelConfig& cfg, std::uint64_t seed);
ModelBundle build_late_fusion(const ModelConfig& cfg, std::uint64_t seed);
ModelBundle build_contrastive(const ModelConfig& cfg, std::uint64_t seed);
ModelBundle build_model(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed);

/// Sorted keys present in both maps. A key present in both with different
/// shapes raises CompatibilityError.
std::vector<std::string> shared_keys(const ParameterMapd& a, const ParameterMapd& b);

/// Class probabilities [B, C] of a supervised bundle. Unused modalities may
/// be passed as empty matrices.
RowMatrixd predict_proba(const ModelBundle& model, const ParameterMapd& params, const RowMatrixd& images,
                         const RowMatrixd& audios);

struct Embeddings {
  RowMatrixd image;
  RowMatrixd audio;
};

/// Tower outputs of a contrastive bundle.
Embeddings embed(const ModelBundle& model, const ParameterMapd& params, const RowMatrixd& images,
                 const RowMatrixd& audios);

struct LossAndGradients {
  double loss = 0.0;
  ParameterMapd grads;
  RowMatrixd probs;  // supervised models only
};

/// Cross-entropy of a supervised bundle and its gradients for every parameter.
LossAndGradients supervised_loss_and_gradients(const ModelBundle& model, const ParameterMapd& params,
                                               const RowMatrixd& images, const RowMatrixd& audios,
                                               std::span<const int> labels);

/// NT-Xent of a contrastive bundle on paired views and its gradients.
LossAndGradients contrastive_loss_and_gradients(const ModelBundle& model, const ParameterMapd& params,
                                                const RowMatrixd& images, const RowMatrixd& audios,
                                                double temperature);

}  // namespace mmfl
