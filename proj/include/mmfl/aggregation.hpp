#pragma once

#include <span>
#include <tuple>
#include <vector>

#include "mmfl/tensor.hpp"

namespace mmfl {

/// Elementwise mean of N participant maps over every key (FedAvg without
/// sample weights). All maps must share keys and shapes.
ParameterMapd agg(std::span<const ParameterMapd> weights);

/// Multimodal-to-unimodal transfer: keys shared with `multimodal` become the
/// pairwise mean, every other key of `unimodal` is kept. Output has exactly
/// the key set of `unimodal`.
ParameterMapd agg_m2u(const ParameterMapd& unimodal, const ParameterMapd& multimodal);

/// Unimodal-to-multimodal transfer: keys shared with `image` are averaged
/// with it, then keys shared with `audio` are averaged with it. Output has
/// exactly the key set of `multimodal`.
ParameterMapd agg_u2m(const ParameterMapd& image, const ParameterMapd& audio, const ParameterMapd& multimodal);

struct AggregatedWeights {
  ParameterMapd image;
  ParameterMapd audio;
  ParameterMapd multimodal;
};

/// Double aggregation: within-group means, then cross-group transfer. The
/// second stage reads only the first stage's group means.
AggregatedWeights agg_avg(std::span<const ParameterMapd> image, std::span<const ParameterMapd> audio,
                          std::span<const ParameterMapd> multimodal);

}  // namespace mmfl
