#include "mmfl/aggregation.hpp"

#include "mmfl/models.hpp"

namespace mmfl {

ParameterMapd agg(std::span<const ParameterMapd> weights) {
  if (weights.empty()) throw ConfigError("agg needs at least one parameter map");
  for (std::size_t k = 1; k < weights.size(); ++k) require_same_layout(weights[0], weights[k]);

  // Extended-precision accumulation: N copies of one value average back to
  // that value exactly, and the result does not depend on input order in
  // practice.
  const long double n = static_cast<long double>(weights.size());
  ParameterMapd out;
  for (const auto& [key, first] : weights[0]) {
    std::vector<const double*> sources;
    sources.reserve(weights.size());
    for (const auto& w : weights) sources.push_back(w.at(key).data().data());
    Tensord mean(first.shape());
    for (Index i = 0; i < first.size(); ++i) {
      long double sum = 0.0L;
      for (const double* src : sources) sum += static_cast<long double>(src[i]);
      mean.data()[i] = static_cast<double>(sum / n);
    }
    out.insert(key, std::move(mean));
  }
  return out;
}

ParameterMapd agg_m2u(const ParameterMapd& unimodal, const ParameterMapd& multimodal) {
  ParameterMapd out = unimodal;
  for (const auto& key : shared_keys(unimodal, multimodal))
    out.at(key).data() = (unimodal.at(key).data() + multimodal.at(key).data()) / 2.0;
  return out;
}

ParameterMapd agg_u2m(const ParameterMapd& image, const ParameterMapd& audio, const ParameterMapd& multimodal) {
  ParameterMapd out = multimodal;
  for (const auto& key : shared_keys(image, multimodal))
    out.at(key).data() = (image.at(key).data() + out.at(key).data()) / 2.0;
  for (const auto& key : shared_keys(audio, multimodal))
    out.at(key).data() = (audio.at(key).data() + out.at(key).data()) / 2.0;
  return out;
}

AggregatedWeights agg_avg(std::span<const ParameterMapd> image, std::span<const ParameterMapd> audio,
                          std::span<const ParameterMapd> multimodal) {
  const ParameterMapd wi = agg(image);
  const ParameterMapd wa = agg(audio);
  const ParameterMapd wm = agg(multimodal);
  return {agg_m2u(wi, wm), agg_m2u(wa, wm), agg_u2m(wi, wa, wm)};
}

}  // namespace mmfl
