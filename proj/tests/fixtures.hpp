#pragma once

#include <random>
#include <string>
#include <vector>

#include "mmfl/network.hpp"
#include "mmfl/tensor.hpp"

namespace fixtures {

/// A random dense net with 1..4 layers, widths in [1, 16] and a random
/// activation per layer (softmax only on the last).
inline mmfl::Network<double> random_network(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth(1, 4);
  std::uniform_int_distribution<mmfl::Index> width(1, 16);
  std::uniform_int_distribution<int> act(0, 2);
  const int n = depth(rng);
  std::vector<mmfl::LayerSpec> layers;
  mmfl::Index in = width(rng);
  for (int k = 0; k < n; ++k) {
    const mmfl::Index out = width(rng);
    auto a = static_cast<mmfl::Activation>(act(rng));
    if (k + 1 == n && out > 1 && rng() % 3 == 0) a = mmfl::Activation::softmax;
    layers.push_back({in, out, a, 0.01 + 0.2 * (k % 2), "net." + std::to_string(k)});
    in = out;
  }
  auto net = mmfl::init_network<double>(layers, rng());
  // Nonzero biases so every code path is exercised.
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& [key, t] : net.params)
    if (key.ends_with(".bias"))
      for (mmfl::Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
  return net;
}

/// Two labelled blobs per class in `dim` dimensions, trivially separable.
struct ToyData {
  mmfl::RowMatrixd x;
  std::vector<int> y;
};

inline ToyData separable(std::mt19937_64& rng, int classes, int per_class, mmfl::Index dim) {
  std::normal_distribution<double> g(0.0, 0.2);
  ToyData d;
  d.x.resize(classes * per_class, dim);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      const auto r = c * per_class + i;
      for (mmfl::Index j = 0; j < dim; ++j) d.x(r, j) = (j % classes == c ? 2.0 : 0.0) + g(rng);
      d.y.push_back(c);
    }
  return d;
}

}  // namespace fixtures
