#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmfl/error.hpp"
#include "mmfl/random.hpp"
#include "mmfl/tensor.hpp"

namespace mmfl {

enum class Activation { identity, relu, leaky_relu, softmax };

/// One dense layer `y = act(x W + b)` with W of shape [in_dim, out_dim].
struct LayerSpec {
  Index in_dim = 0;
  Index out_dim = 0;
  Activation activation = Activation::identity;
  double slope = 0.01;  // leaky_relu only
  std::string prefix;

  std::string weight_key() const { return prefix + ".weight"; }
  std::string bias_key() const { return prefix + ".bias"; }
};

/// Checks positive dims, the in/out chain, and leaky slopes in (0, 1).
inline void validate_layers(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.in_dim <= 0 || l.out_dim <= 0)
      throw ConfigError("layer '" + l.prefix + "' has a non-positive dimension");
    if (l.activation == Activation::leaky_relu && !(l.slope > 0.0 && l.slope < 1.0))
      throw ConfigError("layer '" + l.prefix + "' leaky slope must lie in (0, 1)");
    if (k + 1 < layers.size() && l.out_dim != layers[k + 1].in_dim)
      throw ConfigError("layer '" + l.prefix + "' outputs " + std::to_string(l.out_dim) +
                        " but layer '" + layers[k + 1].prefix + "' expects " +
                        std::to_string(layers[k + 1].in_dim));
  }
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out = logits;
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out(logits.shape());
  out.matrix() = softmax(logits.matrix());
  return out;
}

namespace detail {

template <typename Scalar>
RowMatrix<Scalar> activate(const LayerSpec& layer, const RowMatrix<Scalar>& pre) {
  switch (layer.activation) {
    case Activation::identity:
      return pre;
    case Activation::relu:
      return pre.cwiseMax(Scalar(0));
    case Activation::leaky_relu: {
      const Scalar slope = static_cast<Scalar>(layer.slope);
      return (pre.array() > Scalar(0)).select(pre, pre * slope);
    }
    case Activation::softmax:
      return softmax(pre);
  }
  throw InvariantError("unknown activation");
}

// Maps dL/d(activation output) to dL/d(pre-activation).
template <typename Scalar>
RowMatrix<Scalar> activation_backward(const LayerSpec& layer, const RowMatrix<Scalar>& pre,
                                      const RowMatrix<Scalar>& grad) {
  switch (layer.activation) {
    case Activation::identity:
      return grad;
    case Activation::relu:
      return (pre.array() > Scalar(0)).select(grad, RowMatrix<Scalar>::Zero(grad.rows(), grad.cols()));
    case Activation::leaky_relu: {
      const Scalar slope = static_cast<Scalar>(layer.slope);
      return (pre.array() > Scalar(0)).select(grad, grad * slope);
    }
    case Activation::softmax: {
      RowMatrix<Scalar> y = softmax(pre);
      Vector<Scalar> dot = (grad.array() * y.array()).rowwise().sum();
      return (y.array() * (grad.colwise() - dot).array()).matrix();
    }
  }
  throw InvariantError("unknown activation");
}

}  // namespace detail

/// Glorot-uniform weights and zero biases. Each layer draws from its own
/// stream keyed by (seed, weight key), so identically named layers in
/// different models start from identical values.
template <typename Scalar>
ParameterMap<Scalar> init_parameters(std::span<const LayerSpec> layers, std::uint64_t seed) {
  validate_layers(layers);
  ParameterMap<Scalar> params;
  for (const auto& l : layers) {
    std::mt19937_64 rng(derive_seed({seed, hash_string(l.weight_key())}));
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<Scalar> w({l.in_dim, l.out_dim});
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    params.insert(l.weight_key(), std::move(w));
    params.insert(l.bias_key(), Tensor<Scalar>({l.out_dim}));
  }
  return params;
}

template <typename Scalar>
struct Network {
  std::vector<LayerSpec> layers;
  ParameterMap<Scalar> params;
};

template <typename Scalar = double>
Network<Scalar> init_network(std::vector<LayerSpec> layers, std::uint64_t seed) {
  auto params = init_parameters<Scalar>(layers, seed);
  return {std::move(layers), std::move(params)};
}

/// Per-layer inputs and pre-activations recorded by forward().
template <typename Scalar>
struct ForwardTape {
  std::vector<RowMatrix<Scalar>> inputs;
  std::vector<RowMatrix<Scalar>> pre_activations;
  RowMatrix<Scalar> output;
};

template <typename Scalar, typename Derived>
ForwardTape<Scalar> forward(std::span<const LayerSpec> layers, const ParameterMap<Scalar>& params,
                            const Eigen::MatrixBase<Derived>& batch) {
  if (layers.empty()) throw ConfigError("forward through an empty network");
  if (batch.rows() < 1) throw ShapeError("forward needs a batch of at least one row");
  if (batch.cols() != layers.front().in_dim)
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, layer '" +
                     layers.front().prefix + "' expects " + std::to_string(layers.front().in_dim));
  ForwardTape<Scalar> tape;
  tape.inputs.reserve(layers.size());
  tape.pre_activations.reserve(layers.size());
  RowMatrix<Scalar> x = batch;
  for (const auto& l : layers) {
    const auto& w = params.at(l.weight_key());
    const auto& b = params.at(l.bias_key());
    if (w.shape() != Shape{l.in_dim, l.out_dim} || b.shape() != Shape{l.out_dim})
      throw ShapeError("parameters of layer '" + l.prefix + "' do not match its layer description");
    RowMatrix<Scalar> pre = x * w.matrix();
    pre.rowwise() += b.matrix().row(0);
    RowMatrix<Scalar> y = detail::activate(l, pre);
    tape.inputs.push_back(std::move(x));
    tape.pre_activations.push_back(std::move(pre));
    x = std::move(y);
  }
  tape.output = std::move(x);
  return tape;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, ForwardTape<Scalar>> forward(const Network<Scalar>& net, const Tensor<Scalar>& batch) {
  if (batch.rank() != 2) throw ShapeError("forward expects a rank-2 batch, got " + shape_string(batch.shape()));
  auto tape = forward(std::span<const LayerSpec>(net.layers), net.params, batch.matrix());
  return {Tensor<Scalar>::from_matrix(tape.output), std::move(tape)};
}

/// Whether a gradient handed to backward() is taken with respect to the last
/// layer's activation output or its pre-activation (used by fused softmax+CE).
enum class GradientOf { output, pre_activation };

template <typename Scalar>
struct BackwardResult {
  ParameterMap<Scalar> grads;
  RowMatrix<Scalar> input_grad;
};

template <typename Scalar>
BackwardResult<Scalar> backward(std::span<const LayerSpec> layers, const ParameterMap<Scalar>& params,
                                const ForwardTape<Scalar>& tape, RowMatrix<Scalar> grad,
                                GradientOf wrt = GradientOf::output) {
  if (tape.inputs.size() != layers.size() || tape.pre_activations.size() != layers.size())
    throw InvariantError("forward tape was recorded for a different network");
  if (grad.rows() != tape.output.rows() || grad.cols() != tape.output.cols())
    throw ShapeError("output gradient shape does not match forward output");
  BackwardResult<Scalar> result;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    const auto& pre = tape.pre_activations[k];
    const auto& x = tape.inputs[k];
    if (pre.cols() != l.out_dim || x.cols() != l.in_dim)
      throw InvariantError("forward tape does not match layer '" + l.prefix + "'");
    RowMatrix<Scalar> dpre = (k + 1 == layers.size() && wrt == GradientOf::pre_activation)
                                 ? std::move(grad)
                                 : detail::activation_backward(l, pre, grad);
    Tensor<Scalar> dw({l.in_dim, l.out_dim});
    dw.matrix().noalias() = x.transpose() * dpre;
    Tensor<Scalar> db({l.out_dim});
    db.matrix() = dpre.colwise().sum();
    result.grads.insert(l.weight_key(), std::move(dw));
    result.grads.insert(l.bias_key(), std::move(db));
    grad = dpre * params.at(l.weight_key()).matrix().transpose();
  }
  result.input_grad = std::move(grad);
  return result;
}

template <typename Scalar>
BackwardResult<Scalar> backward(const Network<Scalar>& net, const ForwardTape<Scalar>& tape,
                                const Tensor<Scalar>& output_grad) {
  if (output_grad.rank() != 2) throw ShapeError("output gradient must be rank 2");
  return backward(std::span<const LayerSpec>(net.layers), net.params, tape,
                  RowMatrix<Scalar>(output_grad.matrix()));
}

/// In-place `params -= lr * grads` over the keys of `grads`.
template <typename Scalar>
void sgd_update(ParameterMap<Scalar>& params, const ParameterMap<Scalar>& grads, Scalar lr) {
  for (const auto& [key, g] : grads) {
    auto& p = params.at(key);
    if (p.shape() != g.shape()) throw CompatibilityError(key, "gradient shape differs from parameter");
    p.data() -= lr * g.data();
  }
}

/// Pure SGD step; both maps must share keys and shapes.
template <typename Scalar>
ParameterMap<Scalar> sgd_step(const ParameterMap<Scalar>& params, const ParameterMap<Scalar>& grads, Scalar lr) {
  require_same_layout(params, grads);
  ParameterMap<Scalar> out = params;
  sgd_update(out, grads, lr);
  return out;
}

}  // namespace mmfl
