#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmfl/error.hpp"
#include "mmfl/network.hpp"
#include "mmfl/tensor.hpp"

namespace mmfl {

/// Targets as rows with a single 1.
template <typename Scalar>
class OneHotBatch {
 public:
  static OneHotBatch from_labels(std::span<const int> labels, Index class_count) {
    if (class_count < 1) throw ConfigError("one-hot encoding needs at least one class");
    RowMatrix<Scalar> m = RowMatrix<Scalar>::Zero(static_cast<Index>(labels.size()), class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= class_count)
        throw DataError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(class_count) + ")");
      m(static_cast<Index>(i), labels[i]) = Scalar(1);
    }
    return OneHotBatch(std::move(m));
  }

  /// Validates that every row holds exactly one 1 and zeros elsewhere.
  explicit OneHotBatch(RowMatrix<Scalar> labels) : labels_(std::move(labels)) {
    for (Index r = 0; r < labels_.rows(); ++r) {
      Index ones = 0;
      for (Index c = 0; c < labels_.cols(); ++c) {
        const Scalar v = labels_(r, c);
        if (v == Scalar(1)) ++ones;
        else if (v != Scalar(0)) throw DataError("one-hot row " + std::to_string(r) + " has a non-binary entry");
      }
      if (ones != 1) throw DataError("one-hot row " + std::to_string(r) + " does not hold exactly one 1");
    }
  }

  const RowMatrix<Scalar>& matrix() const noexcept { return labels_; }
  Index batch_size() const noexcept { return labels_.rows(); }
  Index class_count() const noexcept { return labels_.cols(); }

 private:
  RowMatrix<Scalar> labels_;
};

inline constexpr double kLogClamp = 1e-12;

template <typename Scalar>
struct CrossEntropyResult {
  Scalar loss;
  RowMatrix<Scalar> grad_wrt_logits;
};

/// Mean categorical cross-entropy of softmax outputs. The gradient is taken
/// with respect to the pre-softmax logits: (p - y) / B.
template <typename Derived>
CrossEntropyResult<typename Derived::Scalar> cross_entropy(const Eigen::MatrixBase<Derived>& probs,
                                                           const OneHotBatch<typename Derived::Scalar>& targets) {
  using Scalar = typename Derived::Scalar;
  const auto& y = targets.matrix();
  if (probs.rows() != y.rows() || probs.cols() != y.cols())
    throw ShapeError("cross_entropy: probabilities " + std::to_string(probs.rows()) + "x" +
                     std::to_string(probs.cols()) + " vs targets " + std::to_string(y.rows()) + "x" +
                     std::to_string(y.cols()));
  if (probs.rows() < 1) throw ShapeError("cross_entropy: empty batch");
  const Scalar batch = static_cast<Scalar>(probs.rows());
  const Scalar floor = static_cast<Scalar>(kLogClamp);
  const Scalar total = -(y.array() * probs.array().max(floor).log()).sum();
  RowMatrix<Scalar> grad = (probs - y) / batch;
  return {total / batch, std::move(grad)};
}

template <typename Scalar>
struct CosineResult {
  Scalar value;
  bool degenerate;  // a zero-norm input; value forced to 0
};

template <typename DerivedU, typename DerivedV>
CosineResult<typename DerivedU::Scalar> cosine_similarity(const Eigen::MatrixBase<DerivedU>& u,
                                                          const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size() || u.size() < 1) throw ShapeError("cosine_similarity needs two vectors of equal length");
  const Scalar denom = u.norm() * v.norm();
  if (denom == Scalar(0)) return {Scalar(0), true};
  const Scalar dot = u.cwiseProduct(v).sum();
  return {std::clamp(dot / denom, Scalar(-1), Scalar(1)), false};
}

template <typename Scalar>
struct NtXentResult {
  Scalar loss;
  RowMatrix<Scalar> grad_img;
  RowMatrix<Scalar> grad_aud;
  Index degenerate_views = 0;  // zero-norm embeddings encountered
};

/// Normalized-temperature cross-entropy over the 2B interleaved views
/// (img_0, aud_0, img_1, aud_1, ...). Each anchor's positive is its partner
/// view; the denominator runs over all other 2B-1 views. The result is the
/// mean over all 2B anchors.
template <typename DerivedI, typename DerivedA>
NtXentResult<typename DerivedI::Scalar> ntxent_loss(const Eigen::MatrixBase<DerivedI>& z_img,
                                                    const Eigen::MatrixBase<DerivedA>& z_aud, double temperature) {
  using Scalar = typename DerivedI::Scalar;
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  if (z_img.rows() != z_aud.rows() || z_img.cols() != z_aud.cols())
    throw ShapeError("contrastive views must have equal shapes");
  const Index pairs = z_img.rows();
  if (pairs < 1) throw ShapeError("contrastive loss on an empty batch");
  const Index views = 2 * pairs;
  const Index dim = z_img.cols();
  const Scalar tau = static_cast<Scalar>(temperature);

  RowMatrix<Scalar> v(views, dim);
  for (Index k = 0; k < pairs; ++k) {
    v.row(2 * k) = z_img.row(k);
    v.row(2 * k + 1) = z_aud.row(k);
  }
  NtXentResult<Scalar> result{};
  Vector<Scalar> norms = v.rowwise().norm();
  RowMatrix<Scalar> n(views, dim);
  for (Index r = 0; r < views; ++r) {
    if (norms(r) == Scalar(0)) {
      n.row(r).setZero();
      ++result.degenerate_views;
    } else {
      n.row(r) = v.row(r) / norms(r);
    }
  }
  const RowMatrix<Scalar> sim = (n * n.transpose()) / tau;

  // g(r, w) = dL/dsim(r, w), self pairs excluded.
  RowMatrix<Scalar> g = RowMatrix<Scalar>::Zero(views, views);
  Scalar total = 0;
  for (Index r = 0; r < views; ++r) {
    const Index pos = r ^ 1;
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Index w = 0; w < views; ++w)
      if (w != r) m = std::max(m, sim(r, w));
    Scalar sum = 0;
    for (Index w = 0; w < views; ++w)
      if (w != r) sum += std::exp(sim(r, w) - m);
    const Scalar lse = m + std::log(sum);
    total += lse - sim(r, pos);
    for (Index w = 0; w < views; ++w)
      if (w != r) g(r, w) = std::exp(sim(r, w) - lse);
    g(r, pos) -= Scalar(1);
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(views);
  result.loss = total * scale;

  // sim(r, w) = n_r . n_w / tau appears in rows r and w.
  const RowMatrix<Scalar> dn = ((g + g.transpose()) * n) * (scale / tau);
  RowMatrix<Scalar> dv(views, dim);
  for (Index r = 0; r < views; ++r) {
    if (norms(r) == Scalar(0)) {
      dv.row(r).setZero();
      continue;
    }
    const Scalar radial = dn.row(r).dot(n.row(r));
    dv.row(r) = (dn.row(r) - radial * n.row(r)) / norms(r);
  }
  result.grad_img.resize(pairs, dim);
  result.grad_aud.resize(pairs, dim);
  for (Index k = 0; k < pairs; ++k) {
    result.grad_img.row(k) = dv.row(2 * k);
    result.grad_aud.row(k) = dv.row(2 * k + 1);
  }
  return result;
}

}  // namespace mmfl
