#include "mmfl/metrics.hpp"

#include <cmath>
#include <string>

namespace mmfl {

ConfusionMatrix::ConfusionMatrix(Index classes) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_ = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(classes, classes);
}

void ConfusionMatrix::add(int actual, int predicted, long long count) {
  if (actual < 0 || actual >= classes() || predicted < 0 || predicted >= classes())
    throw DataError("class id outside confusion matrix: actual " + std::to_string(actual) + ", predicted " +
                    std::to_string(predicted));
  counts_(actual, predicted) += count;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw ShapeError("confusion matrices of different class counts");
  counts_ += other.counts_;
  return *this;
}

std::vector<int> argmax_rows(const RowMatrixd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index r = 0; r < scores.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: predictions and labels differ in length");
  if (labels.empty()) throw DataError("accuracy of an empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, Index classes) {
  if (predictions.size() != labels.size()) throw ShapeError("confusion: predictions and labels differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], predictions[i]);
  return cm;
}

NormalizedConfusion normalize(const ConfusionMatrix& cm) {
  const Index c = cm.classes();
  NormalizedConfusion out{RowMatrixd::Zero(c, c), std::vector<bool>(static_cast<std::size_t>(c), false)};
  for (Index r = 0; r < c; ++r) {
    const long long row_sum = cm.counts().row(r).sum();
    if (row_sum == 0) {
      out.empty_rows[static_cast<std::size_t>(r)] = true;
      continue;
    }
    for (Index k = 0; k < c; ++k) out.rates(r, k) = static_cast<double>(cm(r, k)) / static_cast<double>(row_sum);
  }
  return out;
}

double delta_gap(double a_fed, double a_central) { return std::abs(a_fed - a_central); }

}  // namespace mmfl
