#pragma once

#include <span>
#include <vector>

#include "mmfl/tensor.hpp"

namespace mmfl {

/// Counts with rows = actual class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Index classes);

  void add(int actual, int predicted, long long count = 1);

  Index classes() const noexcept { return counts_.rows(); }
  long long operator()(Index actual, Index predicted) const { return counts_(actual, predicted); }
  long long total() const { return counts_.sum(); }
  long long trace() const { return counts_.trace(); }
  const Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>& counts() const noexcept { return counts_; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix& a, const ConfusionMatrix& b) { return a.counts_ == b.counts_; }

 private:
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

struct NormalizedConfusion {
  RowMatrixd rates;
  std::vector<bool> empty_rows;  // class absent from the evaluated set
};

/// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> argmax_rows(const RowMatrixd& scores);

double accuracy(std::span<const int> predictions, std::span<const int> labels);
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, Index classes);
NormalizedConfusion normalize(const ConfusionMatrix& cm);

/// |a_fed - a_central|, the federated accuracy loss.
double delta_gap(double a_fed, double a_central);

}  // namespace mmfl
