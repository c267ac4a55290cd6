#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmfl/error.hpp"

namespace mmfl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major array with an explicit shape. Rank 1 and rank 2 are the
/// only ranks the engine produces, but any positive shape is accepted.
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_ = Vector<Scalar>::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_size(shape_) != data_.size())
      throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                       std::to_string(data_.size()) + " values");
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Eigen::Map<const Vector<Scalar>>(values.begin(),
                                                                  static_cast<Index>(values.size()))) {}

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    RowMatrix<Scalar> rm = m;
    return Tensor({rm.rows(), rm.cols()}, Eigen::Map<const Vector<Scalar>>(rm.data(), rm.size()));
  }

  template <typename Derived>
  static Tensor from_vector(const Eigen::MatrixBase<Derived>& v) {
    Vector<Scalar> copy = v;
    const Index n = copy.size();
    return Tensor({n}, std::move(copy));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  Index size() const noexcept { return data_.size(); }
  Index dim(std::size_t axis) const { return shape_.at(axis); }

  Vector<Scalar>& data() noexcept { return data_; }
  const Vector<Scalar>& data() const noexcept { return data_; }

  /// Rank-2 view; a rank-1 tensor is viewed as a single row.
  MatrixMap matrix() {
    auto [r, c] = matrix_dims();
    return MatrixMap(data_.data(), r, c);
  }
  ConstMatrixMap matrix() const {
    auto [r, c] = matrix_dims();
    return ConstMatrixMap(data_.data(), r, c);
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one axis");
    for (Index d : shape_)
      if (d <= 0) throw ShapeError("tensor shape " + shape_string(shape_) + " has a non-positive axis");
  }

  std::pair<Index, Index> matrix_dims() const {
    if (shape_.size() == 1) return {1, shape_[0]};
    if (shape_.size() == 2) return {shape_[0], shape_[1]};
    throw ShapeError("matrix view requires rank 1 or 2, got " + shape_string(shape_));
  }

  Shape shape_;
  Vector<Scalar> data_;
};

/// Named tensors, iterated in lexicographic key order. The unit of model
/// exchange between participants and the server.
template <typename Scalar>
class ParameterMap {
 public:
  using Storage = std::map<std::string, Tensor<Scalar>>;
  using const_iterator = typename Storage::const_iterator;
  using iterator = typename Storage::iterator;

  ParameterMap() = default;
  ParameterMap(std::initializer_list<typename Storage::value_type> init) : entries_(init) {}

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const Tensor<Scalar>& at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw CompatibilityError(key, "missing");
    return it->second;
  }
  Tensor<Scalar>& at(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw CompatibilityError(key, "missing");
    return it->second;
  }

  /// Inserts a new key; duplicate keys are rejected.
  void insert(std::string key, Tensor<Scalar> value) {
    auto [it, inserted] = entries_.emplace(std::move(key), std::move(value));
    if (!inserted) throw CompatibilityError(it->first, "duplicate key");
  }

  void insert_or_assign(const std::string& key, Tensor<Scalar> value) {
    entries_.insert_or_assign(key, std::move(value));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  /// Entries whose key starts with `prefix` followed by a dot.
  ParameterMap with_prefix(const std::string& prefix) const {
    ParameterMap out;
    const std::string p = prefix + '.';
    for (auto it = entries_.lower_bound(p); it != entries_.end() && it->first.compare(0, p.size(), p) == 0; ++it)
      out.entries_.insert(*it);
    return out;
  }

  /// Copies every entry of `other` into this map; keys must not collide.
  void merge(const ParameterMap& other) {
    for (const auto& [k, v] : other) insert(k, v);
  }

  bool all_finite() const {
    for (const auto& [_, v] : entries_)
      if (!v.all_finite()) return false;
    return true;
  }

  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }
  iterator begin() { return entries_.begin(); }
  iterator end() { return entries_.end(); }

  friend bool operator==(const ParameterMap& a, const ParameterMap& b) { return a.entries_ == b.entries_; }

 private:
  Storage entries_;
};

/// Throws unless `a` and `b` have identical key sets and per-key shapes.
template <typename Scalar>
void require_same_layout(const ParameterMap<Scalar>& a, const ParameterMap<Scalar>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first))
      throw CompatibilityError(ia->first, "present only in the first map");
    if (ia == a.end() || ib->first < ia->first)
      throw CompatibilityError(ib->first, "present only in the second map");
    if (ia->second.shape() != ib->second.shape())
      throw CompatibilityError(ia->first, "shape " + shape_string(ia->second.shape()) + " vs " +
                                              shape_string(ib->second.shape()));
    ++ia;
    ++ib;
  }
}

using Tensord = Tensor<double>;
using ParameterMapd = ParameterMap<double>;
using RowMatrixd = RowMatrix<double>;

}  // namespace mmfl
