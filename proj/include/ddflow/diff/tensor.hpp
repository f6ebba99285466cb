#ifndef DDFLOW_DIFF_TENSOR_HPP_
#define DDFLOW_DIFF_TENSOR_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ddflow {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array with an explicit shape. The last axis is contiguous.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    values_ = Array::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw std::invalid_argument("Tensor: " + std::to_string(values_.size()) +
                                  " values do not fill shape " + shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Eigen::Map<const Array>(values.begin(), Index(values.size()))) {}

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return constant({1}, value); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return Index(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(std::size_t(axis)); }
  Index size() const { return values_.size(); }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  /// Same values viewed under a new shape of equal size.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && (values_ == other.values_).all();
  }

 private:
  void check_shape() const {
    for (Index e : shape_) {
      if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in " + shape_string(shape_));
    }
  }

  Shape shape_;
  Array values_;
};

/// Views a rank-3 [C,H,W] shape as [1,C,H,W]; rank-4 passes through.
inline Shape as_nchw(const Shape& shape) {
  if (shape.size() == 3) return {1, shape[0], shape[1], shape[2]};
  if (shape.size() == 4) return shape;
  throw std::invalid_argument("expected [C,H,W] or [N,C,H,W], got " + shape_string(shape));
}

}  // namespace ddflow

#endif  // DDFLOW_DIFF_TENSOR_HPP_
