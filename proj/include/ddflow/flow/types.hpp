#ifndef DDFLOW_FLOW_TYPES_HPP_
#define DDFLOW_FLOW_TYPES_HPP_

#include "ddflow/diff/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ddflow {

/// Dense per-pixel displacement (u, v) in pixels, stored interleaved row-major.
/// Pixel (x, y) of frame 1 corresponds to (x + u, y + v) in frame 2.
class FlowField {
 public:
  FlowField() = default;
  FlowField(Index height, Index width);

  Index height() const { return height_; }
  Index width() const { return width_; }
  bool empty() const { return data_.size() == 0; }

  float& u(Index y, Index x) { return data_[2 * (y * width_ + x)]; }
  float& v(Index y, Index x) { return data_[2 * (y * width_ + x) + 1]; }
  float u(Index y, Index x) const { return data_[2 * (y * width_ + x)]; }
  float v(Index y, Index x) const { return data_[2 * (y * width_ + x) + 1]; }

  Eigen::ArrayXf& data() { return data_; }
  const Eigen::ArrayXf& data() const { return data_; }

  /// [2,H,W] planar copy (u plane then v plane).
  template <typename S = float>
  Tensor<S> planar() const {
    Tensor<S> t({2, height_, width_});
    const Index n = height_ * width_;
    for (Index i = 0; i < n; ++i) {
      t[i] = S(data_[2 * i]);
      t[n + i] = S(data_[2 * i + 1]);
    }
    return t;
  }

  /// Sample `n` of a [N,2,H,W] tensor, or a [2,H,W] tensor when n == 0.
  template <typename S>
  static FlowField from_planar(const Tensor<S>& t, Index n = 0) {
    const Shape s = as_nchw(t.shape());
    if (s[1] != 2) throw std::invalid_argument("FlowField::from_planar: expected 2 channels");
    if (n < 0 || n >= s[0]) throw std::invalid_argument("FlowField::from_planar: sample out of range");
    FlowField f(s[2], s[3]);
    const Index plane = s[2] * s[3];
    const Index base = n * 2 * plane;
    for (Index i = 0; i < plane; ++i) {
      f.data_[2 * i] = float(t[base + i]);
      f.data_[2 * i + 1] = float(t[base + plane + i]);
    }
    return f;
  }

  bool all_finite() const { return data_.isFinite().all(); }
  bool operator==(const FlowField& o) const {
    return height_ == o.height_ && width_ == o.width_ && (data_ == o.data_).all();
  }

 private:
  Index height_ = 0, width_ = 0;
  Eigen::ArrayXf data_;
};

/// H x W map with entries in {0, 1}, row-major.
template <typename Tag>
class BinaryMap {
 public:
  BinaryMap() = default;
  BinaryMap(Index height, Index width, bool fill = false) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("BinaryMap: extents must be positive");
    bits_.assign(std::size_t(height * width), fill ? 1 : 0);
  }

  Index height() const { return height_; }
  Index width() const { return width_; }
  Index size() const { return height_ * width_; }

  bool operator()(Index y, Index x) const { return bits_[std::size_t(y * width_ + x)] != 0; }
  bool operator[](Index i) const { return bits_[std::size_t(i)] != 0; }
  void set(Index y, Index x, bool value) { bits_[std::size_t(y * width_ + x)] = value ? 1 : 0; }
  void set(Index i, bool value) { bits_[std::size_t(i)] = value ? 1 : 0; }

  Index count() const {
    Index n = 0;
    for (std::uint8_t b : bits_) n += b;
    return n;
  }

  /// [H,W] tensor of 0/1 values.
  template <typename S = float>
  Tensor<S> tensor() const {
    Tensor<S> t({height_, width_});
    for (Index i = 0; i < size(); ++i) t[i] = S(bits_[std::size_t(i)]);
    return t;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const BinaryMap& o) const = default;

 private:
  Index height_ = 0, width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct OcclusionTag;
struct ValidTag;
/// 1 marks a pixel of frame 1 with no correspondence in frame 2.
using OcclusionMap = BinaryMap<OcclusionTag>;
/// 1 marks a pixel that contributes to the distillation loss.
using ValidMask = BinaryMap<ValidTag>;

}  // namespace ddflow

#endif  // DDFLOW_FLOW_TYPES_HPP_
