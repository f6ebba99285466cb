#ifndef DDFLOW_IMAGE_IMAGE_HPP_
#define DDFLOW_IMAGE_IMAGE_HPP_

#include "ddflow/diff/tensor.hpp"

#include <Eigen/Core>

namespace ddflow {

/// Planar (channel-major) float image. Ingested images hold values in [0, 1];
/// descriptor images (census output) are unbounded and have window^2-1 channels.
class Image {
 public:
  Image() = default;
  Image(Index channels, Index height, Index width, float fill = 0.0f);

  Index channels() const { return channels_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index plane() const { return height_ * width_; }
  bool descriptor() const { return descriptor_; }
  void set_descriptor(bool d) { descriptor_ = d; }
  bool empty() const { return values_.size() == 0; }

  float& at(Index c, Index y, Index x) { return values_[(c * height_ + y) * width_ + x]; }
  float at(Index c, Index y, Index x) const { return values_[(c * height_ + y) * width_ + x]; }

  Eigen::ArrayXf& values() { return values_; }
  const Eigen::ArrayXf& values() const { return values_; }

  /// [C,H,W] view of the pixel data.
  template <typename S = float>
  Tensor<S> tensor() const {
    return Tensor<S>({channels_, height_, width_}, values_.cast<S>());
  }
  /// Accepts [C,H,W] or [1,C,H,W].
  static Image from_tensor(const Tensor<float>& t, bool descriptor = false);

  bool operator==(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_ &&
           descriptor_ == o.descriptor_ && (values_ == o.values_).all();
  }

 private:
  Index channels_ = 0, height_ = 0, width_ = 0;
  bool descriptor_ = false;
  Eigen::ArrayXf values_;
};

/// Rectangle selecting a patch: columns [x0, x0 + w), rows [y0, y0 + h).
struct CropSpec {
  Index x0 = 0, y0 = 0, h = 0, w = 0;

  /// Fits inside H x W and is strictly smaller in both extents.
  bool valid_for(Index height, Index width) const {
    return x0 >= 0 && y0 >= 0 && h > 0 && w > 0 && h < height && w < width && x0 + w <= width &&
           y0 + h <= height;
  }
  bool operator==(const CropSpec&) const = default;
};

}  // namespace ddflow

#endif  // DDFLOW_IMAGE_IMAGE_HPP_
