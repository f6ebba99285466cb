#include "ddflow/image/image.hpp"

#include <stdexcept>

namespace ddflow {

Image::Image(Index channels, Index height, Index width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw std::invalid_argument("Image: extents must be positive");
  }
  values_ = Eigen::ArrayXf::Constant(channels * height * width, fill);
}

Image Image::from_tensor(const Tensor<float>& t, bool descriptor) {
  const Shape s = as_nchw(t.shape());
  if (s[0] != 1) throw std::invalid_argument("Image::from_tensor: batch must be 1, got " + shape_string(t.shape()));
  Image img(s[1], s[2], s[3]);
  img.values_ = t.values();
  img.descriptor_ = descriptor;
  return img;
}

}  // namespace ddflow
