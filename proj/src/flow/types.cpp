#include "ddflow/flow/types.hpp"

namespace ddflow {

FlowField::FlowField(Index height, Index width) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("FlowField: extents must be positive");
  data_ = Eigen::ArrayXf::Zero(2 * height * width);
}

}  // namespace ddflow
