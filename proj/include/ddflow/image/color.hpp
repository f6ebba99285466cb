#ifndef DDFLOW_IMAGE_COLOR_HPP_
#define DDFLOW_IMAGE_COLOR_HPP_

#include "ddflow/flow/types.hpp"
#include "ddflow/image/image.hpp"

#include <optional>

namespace ddflow {

/// Position of a displacement on the colorwheel in [0, 1); opposite vectors are 0.5 apart.
double colorwheel_position(double u, double v);

/// Colorwheel rendering: hue from the flow angle, saturation from magnitude / max_norm
/// clamped to 1, white at zero flow. max_norm defaults to the 99th-percentile magnitude.
Image flow_to_color(const FlowField& flow, std::optional<double> max_norm = std::nullopt);

/// 99th-percentile flow magnitude (nearest rank).
double magnitude_percentile(const FlowField& flow, double fraction = 0.99);

}  // namespace ddflow

#endif  // DDFLOW_IMAGE_COLOR_HPP_
