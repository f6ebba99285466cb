#ifndef DDFLOW_IO_FLOW_IO_HPP_
#define DDFLOW_IO_FLOW_IO_HPP_

#include "ddflow/flow/types.hpp"

#include <string>
#include <utility>

namespace ddflow {

/// 1 where a sparse ground-truth flow is defined.
using FlowValidity = BinaryMap<struct FlowValidityTag>;

/// Middlebury layout: float 202021.25, i32 width, i32 height, interleaved f32 (u, v), little-endian.
void write_flo(const std::string& path, const FlowField& flow);
FlowField read_flo(const std::string& path);

/// KITTI layout: 16-bit RGB PNG, channel value = flow * 64 + 2^15, third channel = validity.
/// Writing rejects flows outside the representable range.
void write_kitti_png(const std::string& path, const FlowField& flow, const FlowValidity& valid);
std::pair<FlowField, FlowValidity> read_kitti_png(const std::string& path);

}  // namespace ddflow

#endif  // DDFLOW_IO_FLOW_IO_HPP_
