#ifndef DDFLOW_IO_PNG_HPP_
#define DDFLOW_IO_PNG_HPP_

#include "ddflow/flow/types.hpp"
#include "ddflow/image/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ddflow {

/// Undecoded pixel samples, interleaved row-major.
struct RawImage {
  Index width = 0, height = 0, channels = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

RawImage read_png_raw(const std::string& path);
void write_png_raw(const std::string& path, const RawImage& raw);

/// PNG (8/16-bit gray, gray+alpha, RGB, RGBA) or binary PPM (P6), scaled to [0, 1].
/// Alpha is dropped.
Image read_image(const std::string& path);

/// 8-bit PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::string& path, const Image& img);

/// 0 -> black, 1 -> white.
void write_png(const std::string& path, const OcclusionMap& occ);
/// Pixels brighter than mid-gray read as occluded.
OcclusionMap read_occlusion_png(const std::string& path);

}  // namespace ddflow

#endif  // DDFLOW_IO_PNG_HPP_
