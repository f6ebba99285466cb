#include "ddflow/io/flow_io.hpp"

#include "ddflow/io/png.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ddflow {
namespace {

static_assert(std::endian::native == std::endian::little, "flow file I/O assumes a little-endian host");

constexpr float kFloMagic = 202021.25f;
constexpr double kKittiScale = 64.0;
constexpr double kKittiOffset = 32768.0;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != std::streamsize(sizeof(T))) throw std::runtime_error(path + ": truncated .flo header");
  return v;
}

}  // namespace

void write_flo(const std::string& path, const FlowField& flow) {
  if (flow.empty()) throw std::invalid_argument("write_flo: empty flow field");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  put(out, kFloMagic);
  put(out, std::int32_t(flow.width()));
  put(out, std::int32_t(flow.height()));
  out.write(reinterpret_cast<const char*>(flow.data().data()), std::streamsize(flow.data().size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

FlowField read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const float magic = get<float>(in, path);
  if (std::memcmp(&magic, &kFloMagic, sizeof(float)) != 0) {
    std::ostringstream msg;
    msg << path << ": bad .flo magic " << magic << " (expected 202021.25)";
    throw std::runtime_error(msg.str());
  }
  const std::int32_t w = get<std::int32_t>(in, path), h = get<std::int32_t>(in, path);
  constexpr std::int32_t kMaxExtent = 1 << 15;
  if (w <= 0 || h <= 0 || w > kMaxExtent || h > kMaxExtent) {
    throw std::runtime_error(path + ": implausible .flo extent " + std::to_string(w) + "x" + std::to_string(h));
  }
  FlowField flow(h, w);
  const auto bytes = std::streamsize(flow.data().size() * sizeof(float));
  in.read(reinterpret_cast<char*>(flow.data().data()), bytes);
  if (in.gcount() != bytes) throw std::runtime_error(path + ": truncated .flo payload");
  return flow;
}

void write_kitti_png(const std::string& path, const FlowField& flow, const FlowValidity& valid) {
  if (valid.height() != flow.height() || valid.width() != flow.width()) {
    throw std::invalid_argument("write_kitti_png: validity mask shape differs from flow");
  }
  RawImage raw;
  raw.width = flow.width();
  raw.height = flow.height();
  raw.channels = 3;
  raw.bit_depth = 16;
  raw.samples.resize(std::size_t(3 * flow.height() * flow.width()));
  auto encode = [&](float f, Index y, Index x) {
    const double s = std::round(double(f) * kKittiScale + kKittiOffset);
    if (!(s >= 0.0 && s <= 65535.0)) {
      throw std::invalid_argument("write_kitti_png: flow " + std::to_string(f) + " at (" + std::to_string(x) + ", " +
                                  std::to_string(y) + ") outside the 16-bit range");
    }
    return std::uint16_t(s);
  };
  for (Index y = 0; y < flow.height(); ++y)
    for (Index x = 0; x < flow.width(); ++x) {
      const std::size_t i = std::size_t(3 * (y * flow.width() + x));
      raw.samples[i] = encode(flow.u(y, x), y, x);
      raw.samples[i + 1] = encode(flow.v(y, x), y, x);
      raw.samples[i + 2] = valid(y, x) ? 1 : 0;
    }
  write_png_raw(path, raw);
}

std::pair<FlowField, FlowValidity> read_kitti_png(const std::string& path) {
  const RawImage raw = read_png_raw(path);
  if (raw.bit_depth != 16 || raw.channels != 3) {
    throw std::runtime_error(path + ": KITTI flow must be a 16-bit 3-channel PNG, got " +
                             std::to_string(raw.bit_depth) + "-bit with " + std::to_string(raw.channels) +
                             " channels");
  }
  FlowField flow(raw.height, raw.width);
  FlowValidity valid(raw.height, raw.width);
  for (Index y = 0; y < raw.height; ++y)
    for (Index x = 0; x < raw.width; ++x) {
      const std::size_t i = std::size_t(3 * (y * raw.width + x));
      flow.u(y, x) = float((double(raw.samples[i]) - kKittiOffset) / kKittiScale);
      flow.v(y, x) = float((double(raw.samples[i + 1]) - kKittiOffset) / kKittiScale);
      valid.set(y, x, raw.samples[i + 2] > 0);
    }
  return {std::move(flow), std::move(valid)};
}

}  // namespace ddflow
