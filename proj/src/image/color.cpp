#include "ddflow/image/color.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace ddflow {
namespace {

// Middlebury wheel segments: red-yellow, yellow-green, green-cyan, cyan-blue,
// blue-magenta, magenta-red.
std::vector<std::array<double, 3>> build_wheel() {
  constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
  std::vector<std::array<double, 3>> wheel;
  for (int i = 0; i < kRY; ++i) wheel.push_back({1.0, double(i) / kRY, 0.0});
  for (int i = 0; i < kYG; ++i) wheel.push_back({1.0 - double(i) / kYG, 1.0, 0.0});
  for (int i = 0; i < kGC; ++i) wheel.push_back({0.0, 1.0, double(i) / kGC});
  for (int i = 0; i < kCB; ++i) wheel.push_back({0.0, 1.0 - double(i) / kCB, 1.0});
  for (int i = 0; i < kBM; ++i) wheel.push_back({double(i) / kBM, 0.0, 1.0});
  for (int i = 0; i < kMR; ++i) wheel.push_back({1.0, 0.0, 1.0 - double(i) / kMR});
  return wheel;
}

const std::vector<std::array<double, 3>>& wheel() {
  static const auto w = build_wheel();
  return w;
}

}  // namespace

double colorwheel_position(double u, double v) {
  double p = 0.5 * (std::atan2(-v, -u) / std::numbers::pi + 1.0);
  if (p >= 1.0) p -= 1.0;
  return p;
}

double magnitude_percentile(const FlowField& flow, double fraction) {
  if (flow.empty()) return 0.0;
  std::vector<float> mags;
  mags.reserve(std::size_t(flow.height() * flow.width()));
  for (Index y = 0; y < flow.height(); ++y)
    for (Index x = 0; x < flow.width(); ++x) mags.push_back(std::hypot(flow.u(y, x), flow.v(y, x)));
  const auto k = std::min(mags.size() - 1, std::size_t(std::ceil(fraction * double(mags.size()))) - 1);
  std::nth_element(mags.begin(), mags.begin() + std::ptrdiff_t(k), mags.end());
  return mags[k];
}

Image flow_to_color(const FlowField& flow, std::optional<double> max_norm) {
  const double norm = max_norm ? *max_norm : magnitude_percentile(flow);
  const auto& w = wheel();
  const double ncols = double(w.size());
  Image img(3, flow.height(), flow.width(), 1.0f);
  for (Index y = 0; y < flow.height(); ++y)
    for (Index x = 0; x < flow.width(); ++x) {
      const float u = flow.u(y, x), v = flow.v(y, x);
      const float mag = std::hypot(u, v);
      if (mag == 0.0f || !(norm > 0.0)) continue;
      const double rad = std::min(1.0, double(mag) / norm);
      const double fk = colorwheel_position(u, v) * ncols;
      const auto k0 = std::size_t(fk) % w.size();
      const auto k1 = (k0 + 1) % w.size();
      const double f = fk - std::floor(fk);
      for (Index c = 0; c < 3; ++c) {
        const double col = (1.0 - f) * w[k0][std::size_t(c)] + f * w[k1][std::size_t(c)];
        img.at(c, y, x) = float(1.0 - rad * (1.0 - col));
      }
    }
  return img;
}

}  // namespace ddflow
