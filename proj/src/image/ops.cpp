#include "ddflow/image/ops.hpp"

#include "ddflow/diff/graph.hpp"
#include "ddflow/diff/ops.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ddflow {

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw std::invalid_argument("to_grayscale: expected 1 or 3 channels");
  Image out(1, img.height(), img.width());
  const Index n = img.plane();
  const auto& v = img.values();
  out.values() = 0.299f * v.segment(0, n) + 0.587f * v.segment(n, n) + 0.114f * v.segment(2 * n, n);
  return out;
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw std::invalid_argument("to_rgb: expected 1 or 3 channels");
  Image out(3, img.height(), img.width());
  const Index n = img.plane();
  for (Index c = 0; c < 3; ++c) out.values().segment(c * n, n) = img.values();
  return out;
}

Image census_transform(const Image& img, Index window) {
  if (img.descriptor()) throw std::invalid_argument("census_transform: input is already a descriptor image");
  Graph<float> g;
  Var<float> x = g.constant(img.tensor());
  Var<float> c = census(x, window);
  return Image::from_tensor(c.value(), true);
}

Image crop(const Image& img, const CropSpec& spec) {
  if (spec.x0 < 0 || spec.y0 < 0 || spec.h <= 0 || spec.w <= 0 || spec.x0 + spec.w > img.width() ||
      spec.y0 + spec.h > img.height()) {
    throw std::invalid_argument("crop: rectangle does not fit the image");
  }
  Image out(img.channels(), spec.h, spec.w);
  out.set_descriptor(img.descriptor());
  for (Index c = 0; c < img.channels(); ++c)
    for (Index y = 0; y < spec.h; ++y)
      for (Index x = 0; x < spec.w; ++x) out.at(c, y, x) = img.at(c, spec.y0 + y, spec.x0 + x);
  return out;
}

std::tuple<Image, Image, CropSpec> random_crop_pair(const Image& i1, const Image& i2, Index h, Index w,
                                                    std::mt19937_64& rng) {
  if (i1.height() != i2.height() || i1.width() != i2.width()) {
    throw std::invalid_argument("random_crop_pair: frames differ in size");
  }
  if (h <= 0 || w <= 0 || h >= i1.height() || w >= i1.width()) {
    throw std::invalid_argument("random_crop_pair: crop " + std::to_string(h) + "x" + std::to_string(w) +
                                " must be strictly smaller than the frame");
  }
  std::uniform_int_distribution<Index> dy(0, i1.height() - h), dx(0, i1.width() - w);
  CropSpec spec;
  spec.y0 = dy(rng);
  spec.x0 = dx(rng);
  spec.h = h;
  spec.w = w;
  return {crop(i1, spec), crop(i2, spec), spec};
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (Index c = 0; c < img.channels(); ++c)
    for (Index y = 0; y < img.height(); ++y)
      for (Index x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out = img;
  for (Index c = 0; c < img.channels(); ++c)
    for (Index y = 0; y < img.height(); ++y)
      for (Index x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, img.height() - 1 - y, x);
  return out;
}

Image permute_channels(const Image& img, const std::array<int, 3>& perm) {
  if (img.channels() != 3) throw std::invalid_argument("permute_channels: expected 3 channels");
  std::array<int, 3> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 3>{0, 1, 2}) throw std::invalid_argument("permute_channels: not a permutation");
  Image out = img;
  const Index n = img.plane();
  for (Index k = 0; k < 3; ++k) out.values().segment(k * n, n) = img.values().segment(perm[k] * n, n);
  return out;
}

std::pair<Image, Image> augment(const Image& i1, const Image& i2, std::mt19937_64& rng,
                                const AugmentConfig& config) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Draw all randomness up front so the stream consumed does not depend on outcomes.
  const bool fh = u(rng) < config.flip_horizontal_prob;
  const bool fv = u(rng) < config.flip_vertical_prob;
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);

  Image a = i1, b = i2;
  if (fh) {
    a = flip_horizontal(a);
    b = flip_horizontal(b);
  }
  if (fv) {
    a = flip_vertical(a);
    b = flip_vertical(b);
  }
  if (config.channel_swap && a.channels() == 3) {
    a = permute_channels(a, perm);
    b = permute_channels(b, perm);
  }
  return {std::move(a), std::move(b)};
}

std::vector<Image> downsample_pyramid(const Image& img, Index levels) {
  if (levels < 1) throw std::invalid_argument("downsample_pyramid: need at least one level");
  std::vector<Image> out{img};
  for (Index l = 1; l < levels; ++l) {
    const Image& prev = out.back();
    if (prev.height() % 2 != 0 || prev.width() % 2 != 0) {
      throw std::invalid_argument("downsample_pyramid: level " + std::to_string(l - 1) + " has odd extent");
    }
    Image next(prev.channels(), prev.height() / 2, prev.width() / 2);
    next.set_descriptor(prev.descriptor());
    for (Index c = 0; c < prev.channels(); ++c)
      for (Index y = 0; y < next.height(); ++y)
        for (Index x = 0; x < next.width(); ++x) {
          next.at(c, y, x) = 0.25f * (prev.at(c, 2 * y, 2 * x) + prev.at(c, 2 * y, 2 * x + 1) +
                                      prev.at(c, 2 * y + 1, 2 * x) + prev.at(c, 2 * y + 1, 2 * x + 1));
        }
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace ddflow
