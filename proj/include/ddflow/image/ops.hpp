#ifndef DDFLOW_IMAGE_OPS_HPP_
#define DDFLOW_IMAGE_OPS_HPP_

#include "ddflow/image/image.hpp"

#include <array>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

namespace ddflow {

/// Luma 0.299 R + 0.587 G + 0.114 B; single-channel images pass through.
Image to_grayscale(const Image& img);

/// Replicates a single channel to RGB; RGB passes through.
Image to_rgb(const Image& img);

/// Soft census descriptor: for each of the window^2-1 neighbours (border
/// replicated), d / sqrt(0.81 + d^2) with d the luma difference to the centre
/// in 8-bit units (255 times the [0, 1] difference).
/// window must be 3, 5 or 7.
Image census_transform(const Image& img, Index window = 3);

Image crop(const Image& img, const CropSpec& spec);

/// Draws one CropSpec uniformly over valid offsets and applies it to both frames.
std::tuple<Image, Image, CropSpec> random_crop_pair(const Image& i1, const Image& i2, Index h, Index w,
                                                    std::mt19937_64& rng);

struct AugmentConfig {
  double flip_horizontal_prob = 0.5;
  double flip_vertical_prob = 0.5;
  bool channel_swap = true;

  static AugmentConfig none() { return {0.0, 0.0, false}; }
};

Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
/// out channel k = in channel perm[k].
Image permute_channels(const Image& img, const std::array<int, 3>& perm);

/// Applies the same random flips and channel permutation to both frames.
std::pair<Image, Image> augment(const Image& i1, const Image& i2, std::mt19937_64& rng,
                                const AugmentConfig& config = {});

/// Level 0 is the input; each further level 2x2-average-pools its predecessor.
std::vector<Image> downsample_pyramid(const Image& img, Index levels);

}  // namespace ddflow

#endif  // DDFLOW_IMAGE_OPS_HPP_
