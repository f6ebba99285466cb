#ifndef DDFLOW_DATA_SYNTHETIC_HPP_
#define DDFLOW_DATA_SYNTHETIC_HPP_

#include "ddflow/flow/occlusion.hpp"
#include "ddflow/flow/types.hpp"
#include "ddflow/image/image.hpp"
#include "ddflow/io/flow_io.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace ddflow {

/// Frame pair with ground truth. Ground truth is for evaluation only.
struct LabeledPair {
  Image i1, i2;
  FlowField flow_f, flow_b;
  OcclusionMap occ_f, occ_b;
  FlowValidity valid;

  bool operator==(const LabeledPair&) const = default;
};

struct SyntheticConfig {
  Index height = 64;
  Index width = 64;
  /// Largest per-axis integer displacement of any layer.
  Index max_shift = 8;
  Index min_sprites = 1;
  Index max_sprites = 3;
  /// Sprite side length as a fraction of the frame side.
  double min_sprite_fraction = 0.2;
  double max_sprite_fraction = 0.45;
  /// Box radius of the texture smoothing passes.
  Index blur_radius = 2;

  void validate() const;
};

struct Sprite {
  Index x0 = 0, y0 = 0, h = 0, w = 0;  // frame-1 placement; may extend past the frame
  Index dx = 0, dy = 0;                 // integer translation between frames
  Image texture;                        // h x w
};

/// Two-frame scene: a translating background plus translating rectangular sprites
/// (later sprites on top).
struct SyntheticScene {
  Index height = 0, width = 0;
  Index bg_dx = 0, bg_dy = 0;
  Index margin = 0;
  Image background;  // (height + 2 margin) x (width + 2 margin)
  std::vector<Sprite> sprites;

  /// Index of the top layer at (x, y) in frame t (0 or 1): -1 background, else sprite index.
  int layer_at(Index t, Index x, Index y) const;
  LabeledPair render() const;
};

/// White noise smoothed by three passes of a (2 blur_radius + 1)-wide box mean,
/// then scaled to [0, 1] and quantized to 8-bit levels.
Image smooth_noise_texture(Index channels, Index height, Index width, Index blur_radius, std::mt19937_64& rng);

/// Random scene. Layer velocities are pairwise distinct by a margin large enough
/// that the forward-backward check flags exactly the ground-truth occlusions.
SyntheticScene random_scene(const SyntheticConfig& config, std::mt19937_64& rng);

/// `count` pairs drawn from a generator seeded with `seed`.
std::vector<LabeledPair> gen_synthetic(std::uint64_t seed, Index count, const SyntheticConfig& config);

/// Pair `index` of an unbounded stream; independent of every other index.
LabeledPair synthetic_pair(std::uint64_t seed, std::uint64_t index, const SyntheticConfig& config);

/// Fraction of frame-1 pixels occluded in the forward direction.
double occluded_fraction(const LabeledPair& pair);

}  // namespace ddflow

#endif  // DDFLOW_DATA_SYNTHETIC_HPP_
