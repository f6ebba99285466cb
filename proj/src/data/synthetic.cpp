#include "ddflow/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ddflow {
namespace {

struct Velocity {
  Index dx, dy;
};

// Layers must be told apart by the forward-backward check at its default thresholds.
bool separable(const Velocity& a, const Velocity& b, const OcclusionParams& p) {
  const double ddx = double(a.dx - b.dx), ddy = double(a.dy - b.dy);
  const double diff = ddx * ddx + ddy * ddy;
  const double mags = double(a.dx * a.dx + a.dy * a.dy + b.dx * b.dx + b.dy * b.dy);
  return diff >= 4.0 && diff >= p.alpha1 * mags + p.alpha2;
}

Velocity draw_velocity(Index max_shift, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> d(-max_shift, max_shift);
  const Index dx = d(rng);
  const Index dy = d(rng);
  return {dx, dy};
}

bool inside(Index x, Index y, Index w, Index h) { return x >= 0 && y >= 0 && x < w && y < h; }

// Running-sum box mean along one axis; windows are truncated at the edges.
// A single box pass leaves a derivative that is itself white noise; three passes give
// a near-Gaussian kernel whose local gradients vary smoothly.
constexpr int kBoxPasses = 3;

void box_mean_1d(const float* in, float* out, Index n, Index stride, Index r) {
  double s = 0.0;
  for (Index i = 0; i <= std::min(n - 1, r); ++i) s += in[i * stride];
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - r), hi = std::min(n - 1, i + r);
    out[i * stride] = float(s / double(hi - lo + 1));
    if (i + r + 1 < n) s += in[(i + r + 1) * stride];
    if (i - r >= 0) s -= in[(i - r) * stride];
  }
}

}  // namespace

void SyntheticConfig::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("SyntheticConfig: extents must be positive");
  if (max_shift < 0) throw std::invalid_argument("SyntheticConfig: max_shift must be non-negative");
  if (min_sprites < 0 || max_sprites < min_sprites) throw std::invalid_argument("SyntheticConfig: bad sprite range");
  if (!(min_sprite_fraction > 0.0 && min_sprite_fraction <= max_sprite_fraction && max_sprite_fraction <= 1.0)) {
    throw std::invalid_argument("SyntheticConfig: bad sprite size range");
  }
  if (blur_radius < 0) throw std::invalid_argument("SyntheticConfig: blur radius must be non-negative");
  if (max_sprites > 0 && max_shift < 2) {
    throw std::invalid_argument("SyntheticConfig: sprites need max_shift >= 2 to move distinctly from the background");
  }
}

Image smooth_noise_texture(Index channels, Index height, Index width, Index blur_radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image out(channels, height, width);
  for (Index i = 0; i < out.values().size(); ++i) out.values()[i] = u(rng);
  Eigen::ArrayXf tmp(height * width);
  for (Index c = 0; c < channels; ++c) {
    float* plane = out.values().data() + c * out.plane();
    for (int pass = 0; pass < kBoxPasses; ++pass) {
      for (Index y = 0; y < height; ++y) box_mean_1d(plane + y * width, tmp.data() + y * width, width, 1, blur_radius);
      for (Index x = 0; x < width; ++x) box_mean_1d(tmp.data() + x, plane + x, height, width, blur_radius);
    }
  }
  for (Index c = 0; c < channels; ++c) {
    auto plane = out.values().segment(c * out.plane(), out.plane());
    const float lo = plane.minCoeff(), hi = plane.maxCoeff();
    if (hi > lo) plane = (plane - lo) / (hi - lo);
  }
  // Quantize to 8-bit levels so frames survive a PNG round trip unchanged.
  for (Index i = 0; i < out.values().size(); ++i) {
    out.values()[i] = float(std::round(double(out.values()[i]) * 255.0) / 255.0);
  }
  return out;
}

int SyntheticScene::layer_at(Index t, Index x, Index y) const {
  for (int s = int(sprites.size()) - 1; s >= 0; --s) {
    const Sprite& sp = sprites[std::size_t(s)];
    const Index sx = x - sp.x0 - t * sp.dx, sy = y - sp.y0 - t * sp.dy;
    if (inside(sx, sy, sp.w, sp.h)) return s;
  }
  return -1;
}

LabeledPair SyntheticScene::render() const {
  const Index h = height, w = width;
  const Index channels = background.channels();
  LabeledPair p;
  p.i1 = Image(channels, h, w);
  p.i2 = Image(channels, h, w);
  p.flow_f = FlowField(h, w);
  p.flow_b = FlowField(h, w);
  p.occ_f = OcclusionMap(h, w);
  p.occ_b = OcclusionMap(h, w);
  p.valid = FlowValidity(h, w, true);

  auto velocity = [&](int layer) {
    return layer < 0 ? Velocity{bg_dx, bg_dy} : Velocity{sprites[std::size_t(layer)].dx, sprites[std::size_t(layer)].dy};
  };
  auto color = [&](Index t, int layer, Index c, Index x, Index y) {
    if (layer < 0) return background.at(c, y + margin - t * bg_dy, x + margin - t * bg_dx);
    const Sprite& sp = sprites[std::size_t(layer)];
    return sp.texture.at(c, y - sp.y0 - t * sp.dy, x - sp.x0 - t * sp.dx);
  };

  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int l1 = layer_at(0, x, y), l2 = layer_at(1, x, y);
      for (Index c = 0; c < channels; ++c) {
        p.i1.at(c, y, x) = color(0, l1, c, x, y);
        p.i2.at(c, y, x) = color(1, l2, c, x, y);
      }
      const Velocity v1 = velocity(l1), v2 = velocity(l2);
      p.flow_f.u(y, x) = float(v1.dx);
      p.flow_f.v(y, x) = float(v1.dy);
      p.flow_b.u(y, x) = float(-v2.dx);
      p.flow_b.v(y, x) = float(-v2.dy);

      const Index fx = x + v1.dx, fy = y + v1.dy;
      p.occ_f.set(y, x, !inside(fx, fy, w, h) || layer_at(1, fx, fy) != l1);
      const Index bx = x - v2.dx, by = y - v2.dy;
      p.occ_b.set(y, x, !inside(bx, by, w, h) || layer_at(0, bx, by) != l2);
    }
  return p;
}

SyntheticScene random_scene(const SyntheticConfig& config, std::mt19937_64& rng) {
  config.validate();
  const OcclusionParams thresholds;
  SyntheticScene scene;
  scene.height = config.height;
  scene.width = config.width;
  scene.margin = config.max_shift;
  scene.background = smooth_noise_texture(3, config.height + 2 * scene.margin, config.width + 2 * scene.margin,
                                          config.blur_radius, rng);
  const Velocity bg = draw_velocity(config.max_shift, rng);
  scene.bg_dx = bg.dx;
  scene.bg_dy = bg.dy;

  std::vector<Velocity> used{bg};
  std::uniform_int_distribution<Index> count(config.min_sprites, config.max_sprites);
  const Index n = count(rng);
  const Index side = std::min(config.height, config.width);
  std::uniform_int_distribution<Index> size(std::max<Index>(1, Index(std::lround(config.min_sprite_fraction * side))),
                                            std::max<Index>(1, Index(std::lround(config.max_sprite_fraction * side))));
  for (Index k = 0; k < n; ++k) {
    Sprite sp;
    sp.h = size(rng);
    sp.w = size(rng);
    std::uniform_int_distribution<Index> px(-sp.w / 2, config.width - sp.w / 2 - 1);
    std::uniform_int_distribution<Index> py(-sp.h / 2, config.height - sp.h / 2 - 1);
    sp.x0 = px(rng);
    sp.y0 = py(rng);
    Velocity v{0, 0};
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      v = draw_velocity(config.max_shift, rng);
      ok = std::all_of(used.begin(), used.end(), [&](const Velocity& u) { return separable(v, u, thresholds); });
    }
    if (!ok) throw std::runtime_error("random_scene: could not draw a separable sprite velocity");
    used.push_back(v);
    sp.dx = v.dx;
    sp.dy = v.dy;
    sp.texture = smooth_noise_texture(3, sp.h, sp.w, config.blur_radius, rng);
    scene.sprites.push_back(std::move(sp));
  }
  return scene;
}

LabeledPair synthetic_pair(std::uint64_t seed, std::uint64_t index, const SyntheticConfig& config) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  std::mt19937_64 rng(seq);
  return random_scene(config, rng).render();
}

std::vector<LabeledPair> gen_synthetic(std::uint64_t seed, Index count, const SyntheticConfig& config) {
  if (count < 0) throw std::invalid_argument("gen_synthetic: negative count");
  std::vector<LabeledPair> out;
  out.reserve(std::size_t(count));
  for (Index i = 0; i < count; ++i) out.push_back(synthetic_pair(seed, std::uint64_t(i), config));
  return out;
}

double occluded_fraction(const LabeledPair& pair) {
  return double(pair.occ_f.count()) / double(pair.occ_f.size());
}

}  // namespace ddflow
