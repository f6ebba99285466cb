// Properties of briefly trained models (a few minutes on one core).

#include "ddflow/data/source.hpp"
#include "ddflow/data/synthetic.hpp"
#include "ddflow/net/flow_net.hpp"
#include "ddflow/train/trainer.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

using namespace ddflow;

namespace {

constexpr std::uint64_t kSteps = 600;

SyntheticConfig translation_scenes() {
  SyntheticConfig c;
  c.height = 32;
  c.width = 32;
  c.max_shift = 4;
  c.min_sprites = 0;
  c.max_sprites = 0;
  return c;
}

// Bilinear 2x upsampling with half-pixel centres. Away from the border an integer
// translation by s becomes an exact translation by 2s.
Image upsample2(const Image& a) {
  Image b(a.channels(), 2 * a.height(), 2 * a.width());
  auto source = [](Index i, Index n) { return std::clamp((double(i) + 0.5) / 2.0 - 0.5, 0.0, double(n - 1)); };
  for (Index y = 0; y < b.height(); ++y) {
    const double fy = source(y, a.height());
    const Index y0 = Index(fy), y1 = std::min(y0 + 1, a.height() - 1);
    const double ty = fy - double(y0);
    for (Index x = 0; x < b.width(); ++x) {
      const double fx = source(x, a.width());
      const Index x0 = Index(fx), x1 = std::min(x0 + 1, a.width() - 1);
      const double tx = fx - double(x0);
      for (Index c = 0; c < a.channels(); ++c) {
        const double top = (1 - tx) * a.at(c, y0, x0) + tx * a.at(c, y0, x1);
        const double bottom = (1 - tx) * a.at(c, y1, x0) + tx * a.at(c, y1, x1);
        b.at(c, y, x) = float((1 - ty) * top + ty * bottom);
      }
    }
  }
  return b;
}

class Upsampled final : public PairSource {
 public:
  Upsampled(std::uint64_t seed, const SyntheticConfig& config) : inner_(seed, config) {}
  std::uint64_t size() const override { return inner_.size(); }
  std::pair<Image, Image> frames(std::uint64_t index) const override {
    auto [a, b] = inner_.frames(index);
    return {upsample2(a), upsample2(b)};
  }

 private:
  SyntheticStream inner_;
};

NetConfig deeper(NetConfig c) {
  c.levels += 1;
  c.feature_channels.insert(c.feature_channels.begin(), c.feature_channels.front());
  return c;
}

ModelParams<float> train(const NetConfig& net, std::shared_ptr<const PairSource> source) {
  OptimizerConfig optim;
  optim.lr0 = 5e-4;
  optim.halving_interval = kSteps / 2;
  SchedulePlan plan;
  plan.warmup_steps = kSteps;
  plan.teacher_steps = 0;
  plan.joint_steps = 0;
  Trainer t(net, optim, plan, std::move(source));
  t.run(nullptr, nullptr);
  return t.teacher();
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(v.size() / 2), v.end());
  return v[v.size() / 2];
}

struct Trained {
  NetConfig net;
  ModelParams<float> params;
};

const Trained& shallow() {
  static const Trained m = [] {
    NetConfig net;
    return Trained{net, train(net, std::make_shared<SyntheticStream>(7, translation_scenes()))};
  }();
  return m;
}

const std::vector<LabeledPair>& held_out() {
  static const std::vector<LabeledPair> pairs = gen_synthetic(99, 20, translation_scenes());
  return pairs;
}

// Pixels at least `margin` from the border of an h x w frame.
template <typename F>
void interior(Index h, Index w, Index margin, F&& f) {
  for (Index y = margin; y < h - margin; ++y)
    for (Index x = margin; x < w - margin; ++x) f(y, x);
}

Tensor<float> stack(const std::vector<Image>& frames) {
  const Image& f = frames.front();
  Eigen::ArrayXf values(Index(frames.size()) * f.values().size());
  for (std::size_t n = 0; n < frames.size(); ++n)
    values.segment(Index(n) * f.values().size(), f.values().size()) = frames[n].values();
  return Tensor<float>({Index(frames.size()), f.channels(), f.height(), f.width()}, values);
}

}  // namespace

TEST_CASE("warm-up lowers the photometric loss on held-out frames") {
  const SyntheticConfig scenes;
  Batch batch;
  {
    std::vector<Image> a, b;
    for (const LabeledPair& p : gen_synthetic(99, 8, scenes)) {
      a.push_back(p.i1);
      b.push_back(p.i2);
    }
    batch = {stack(a), stack(b)};
  }
  OptimizerConfig optim;
  optim.lr0 = 5e-4;
  optim.halving_interval = 2000;
  SchedulePlan plan;
  plan.warmup_steps = 500;
  plan.teacher_steps = 0;
  plan.joint_steps = 0;
  const NetConfig net;
  Trainer t(net, optim, plan, std::make_shared<SyntheticStream>(1, scenes));
  const double before = teacher_pass(t.teacher(), net, batch, false, plan).loss;
  t.run(nullptr, nullptr);
  const double after = teacher_pass(t.teacher(), net, batch, false, plan).loss;
  CHECK(after < 0.8 * before);
}

TEST_CASE("trained on translations, interior flow is accurate") {
  const Trained& m = shallow();
  REQUIRE(translation_scenes().max_shift <= m.net.correlation_radius * 4);
  std::vector<double> epe;
  for (const LabeledPair& p : held_out()) {
    const FlowField f = forward_flow(p.i1, p.i2, m.params, m.net);
    interior(f.height(), f.width(), 4, [&](Index y, Index x) {
      epe.push_back(std::hypot(f.u(y, x) - p.flow_f.u(y, x), f.v(y, x) - p.flow_f.v(y, x)));
    });
  }
  CHECK(median(epe) < 0.5);
}

TEST_CASE("trained model sees no motion between identical frames") {
  const Trained& m = shallow();
  std::vector<double> mag;
  for (const LabeledPair& p : held_out()) {
    const FlowField f = forward_flow(p.i1, p.i1, m.params, m.net);
    interior(f.height(), f.width(), 0, [&](Index y, Index x) { mag.push_back(std::hypot(f.u(y, x), f.v(y, x))); });
  }
  CHECK(median(mag) < 0.5);
}

TEST_CASE("doubling the resolution with one more level doubles the displacements") {
  const Trained& m = shallow();
  const NetConfig net2 = deeper(m.net);
  const ModelParams<float> params2 = train(net2, std::make_shared<Upsampled>(7, translation_scenes()));

  std::vector<double> mag1, mag2;
  for (const LabeledPair& p : held_out()) {
    const FlowField f1 = forward_flow(p.i1, p.i2, m.params, m.net);
    const FlowField f2 = forward_flow(upsample2(p.i1), upsample2(p.i2), params2, net2);
    interior(f1.height(), f1.width(), 4, [&](Index y, Index x) { mag1.push_back(std::hypot(f1.u(y, x), f1.v(y, x))); });
    interior(f2.height(), f2.width(), 8, [&](Index y, Index x) { mag2.push_back(std::hypot(f2.u(y, x), f2.v(y, x))); });
  }
  const double ratio = median(mag2) / median(mag1);
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 2.4);
}
