#include "ddflow/diff/grad_check.hpp"
#include "ddflow/diff/ops.hpp"
#include "ddflow/net/flow_net.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>

using namespace ddflow;
using ddflow::testing::random_tensor;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.levels = 3;
  c.feature_channels = {4, 6, 8};
  c.correlation_radius = 2;
  c.decoder_hidden = {8, 6};
  return c;
}

// Independent count: sum of every tensor extent product.
Index count_by_shapes(const ModelParams<float>& p) {
  Index n = 0;
  for (const auto& e : p.entries()) n += shape_size(e.value.shape());
  return n;
}

}  // namespace

TEST_CASE("init is deterministic, biases are zero, kernels are bounded") {
  const NetConfig c;
  std::mt19937_64 r1(42), r2(42), r3(43);
  const auto a = init_params<float>(c, r1), b = init_params<float>(c, r2), other = init_params<float>(c, r3);
  CHECK(a == b);
  CHECK_FALSE(a == other);
  for (const auto& e : a.entries()) {
    const Shape& s = e.value.shape();
    if (s.size() == 1) {
      CHECK((e.value.values() == 0.0f).all());
    } else {
      // Flow-output layers (two output channels) are scaled down by 10.
      const double scale = s[0] == 2 ? 0.1 : 1.0;
      const double bound = scale * std::sqrt(6.0 / double(s[1] * s[2] * s[3]));
      CHECK(e.value.values().abs().maxCoeff() <= bound);
      // A uniform sample of this size reaches well beyond half the bound.
      CHECK(e.value.values().abs().maxCoeff() > 0.5 * bound);
    }
  }
}

TEST_CASE("parameter count has a closed form") {
  for (const NetConfig& c : {NetConfig{}, small_config()}) {
    std::mt19937_64 rng(1);
    const auto p = init_params<float>(c, rng);
    CHECK(parameter_count(c) == p.scalar_count());
    CHECK(parameter_count(c) == count_by_shapes(p));
  }
  // Default network, by hand: pyramid 3*9*16+16 + 16*9*16+16, then per level
  // in*16*out+out + out*9*out+out; decoders at levels 3 and 2 with 81+32+2 inputs.
  const Index pyramid = (432 + 16) + (2304 + 16) + (8192 + 32) + (9216 + 32) + 2 * ((16384 + 32) + (9216 + 32));
  const Index decoder = (115 * 9 * 64 + 64) + (64 * 9 * 32 + 32) + (32 * 9 * 2 + 2);
  CHECK(parameter_count(NetConfig{}) == pyramid + 2 * decoder);
}

TEST_CASE("config validation") {
  NetConfig c;
  c.levels = 2;
  c.feature_channels = {8, 8};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NetConfig{};
  c.feature_channels = {8, 8, 8};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = NetConfig{};
  c.decoder_hidden = {0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("feature pyramid extents and weight sharing") {
  const NetConfig c;
  std::mt19937_64 rng(2);
  const auto params = init_params<float>(c, rng);
  Graph<float> g;
  const auto p = bind_params(g, params, c, false);
  const Tensor<float> img = random_tensor<float>({3, 16, 24}, rng, 0, 1);
  const auto a = feature_pyramid(g.constant(img), p);
  const auto b = feature_pyramid(g.constant(img), p);
  REQUIRE(a.size() == 4);
  for (Index l = 0; l < 4; ++l) {
    CHECK(a[std::size_t(l)].shape() == Shape{1, c.feature_channels[std::size_t(l)], 16 >> l, 24 >> l});
    CHECK(a[std::size_t(l)].value() == b[std::size_t(l)].value());
  }
  CHECK_THROWS_AS(feature_pyramid(g.constant(random_tensor<float>({3, 12, 16}, rng, 0, 1)), p), std::invalid_argument);
  CHECK_THROWS_AS(feature_pyramid(g.constant(random_tensor<float>({1, 16, 16}, rng, 0, 1)), p), std::invalid_argument);
}

TEST_CASE("feature pyramid gradient w.r.t. the image") {
  const NetConfig c = small_config();
  std::mt19937_64 rng(3);
  const auto params = init_params<double>(c, rng);
  const Tensor<double> img = random_tensor<double>({3, 8, 8}, rng, 0, 1);
  GraphFn f = [&](Graph<double>& g, const std::vector<Var<double>>& in) {
    const auto p = bind_params(g, params, c, false);
    return sum(feature_pyramid(in[0], p).back());
  };
  CHECK(grad_check(f, {img}, {.coords_per_input = 24}).max_relative_error < 1e-3);
}

TEST_CASE("flow output shape, symmetry and batching") {
  const NetConfig c;
  std::mt19937_64 rng(4);
  const auto params = init_params<float>(c, rng);
  const Tensor<float> a = random_tensor<float>({3, 16, 16}, rng, 0, 1), b = random_tensor<float>({3, 16, 16}, rng, 0, 1);

  Graph<float> g;
  const auto p = bind_params(g, params, c, false);
  Var<float> ia = g.constant(a), ib = g.constant(b);
  Var<float> w = forward_flow(ia, ib, p);
  CHECK(w.shape() == Shape{1, 2, 16, 16});
  CHECK(w.value().values().isFinite().all());

  auto [wf, wb] = forward_backward(ia, ib, p);
  CHECK(wf.value() == w.value());
  CHECK(wb.value() == forward_flow(ib, ia, p).value());
  auto [sf, sb] = forward_backward(ib, ia, p);
  CHECK(sf.value() == wb.value());
  CHECK(sb.value() == wf.value());

  auto [same_f, same_b] = forward_backward(ia, ia, p);
  CHECK(same_f.value() == same_b.value());

  Tensor<float> a2({2, 3, 16, 16}), b2({2, 3, 16, 16});
  a2.values() << a.values(), b.values();
  b2.values() << b.values(), a.values();
  auto [bf, bb] = forward_backward(g.constant(a2), g.constant(b2), p);
  CHECK(slice(bf, 0, 0, 1).value() == wf.value());
  CHECK(slice(bf, 0, 1, 2).value() == sf.value());
  CHECK(slice(bb, 0, 0, 1).value() == wb.value());

  CHECK_THROWS_AS(forward_flow(ia, g.constant(random_tensor<float>({3, 16, 24}, rng, 0, 1)), p), std::invalid_argument);
}

TEST_CASE("image-level inference replicates gray frames") {
  const NetConfig c = small_config();
  std::mt19937_64 rng(5);
  const auto params = init_params<float>(c, rng);
  const Image gray = ddflow::testing::random_image(1, 8, 12, rng);
  const FlowField f = forward_flow(gray, gray, params, c);
  CHECK(f.height() == 8);
  CHECK(f.width() == 12);
  CHECK(f.all_finite());
  auto [wf, wb] = forward_backward(gray, gray, params, c);
  CHECK(wf == f);
  CHECK(wb == f);
}

TEST_CASE("cost volume features have unit norm") {
  const NetConfig c;
  std::mt19937_64 rng(6);
  const auto params = init_params<float>(c, rng);
  Graph<float> g;
  const auto p = bind_params(g, params, c, false);
  NetTrace<float> trace;
  forward_flow(g.constant(random_tensor<float>({3, 16, 16}, rng, 0, 1)),
               g.constant(random_tensor<float>({3, 16, 16}, rng, 0, 1)), p, &trace);
  REQUIRE(trace.normalized_features.size() == 2);
  REQUIRE(trace.level_flows.size() == 2);
  for (const auto& [n1, n2] : trace.normalized_features) {
    for (const Var<float>& v : {n1, n2}) {
      const Shape& s = v.shape();
      const Index plane = s[2] * s[3];
      for (Index i = 0; i < plane; ++i) {
        double sq = 0;
        for (Index ch = 0; ch < s[1]; ++ch) sq += double(v.value()[ch * plane + i]) * v.value()[ch * plane + i];
        const double norm = std::sqrt(sq);
        CHECK((std::abs(norm - 1.0) < 1e-4 || norm == 0.0));
      }
    }
  }
}

TEST_CASE("full network gradient check") {
  const NetConfig c = small_config();
  std::mt19937_64 rng(7);
  const auto params = init_params<double>(c, rng);
  const Tensor<double> i1 = random_tensor<double>({3, 8, 8}, rng, 0, 1);
  const Tensor<double> i2 = random_tensor<double>({3, 8, 8}, rng, 0, 1);
  const Tensor<double> weights = random_tensor<double>({2, 1, 2, 8, 8}, rng);

  // Inputs: frame 1, then every parameter.
  std::vector<Tensor<double>> inputs{i1};
  for (const auto& e : params.entries()) inputs.push_back(e.value);
  GraphFn f = [&](Graph<double>& g, const std::vector<Var<double>>& in) {
    BoundParams<double> p;
    p.config = &c;
    p.params = &params;
    p.vars.assign(in.begin() + 1, in.end());
    auto [wf, wb] = forward_backward(in[0], g.constant(i2), p);
    return sum(concat<double>({wf, wb}, 0) * g.constant(weights.reshaped({2, 2, 8, 8})));
  };

  std::mt19937_64 pick(8);
  std::vector<std::vector<Index>> coords(inputs.size());
  auto draw = [&](std::size_t input) {
    std::uniform_int_distribution<Index> d(0, inputs[input].size() - 1);
    coords[input].push_back(d(pick));
  };
  for (int k = 0; k < 6; ++k) draw(0);
  std::uniform_int_distribution<std::size_t> which(1, inputs.size() - 1);
  for (int k = 0; k < 6; ++k) draw(which(pick));
  const GradCheckResult r = grad_check_at(f, inputs, coords, 1e-4);
  CHECK(r.coordinates_checked == 12);
  CHECK(r.max_relative_error < 1e-2);
}
