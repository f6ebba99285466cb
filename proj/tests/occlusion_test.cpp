#include "ddflow/flow/occlusion.hpp"
#include "ddflow/io/png.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>

using namespace ddflow;
using ddflow::testing::random_flow;
using ddflow::testing::random_image;

namespace {

FlowField constant_flow(Index h, Index w, float u, float v) {
  FlowField f(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      f.u(y, x) = u;
      f.v(y, x) = v;
    }
  return f;
}

// Independent bilinear lookup with border clamping, in double precision.
std::pair<double, double> lookup(const FlowField& f, double x, double y) {
  x = std::clamp(x, 0.0, double(f.width() - 1));
  y = std::clamp(y, 0.0, double(f.height() - 1));
  const Index x0 = Index(std::floor(x)), y0 = Index(std::floor(y));
  const Index x1 = std::min(x0 + 1, f.width() - 1), y1 = std::min(y0 + 1, f.height() - 1);
  const double ax = x - double(x0), ay = y - double(y0);
  auto mix = [&](auto get) {
    return (1 - ay) * ((1 - ax) * get(y0, x0) + ax * get(y0, x1)) + ay * ((1 - ax) * get(y1, x0) + ax * get(y1, x1));
  };
  return {mix([&](Index r, Index c) { return double(f.u(r, c)); }),
          mix([&](Index r, Index c) { return double(f.v(r, c)); })};
}

OcclusionMap brute_force_occlusion(const FlowField& wf, const FlowField& wb, double a1, double a2) {
  OcclusionMap m(wf.height(), wf.width());
  for (Index y = 0; y < wf.height(); ++y)
    for (Index x = 0; x < wf.width(); ++x) {
      const double u = wf.u(y, x), v = wf.v(y, x);
      const double tx = double(x) + u, ty = double(y) + v;
      const auto [ru, rv] = lookup(wb, tx, ty);
      const double lhs = (u + ru) * (u + ru) + (v + rv) * (v + rv);
      const double rhs = a1 * (u * u + v * v + ru * ru + rv * rv) + a2;
      const bool out = tx < 0 || ty < 0 || tx > double(wf.width() - 1) || ty > double(wf.height() - 1);
      m.set(y, x, out || lhs >= rhs);
    }
  return m;
}

}  // namespace

TEST_CASE("warp with zero flow is the identity") {
  std::mt19937_64 rng(1);
  const Image img = random_image(3, 6, 5, rng);
  CHECK(warp(img, FlowField(6, 5)) == img);
  const FlowField f = random_flow(6, 5, rng, 4.0);
  CHECK(warp(f, FlowField(6, 5)) == f);
}

TEST_CASE("warp undoes a two pixel displacement in the interior") {
  std::mt19937_64 rng(2);
  const Image img = random_image(1, 6, 10, rng);
  Image moved(1, 6, 10);
  for (Index y = 0; y < 6; ++y)
    for (Index x = 0; x < 10; ++x) moved.at(0, y, x) = img.at(0, y, std::max<Index>(x - 2, 0));
  const Image out = warp(moved, constant_flow(6, 10, 2.0f, 0.0f));
  for (Index y = 0; y < 6; ++y)
    for (Index x = 0; x < 8; ++x) CHECK(out.at(0, y, x) == img.at(0, y, x));
}

TEST_CASE("warp clamps far out-of-bounds targets to the border") {
  std::mt19937_64 rng(3);
  const Image img = random_image(1, 4, 4, rng);
  const Image out = warp(img, constant_flow(4, 4, 1e6f, -1e6f));
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == img.at(0, 0, 3));
  CHECK_THROWS_AS(warp(img, FlowField(4, 5)), std::invalid_argument);
}

TEST_CASE("reversed flow") {
  CHECK(reversed_flow(FlowField(5, 5), FlowField(5, 5)) == FlowField(5, 5));
  CHECK(reversed_flow(constant_flow(5, 5, 1, 0), constant_flow(5, 5, -1, 0)) == constant_flow(5, 5, -1, 0));
  CHECK_THROWS_AS(reversed_flow(FlowField(5, 5), FlowField(4, 5)), std::invalid_argument);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const FlowField wf = random_flow(8, 8, rng, 3.0), wb = random_flow(8, 8, rng, 3.0);
    const FlowField r = reversed_flow(wf, wb);
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x) {
        const auto [u, v] = lookup(wb, x + double(wf.u(y, x)), y + double(wf.v(y, x)));
        CHECK(r.u(y, x) == doctest::Approx(u).epsilon(1e-5));
        CHECK(r.v(y, x) == doctest::Approx(v).epsilon(1e-5));
      }
  }
}

TEST_CASE("occlusion examples") {
  CHECK(estimate_occlusion(FlowField(6, 6), FlowField(6, 6)).count() == 0);

  FlowField wf(4, 4);
  wf.u(1, 3) = 1.0f;
  const OcclusionMap edge = estimate_occlusion(wf, FlowField(4, 4));
  CHECK(edge(1, 3));

  // Consistent pair: forward (2,0) answered by backward (-2,0).
  const OcclusionMap ok = estimate_occlusion(constant_flow(4, 8, 2, 0), constant_flow(4, 8, -2, 0));
  CHECK_FALSE(ok(1, 2));
  CHECK(ok(1, 6));  // target x = 8 leaves the frame
  // Unanswered forward (2,0): 4 >= 0.01 * 4 + 0.05.
  const OcclusionMap bad = estimate_occlusion(constant_flow(4, 8, 2, 0), FlowField(4, 8));
  CHECK(bad(1, 2));

  // A target exactly on the last column is inside.
  FlowField on_border(3, 3);
  on_border.u(0, 0) = 2.0f;
  FlowField back(3, 3);
  back.u(0, 2) = -2.0f;
  CHECK_FALSE(estimate_occlusion(on_border, back)(0, 0));

  CHECK_THROWS_AS(estimate_occlusion(FlowField(3, 3), FlowField(3, 3), {0.0, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(estimate_occlusion(FlowField(3, 3), FlowField(3, 3), {0.01, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(estimate_occlusion(FlowField(3, 3), FlowField(3, 4)), std::invalid_argument);
}

TEST_CASE("occlusion matches a brute-force evaluation bit for bit") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const FlowField wf = random_flow(8, 8, rng, 2.0);
    FlowField wb = random_flow(8, 8, rng, 0.3);
    // Mostly consistent backward field so both outcomes occur.
    wb.data() -= wf.data();
    CHECK(estimate_occlusion(wf, wb) == brute_force_occlusion(wf, wb, 0.01, 0.05));
    CHECK(estimate_occlusion(wb, wf) == brute_force_occlusion(wb, wf, 0.01, 0.05));
  }
}

TEST_CASE("targets leaving the frame are always occluded") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const FlowField wf = random_flow(8, 8, rng, 6.0);
    const FlowField wb = random_flow(8, 8, rng, 6.0);
    const OcclusionMap m = estimate_occlusion(wf, wb, {1e-9, 1e9});
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x) {
        const double tx = x + double(wf.u(y, x)), ty = y + double(wf.v(y, x));
        const bool out = tx < 0 || ty < 0 || tx > 7 || ty > 7;
        CHECK(m(y, x) == out);
      }
  }
}

TEST_CASE("batched occlusion agrees with per-pair evaluation") {
  std::mt19937_64 rng(7);
  const FlowField a = random_flow(5, 6, rng, 2.0), b = random_flow(5, 6, rng, 2.0);
  Tensor<float> wf({2, 2, 5, 6}), wb({2, 2, 5, 6});
  wf.values() << a.planar().values(), b.planar().values();
  wb.values() << b.planar().values(), a.planar().values();
  const Tensor<float> occ = estimate_occlusion(wf, wb);
  CHECK(occlusion_from_tensor(occ, 0) == estimate_occlusion(a, b));
  CHECK(occlusion_from_tensor(occ, 1) == estimate_occlusion(b, a));
}

TEST_CASE("valid mask truth table") {
  OcclusionMap patch(1, 4), teacher(1, 4);
  patch.set(0, 0, true);
  patch.set(0, 1, true);
  teacher.set(0, 1, true);
  teacher.set(0, 3, true);
  const ValidMask m = valid_mask(patch, teacher);
  CHECK(m(0, 0));
  CHECK_FALSE(m(0, 1));
  CHECK_FALSE(m(0, 2));
  CHECK_FALSE(m(0, 3));
  CHECK_THROWS_AS(valid_mask(patch, OcclusionMap(2, 2)), std::invalid_argument);
}

TEST_CASE("valid mask is covered by the patch map and disjoint from the teacher map") {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    OcclusionMap p(6, 6), t(6, 6);
    for (Index i = 0; i < 36; ++i) {
      p.set(i, coin(rng));
      t.set(i, coin(rng));
    }
    const ValidMask m = valid_mask(p, t);
    for (Index i = 0; i < 36; ++i) {
      CHECK(m[i] <= p[i]);
      CHECK_FALSE((m[i] && t[i]));
      CHECK(m[i] == std::clamp(int(p[i]) - int(t[i]), 0, 1));
    }
  }
}

TEST_CASE("teacher outputs crop as plain slices") {
  std::mt19937_64 rng(9);
  const FlowField w = random_flow(6, 7, rng, 3.0);
  OcclusionMap o(6, 7);
  o.set(2, 3, true);
  const CropSpec spec{0, 0, 5, 6};
  auto [wc, oc] = crop_teacher_outputs(w, o, spec);
  REQUIRE(wc.height() == 5);
  REQUIRE(wc.width() == 6);
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 6; ++x) {
      CHECK(wc.u(y, x) == w.u(y, x));
      CHECK(wc.v(y, x) == w.v(y, x));
    }
  CHECK(oc(2, 3));
  CHECK(oc.count() == 1);

  auto [cc, _] = crop_teacher_outputs(constant_flow(6, 7, 1.5f, -2.0f), o, CropSpec{1, 1, 4, 4});
  CHECK(cc == constant_flow(4, 4, 1.5f, -2.0f));
  CHECK_THROWS_AS(crop_teacher_outputs(w, o, CropSpec{2, 0, 5, 6}), std::invalid_argument);
  CHECK_THROWS_AS(crop_teacher_outputs(w, o, CropSpec{0, 0, 6, 6}), std::invalid_argument);
}

TEST_CASE("occlusion maps serialize as black and white png") {
  ddflow::testing::TempDir dir("occ");
  OcclusionMap o(2, 3);
  o.set(1, 2, true);
  write_png(dir.file("o.png"), o);
  const Image img = read_image(dir.file("o.png"));
  CHECK(img.at(0, 1, 2) == 1.0f);
  CHECK(img.at(0, 0, 0) == 0.0f);
}
