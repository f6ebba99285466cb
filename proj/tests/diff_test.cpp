#include "doctest.h"

#include "ddflow/diff/grad_check.hpp"
#include "ddflow/diff/ops.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace ddflow;
using ddflow::testing::random_tensor;

TEST_CASE("elementwise forward values") {
  Graph<float> g;
  auto a = g.constant(Tensor<float>({2}, {1, 2}));
  auto b = g.constant(Tensor<float>({2}, {3, 4}));
  CHECK((a + b).value() == Tensor<float>({2}, {4, 6}));
  CHECK((b - a).value() == Tensor<float>({2}, {2, 2}));
  CHECK((a * b).value() == Tensor<float>({2}, {3, 8}));

  auto clipped = clip(g.constant(Tensor<float>({3}, {-0.5f, 0.3f, 1.7f})), 0.0f, 1.0f);
  CHECK(clipped.value() == Tensor<float>({3}, {0.0f, 0.3f, 1.0f}));

  Graph<double> gd;
  auto psi0 = pow_const(abs(gd.constant(Tensor<double>({1}, {0.0}))) + 0.01, 0.4);
  // 10^(-0.8), evaluated to 15 digits.
  CHECK(psi0.value()[0] == doctest::Approx(0.158489319246111).epsilon(1e-12));
}

TEST_CASE("elementwise errors") {
  Graph<float> g;
  auto a = g.constant(Tensor<float>({2}, {1, 2}));
  auto b = g.constant(Tensor<float>({3}, {1, 2, 3}));
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(a / g.constant(Tensor<float>({2}, {1, 0})), std::invalid_argument);
  CHECK_THROWS_AS(a / 0.0f, std::invalid_argument);
}

TEST_CASE("elementwise gradients match finite differences") {
  std::mt19937_64 rng(1);
  Tensor<double> a = random_tensor<double>({3, 4}, rng, 0.5, 2.0);
  Tensor<double> b = random_tensor<double>({3, 4}, rng, 0.5, 2.0);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto x = v[0], y = v[1];
    auto t = (x * y + x / y - y) * 0.7;
    return sum(pow_const(abs(t) + 0.01, 0.4) + clip(t, -0.3, 2.5));
  };
  CHECK(grad_check(f, {a, b}).max_relative_error < 1e-5);
}

TEST_CASE("stop_gradient forwards values and blocks gradients") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({2}, {1.5, -2.0}), true);
  auto y = sum(stop_gradient(x) * x);
  g.backward(y);
  CHECK(g.grad(x) == x.value());
  CHECK(stop_gradient(x).value() == x.value());
  CHECK_FALSE(stop_gradient(x).requires_grad());
}

TEST_CASE("grad_check on a closed-form quadratic") {
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) { return sum(v[0] * v[0]); };
  Graph<double> g;
  auto x = g.input(Tensor<double>({2}, {1, 2}), true);
  g.backward(sum(x * x));
  CHECK(g.grad(x) == Tensor<double>({2}, {2, 4}));
  CHECK(grad_check(f, {Tensor<double>({2}, {1, 2})}).max_relative_error < 1e-6);

  auto vector_out = [](Graph<double>&, const std::vector<Var<double>>& v) { return v[0] * v[0]; };
  CHECK_THROWS_AS(grad_check(vector_out, {Tensor<double>({2}, {1, 2})}), std::invalid_argument);
}

TEST_CASE("conv2d values") {
  Graph<float> g;
  auto ones = g.constant(Tensor<float>::constant({1, 1, 3, 3}, 1.0f));
  auto k = g.constant(Tensor<float>::constant({1, 1, 3, 3}, 1.0f));
  auto y = conv2d(ones, k, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value()[0] == 9.0f);

  std::mt19937_64 rng(2);
  Tensor<float> img = random_tensor<float>({1, 2, 5, 6}, rng);
  Tensor<float> ident({2, 2, 3, 3});
  ident[(0 * 2 + 0) * 9 + 4] = 1.0f;
  ident[(1 * 2 + 1) * 9 + 4] = 1.0f;
  auto same = conv2d(g.constant(img), g.constant(ident), 1, 1);
  CHECK(same.value() == img);

  // Stride two on an odd padded extent: (5 + 2 - 3) / 2 + 1 = 3 rows, (6 + 2 - 3) = 5 not even.
  CHECK_THROWS_AS(conv2d(g.constant(img), g.constant(ident), 2, 1), std::invalid_argument);
}

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(3);
  Tensor<double> x = random_tensor<double>({2, 3, 8, 8}, rng);
  Tensor<double> k = random_tensor<double>({4, 3, 3, 3}, rng);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) { return sum(conv2d(v[0], v[1], 1, 1)); };
  CHECK(grad_check(f, {x, k}).max_relative_error < 1e-3);
  auto strided = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto y = conv2d(v[0], v[1], 2, 1);
    return sum(y * y);
  };
  Tensor<double> k4 = random_tensor<double>({4, 3, 4, 4}, rng);
  CHECK(grad_check(strided, {x, k4}).max_relative_error < 1e-3);
  CHECK_THROWS_AS(grad_check(strided, {x, k}), std::invalid_argument);

  Tensor<double> bias = random_tensor<double>({4}, rng);
  auto composed = [](Graph<double>&, const std::vector<Var<double>>& v) {
    return sum(leaky_relu(add_bias(conv2d(v[0], v[1], 1, 1), v[2])));
  };
  CHECK(grad_check(composed, {x, k, bias}).max_relative_error < 1e-3);
}

TEST_CASE("leaky_relu") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({3}, {2.0, -2.0, 0.0}), true);
  auto y = leaky_relu(x, 0.1);
  CHECK(y.value()[0] == 2.0);
  CHECK(y.value()[1] == doctest::Approx(-0.2));
  CHECK(leaky_relu(x, 1.0).value() == x.value());
  g.backward(sum(y));
  CHECK(g.grad(x) == Tensor<double>({3}, {1.0, 0.1, 0.1}));

  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) { return sum(leaky_relu(v[0], 0.1)); };
  auto r = grad_check(f, {Tensor<double>({1}, {-3.0})});
  CHECK(r.max_relative_error < 1e-8);
}

TEST_CASE("bilinear_sample") {
  Graph<float> g;
  auto src = g.constant(Tensor<float>({1, 2, 2}, {0, 1, 2, 3}));
  auto mid = bilinear_sample(src, g.constant(Tensor<float>({1, 1, 2}, {0.5f, 0.5f})));
  CHECK(mid.value()[0] == 1.5f);

  std::mt19937_64 rng(4);
  Tensor<float> s = random_tensor<float>({3, 5, 7}, rng);
  Tensor<float> grid({5, 7, 2});
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 7; ++x) {
      grid[(y * 7 + x) * 2] = float(x);
      grid[(y * 7 + x) * 2 + 1] = float(y);
    }
  CHECK(bilinear_sample(g.constant(s), g.constant(grid)).value() == s);

  // Far out of bounds clamps to the corner pixel.
  auto far = bilinear_sample(g.constant(s), g.constant(Tensor<float>({1, 1, 2}, {1e6f, -1e6f})));
  CHECK(far.value()[0] == s[6]);
}

TEST_CASE("bilinear_sample gradients") {
  std::mt19937_64 rng(5);
  Tensor<double> s = random_tensor<double>({2, 6, 6}, rng);
  Tensor<double> coords({4, 4, 2});
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) {
      coords[(y * 4 + x) * 2] = double(x) + 0.3 + 0.5 * double(y % 2);
      coords[(y * 4 + x) * 2 + 1] = double(y) + 0.3;
    }
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto o = bilinear_sample(v[0], v[1]);
    return sum(o * o);
  };
  CHECK(grad_check(f, {s, coords}, {.coords_per_input = 64}).max_relative_error < 1e-3);
}

TEST_CASE("warp with planar flow") {
  std::mt19937_64 rng(6);
  Tensor<double> s = random_tensor<double>({1, 2, 6, 6}, rng);
  Graph<double> g;
  auto zero = warp(g.constant(s), g.constant(Tensor<double>({1, 2, 6, 6})));
  CHECK(zero.value() == s);

  Tensor<double> flow = random_tensor<double>({1, 2, 6, 6}, rng, 0.1, 0.8);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto o = warp(v[0], v[1]);
    return sum(o * o);
  };
  CHECK(grad_check(f, {s, flow}, {.coords_per_input = 72}).max_relative_error < 1e-3);
}

TEST_CASE("local_correlation") {
  Graph<float> g;
  auto unit = g.constant(Tensor<float>::constant({1, 4, 4}, 1.0f));
  CHECK(local_correlation(unit, unit, 1).shape() == Shape{9, 4, 4});
  Graph<float> g1;
  auto c1 = g1.constant(Tensor<float>::constant({1, 3, 3}, 1.0f));
  auto self = slice(local_correlation(c1, c1, 1), 0, 4, 5);
  CHECK(self.value() == Tensor<float>::constant({1, 3, 3}, 1.0f));

  std::mt19937_64 rng(7);
  const Index C = 3, H = 7, W = 7, r = 1;
  Tensor<float> f1 = random_tensor<float>({C, H, W}, rng);
  Tensor<float> f2({C, H, W});
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < H; ++y)
      for (Index x = 1; x < W; ++x) f2[(c * H + y) * W + x] = f1[(c * H + y) * W + x - 1];
  auto corr = local_correlation(g.constant(f1), g.constant(f2), r);

  // Brute force over all offsets.
  const Index side = 2 * r + 1;
  for (Index k = 0; k < side * side; ++k) {
    const Index oy = k / side - r, ox = k % side - r;
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        double acc = 0;
        for (Index c = 0; c < C; ++c) {
          const Index yy = y + oy, xx = x + ox;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          acc += double(f1[(c * H + y) * W + x]) * double(f2[(c * H + yy) * W + xx]);
        }
        CHECK(corr.value()[(k * H + y) * W + x] == doctest::Approx(acc / C).epsilon(1e-5));
      }
  }
  // With unit-norm features the matching offset (dx = +1, dy = 0) is the argmax.
  const Index expected = (0 + r) * side + (1 + r);
  Graph<float> gn;
  auto n1 = l2_normalize_channels(gn.constant(f1.reshaped({1, C, H, W})));
  auto n2 = l2_normalize_channels(gn.constant(f2.reshaped({1, C, H, W})));
  auto cn = local_correlation(n1, n2, r);
  for (Index y = 1; y < H - 1; ++y)
    for (Index x = 1; x < W - 1; ++x) {
      Index best = 0;
      for (Index k = 1; k < side * side; ++k)
        if (cn.value()[(k * H + y) * W + x] > cn.value()[(best * H + y) * W + x]) best = k;
      CHECK(best == expected);
    }
}

TEST_CASE("local_correlation gradients") {
  std::mt19937_64 rng(8);
  Tensor<double> a = random_tensor<double>({2, 3, 5, 5}, rng);
  Tensor<double> b = random_tensor<double>({2, 3, 5, 5}, rng);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto c = local_correlation(v[0], v[1], 2);
    return sum(c * c);
  };
  CHECK(grad_check(f, {a, b}, {.coords_per_input = 40}).max_relative_error < 1e-3);
}

TEST_CASE("upsample_bilinear") {
  std::mt19937_64 rng(9);
  Tensor<float> x = random_tensor<float>({2, 3, 4}, rng);
  Graph<float> g;
  CHECK(upsample_bilinear(g.constant(x), 1).value() == x);
  auto c = upsample_bilinear(g.constant(Tensor<float>::constant({1, 3, 3}, 0.3f)), 4);
  CHECK(c.value() == Tensor<float>::constant({1, 12, 12}, 0.3f));

  // Sampling positions (i + 0.5) / 2 - 0.5 clamp to {0, 0.25, 0.75, 1}; the source is
  // the plane v = x + 2y, so every output is cx + 2 cy.
  auto up = upsample_bilinear(g.constant(Tensor<float>({1, 2, 2}, {0, 1, 2, 3})), 2);
  const float expected[16] = {0,    0.25f, 0.75f, 1,    0.5f, 0.75f, 1.25f, 1.5f,
                              1.5f, 1.75f, 2.25f, 2.5f, 2,    2.25f, 2.75f, 3};
  for (int i = 0; i < 16; ++i) CHECK(up.value()[i] == doctest::Approx(expected[i]));

  Tensor<double> xd = random_tensor<double>({1, 2, 3, 3}, rng);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto u = upsample_bilinear(v[0], 3);
    return sum(u * u);
  };
  CHECK(grad_check(f, {xd}).max_relative_error < 1e-3);
}

TEST_CASE("reductions") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({3}, {1, 2, 3}), true);
  CHECK(sum(x).value()[0] == 6.0);
  CHECK(mean(g.constant(Tensor<double>::constant({4, 5}, 2.5))).value()[0] == 2.5);
  g.backward(sum(x));
  CHECK(g.grad(x) == Tensor<double>::constant({3}, 1.0));

  Graph<double> g2;
  auto m = g2.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(sum(m, {0}).value() == Tensor<double>({3}, {5, 7, 9}));
  CHECK(mean(m, {1}).value() == Tensor<double>({2}, {2, 5}));
  CHECK(sum(m, {0, 1}).value() == Tensor<double>({1}, {21}));
  CHECK_THROWS_AS(sum(m, {2}), std::invalid_argument);

  std::mt19937_64 rng(10);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto r = mean(v[0], {1});
    return sum(r * r);
  };
  CHECK(grad_check(f, {random_tensor<double>({2, 3, 4}, rng)}).max_relative_error < 1e-6);
}

TEST_CASE("layout ops") {
  std::mt19937_64 rng(11);
  Tensor<double> a = random_tensor<double>({2, 3, 2}, rng);
  Tensor<double> b = random_tensor<double>({2, 1, 2}, rng);
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto c = concat<double>({v[0], v[1]}, 1);
    auto s = slice(c, 1, 1, 4);
    auto r = reshape(s, {12});
    return sum(r * r * r);
  };
  CHECK(grad_check(f, {a, b}).max_relative_error < 1e-6);
  Graph<double> g;
  auto c = concat<double>({g.constant(a), g.constant(b)}, 1);
  CHECK(c.shape() == Shape{2, 4, 2});
  CHECK(slice(c, 1, 0, 3).value() == a);
  CHECK(slice(c, 1, 3, 4).value() == b);
}

TEST_CASE("l2_normalize_channels") {
  std::mt19937_64 rng(12);
  Tensor<double> x = random_tensor<double>({1, 4, 3, 3}, rng);
  Graph<double> g;
  auto n = l2_normalize_channels(g.constant(x));
  for (Index p = 0; p < 9; ++p) {
    double acc = 0;
    for (Index c = 0; c < 4; ++c) acc += n.value()[c * 9 + p] * n.value()[c * 9 + p];
    CHECK(std::sqrt(acc) == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto zero = l2_normalize_channels(g.constant(Tensor<double>({1, 4, 2, 2})));
  CHECK(zero.value() == Tensor<double>({1, 4, 2, 2}));
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) {
    auto y = l2_normalize_channels(v[0]);
    return sum(y * v[1]);
  };
  CHECK(grad_check(f, {x, random_tensor<double>({1, 4, 3, 3}, rng)}).max_relative_error < 1e-3);
}

TEST_CASE("census op gradients") {
  std::mt19937_64 rng(13);
  // Weighted so the odd symmetry of the descriptor does not cancel the gradient.
  auto f = [](Graph<double>&, const std::vector<Var<double>>& v) { return sum(census(v[0], 3) * v[1]); };
  // Intensities within a few 8-bit levels keep the comparisons in the soft regime.
  auto levels = [&](Shape s) {
    Tensor<double> t = random_tensor<double>(std::move(s), rng);
    t.values() *= 2.0 / 255.0;
    return t;
  };
  CHECK(grad_check(f, {levels({1, 3, 5, 5}), random_tensor<double>({1, 8, 5, 5}, rng)}, {1e-7}).max_relative_error <
        1e-5);
  CHECK(grad_check(f, {levels({1, 1, 4, 6}), random_tensor<double>({1, 8, 4, 6}, rng)}, {1e-7}).max_relative_error <
        1e-5);
  Graph<double> g;
  CHECK_THROWS_AS(census(g.constant(Tensor<double>({1, 1, 4, 4})), 4), std::invalid_argument);
}

TEST_CASE("graph determinism and linearity") {
  std::mt19937_64 rng(14);
  Tensor<float> x = random_tensor<float>({1, 3, 8, 8}, rng);
  Tensor<float> k = random_tensor<float>({4, 3, 4, 4}, rng);
  auto run = [&] {
    Graph<float> g;
    auto in = g.input(x, true);
    auto y = sum(leaky_relu(conv2d(in, g.constant(k), 2, 1)));
    g.backward(y);
    return std::pair(y.value(), g.grad(in));
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
  CHECK(std::isfinite(first.first[0]));

  // grad(a f + b g) = a grad f + b grad g.
  Tensor<double> v = random_tensor<double>({6}, rng);
  auto grad_of = [&](double a, double b) {
    Graph<double> g;
    auto in = g.input(v, true);
    auto fv = sum(in * in * in);
    auto gv = sum(abs(in) + 0.01);
    g.backward(add(mul(fv, a), mul(gv, b)));
    return g.grad(in);
  };
  const auto combined = grad_of(2.0, -3.0);
  const auto gf = grad_of(1.0, 0.0);
  const auto gg = grad_of(0.0, 1.0);
  for (Index i = 0; i < 6; ++i) CHECK(combined[i] == doctest::Approx(2.0 * gf[i] - 3.0 * gg[i]));
}

TEST_CASE("graph records only backward references") {
  Graph<double> g;
  auto a = g.input(Tensor<double>({1}, {1.0}), true);
  auto b = a * 2.0;
  CHECK(g.inputs(b.id()) == std::vector<std::size_t>{a.id()});
  CHECK_THROWS_AS(g.record(OpKind::kAdd, {5}, Tensor<double>({1}), nullptr), std::logic_error);
  CHECK_THROWS_AS(g.backward(concat<double>({a, b}, 0)), std::invalid_argument);
}
