#include "ddflow/diff/ops.hpp"

#include "ddflow/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>

namespace ddflow {
namespace {

template <typename S>
using Array = typename Tensor<S>::Array;
template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Graph<S>& same_graph(Var<S> a, Var<S> b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw std::invalid_argument("operands belong to different graphs");
  }
  return a.graph();
}

template <typename S>
void require_same_shape(const char* op, Var<S> a, Var<S> b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

template <typename S>
void accumulate(Graph<S>& g, std::size_t id, const Array<S>& contribution) {
  if (g.requires_grad(id)) g.grad_buffer(id) += contribution;
}

struct Nchw {
  Index n, c, h, w;
  Index plane() const { return h * w; }
  Index sample() const { return c * h * w; }
};

inline Nchw nchw_of(const Shape& shape) {
  const Shape s = as_nchw(shape);
  return {s[0], s[1], s[2], s[3]};
}

inline Shape with_nchw(const Shape& like, Index n, Index c, Index h, Index w) {
  if (like.size() == 3) return {c, h, w};
  return {n, c, h, w};
}

// One bilinear lookup into an H x W plane with border clamping, in lerp form
// so that constant neighbourhoods and integer positions reproduce exactly.
template <typename S>
struct Tap {
  Index i00, i01, i10, i11;
  S wx, wy;
  bool inside_x, inside_y;

  static Tap at(S x, S y, Index height, Index width) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw NumericalError("bilinear sampling at a non-finite coordinate");
    }
    const S max_x = S(width - 1), max_y = S(height - 1);
    Tap t;
    t.inside_x = x >= S(0) && x <= max_x;
    t.inside_y = y >= S(0) && y <= max_y;
    const S xc = std::clamp(x, S(0), max_x);
    const S yc = std::clamp(y, S(0), max_y);
    const Index x0 = std::min(Index(std::floor(xc)), width - 1);
    const Index y0 = std::min(Index(std::floor(yc)), height - 1);
    const Index x1 = std::min(x0 + 1, width - 1);
    const Index y1 = std::min(y0 + 1, height - 1);
    t.wx = xc - S(x0);
    t.wy = yc - S(y0);
    t.i00 = y0 * width + x0;
    t.i01 = y0 * width + x1;
    t.i10 = y1 * width + x0;
    t.i11 = y1 * width + x1;
    return t;
  }

  S sample(const S* plane) const {
    const S top = plane[i00] + wx * (plane[i01] - plane[i00]);
    const S bottom = plane[i10] + wx * (plane[i11] - plane[i10]);
    return top + wy * (bottom - top);
  }

  void scatter(S* plane_grad, S g) const {
    plane_grad[i00] += g * (S(1) - wx) * (S(1) - wy);
    plane_grad[i01] += g * wx * (S(1) - wy);
    plane_grad[i10] += g * (S(1) - wx) * wy;
    plane_grad[i11] += g * wx * wy;
  }

  S d_dx(const S* plane) const {
    if (!inside_x) return S(0);
    return (S(1) - wy) * (plane[i01] - plane[i00]) + wy * (plane[i11] - plane[i10]);
  }

  S d_dy(const S* plane) const {
    if (!inside_y) return S(0);
    return (S(1) - wx) * (plane[i10] - plane[i00]) + wx * (plane[i11] - plane[i01]);
  }
};

// Samples every channel of `source` at one tap per output pixel, batch-major.
// coords_at(n, p) yields the (x, y) position for output pixel p of sample n.
template <typename S, typename CoordFn>
Var<S> sample_with_taps(OpKind kind, Var<S> source, std::vector<std::size_t> inputs, Index out_h,
                        Index out_w, std::size_t coord_id, bool coords_interleaved,
                        CoordFn coords_at) {
  Graph<S>& g = source.graph();
  const Nchw src = nchw_of(source.shape());
  const Index out_plane = out_h * out_w;
  auto taps = std::make_shared<std::vector<Tap<S>>>();
  taps->reserve(std::size_t(src.n * out_plane));
  for (Index n = 0; n < src.n; ++n) {
    for (Index p = 0; p < out_plane; ++p) {
      const auto [x, y] = coords_at(n, p);
      taps->push_back(Tap<S>::at(x, y, src.h, src.w));
    }
  }
  Tensor<S> out(with_nchw(source.shape(), src.n, src.c, out_h, out_w));
  const S* sv = source.value().data();
  S* ov = out.data();
  for (Index n = 0; n < src.n; ++n) {
    for (Index c = 0; c < src.c; ++c) {
      const S* plane = sv + n * src.sample() + c * src.plane();
      S* oplane = ov + (n * src.c + c) * out_plane;
      const Tap<S>* t = taps->data() + n * out_plane;
      for (Index p = 0; p < out_plane; ++p) oplane[p] = t[p].sample(plane);
    }
  }
  const std::size_t src_id = source.id();
  return g.record(
      kind, std::move(inputs), std::move(out),
      [=](const Array<S>& go, Graph<S>& gr) {
        const bool want_src = gr.requires_grad(src_id);
        const bool want_coords = coord_id != std::size_t(-1) && gr.requires_grad(coord_id);
        const S* sv = gr.value(src_id).data();
        S* gs = want_src ? gr.grad_buffer(src_id).data() : nullptr;
        S* gc = want_coords ? gr.grad_buffer(coord_id).data() : nullptr;
        for (Index n = 0; n < src.n; ++n) {
          const Tap<S>* t = taps->data() + n * out_plane;
          for (Index c = 0; c < src.c; ++c) {
            const S* plane = sv + n * src.sample() + c * src.plane();
            const S* gplane = go.data() + (n * src.c + c) * out_plane;
            if (gs) {
              S* splane = gs + n * src.sample() + c * src.plane();
              for (Index p = 0; p < out_plane; ++p) t[p].scatter(splane, gplane[p]);
            }
            if (gc) {
              for (Index p = 0; p < out_plane; ++p) {
                const S dx = gplane[p] * t[p].d_dx(plane);
                const S dy = gplane[p] * t[p].d_dy(plane);
                if (coords_interleaved) {
                  gc[(n * out_plane + p) * 2] += dx;
                  gc[(n * out_plane + p) * 2 + 1] += dy;
                } else {
                  gc[n * 2 * out_plane + p] += dx;
                  gc[n * 2 * out_plane + out_plane + p] += dy;
                }
              }
            }
          }
        }
      });
}

// Bilinear interpolation weights along one axis for half-pixel-centred upsampling.
struct AxisTap {
  Index lo, hi;
  double w;
};

std::vector<AxisTap> upsample_axis(Index in, Index factor) {
  std::vector<AxisTap> taps(std::size_t(in * factor));
  for (Index i = 0; i < in * factor; ++i) {
    double pos = (double(i) + 0.5) / double(factor) - 0.5;
    pos = std::clamp(pos, 0.0, double(in - 1));
    const Index lo = std::min(Index(std::floor(pos)), in - 1);
    taps[std::size_t(i)] = {lo, std::min(lo + 1, in - 1), pos - double(lo)};
  }
  return taps;
}

// Row-major strides for a shape.
std::vector<Index> strides_of(const Shape& shape) {
  std::vector<Index> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

template <typename S>
Var<S> reduce_axes(OpKind kind, Var<S> x, std::vector<Index> axes) {
  const Shape& in_shape = x.shape();
  const Index rank = Index(in_shape.size());
  std::vector<bool> reduced(in_shape.size(), false);
  for (Index a : axes) {
    if (a < 0) a += rank;
    if (a < 0 || a >= rank || reduced[std::size_t(a)]) {
      throw std::invalid_argument("reduce: invalid axis list for shape " + shape_string(in_shape));
    }
    reduced[std::size_t(a)] = true;
  }
  Shape out_shape;
  Index count = 1;
  for (std::size_t i = 0; i < in_shape.size(); ++i) {
    if (reduced[i]) count *= in_shape[i];
    else out_shape.push_back(in_shape[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  // Map each input element to its output slot.
  auto target = std::make_shared<std::vector<Index>>(std::size_t(x.size()));
  {
    Shape kept;
    for (std::size_t i = 0; i < in_shape.size(); ++i)
      if (!reduced[i]) kept.push_back(in_shape[i]);
    const std::vector<Index> out_strides = kept.empty() ? std::vector<Index>{} : strides_of(kept);
    std::vector<Index> idx(in_shape.size(), 0);
    for (Index flat = 0; flat < x.size(); ++flat) {
      Index o = 0;
      for (std::size_t i = 0, k = 0; i < in_shape.size(); ++i) {
        if (!reduced[i]) o += idx[i] * out_strides[k++];
      }
      (*target)[std::size_t(flat)] = o;
      for (std::size_t i = in_shape.size(); i-- > 0;) {
        if (++idx[i] < in_shape[i]) break;
        idx[i] = 0;
      }
    }
  }
  const S scale = kind == OpKind::kReduceMean ? S(1) / S(count) : S(1);
  Tensor<S> out(out_shape);
  const S* xv = x.value().data();
  for (Index i = 0; i < x.size(); ++i) out[(*target)[std::size_t(i)]] += xv[i];
  if (kind == OpKind::kReduceMean) out.values() *= scale;
  const std::size_t xid = x.id();
  const Index n_in = x.size();
  return x.graph().record(kind, {xid}, std::move(out), [=](const Array<S>& go, Graph<S>& g) {
    Array<S>& gx = g.grad_buffer(xid);
    for (Index i = 0; i < n_in; ++i) gx[i] += go[(*target)[std::size_t(i)]] * scale;
  });
}

constexpr double kCensusSoftness = 0.81;
// Census differences are measured on the 8-bit intensity scale.
constexpr double kCensusIntensityScale = 255.0;

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Graph<S>& g = same_graph(a, b);
  require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kAdd, {ia, ib},
                  Tensor<S>(a.shape(), a.value().values() + b.value().values()),
                  [=](const Array<S>& go, Graph<S>& gr) {
                    accumulate(gr, ia, go);
                    accumulate(gr, ib, go);
                  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Graph<S>& g = same_graph(a, b);
  require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kSub, {ia, ib},
                  Tensor<S>(a.shape(), a.value().values() - b.value().values()),
                  [=](const Array<S>& go, Graph<S>& gr) {
                    accumulate(gr, ia, go);
                    if (gr.requires_grad(ib)) gr.grad_buffer(ib) -= go;
                  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  Graph<S>& g = same_graph(a, b);
  require_same_shape("mul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kMul, {ia, ib},
                  Tensor<S>(a.shape(), a.value().values() * b.value().values()),
                  [=](const Array<S>& go, Graph<S>& gr) {
                    if (gr.requires_grad(ia)) gr.grad_buffer(ia) += go * gr.value(ib).values();
                    if (gr.requires_grad(ib)) gr.grad_buffer(ib) += go * gr.value(ia).values();
                  });
}

template <typename S>
Var<S> div(Var<S> a, Var<S> b) {
  Graph<S>& g = same_graph(a, b);
  require_same_shape("div", a, b);
  if ((b.value().values() == S(0)).any()) throw std::invalid_argument("div: zero divisor");
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kDiv, {ia, ib},
                  Tensor<S>(a.shape(), a.value().values() / b.value().values()),
                  [=](const Array<S>& go, Graph<S>& gr) {
                    const Array<S>& bv = gr.value(ib).values();
                    if (gr.requires_grad(ia)) gr.grad_buffer(ia) += go / bv;
                    if (gr.requires_grad(ib)) {
                      gr.grad_buffer(ib) -= go * gr.value(ia).values() / (bv * bv);
                    }
                  });
}

template <typename S>
Var<S> add(Var<S> a, S b) {
  const std::size_t ia = a.id();
  return a.graph().record(OpKind::kAdd, {ia}, Tensor<S>(a.shape(), a.value().values() + b),
                          [=](const Array<S>& go, Graph<S>& gr) { accumulate(gr, ia, go); });
}

template <typename S>
Var<S> mul(Var<S> a, S b) {
  const std::size_t ia = a.id();
  return a.graph().record(OpKind::kMul, {ia}, Tensor<S>(a.shape(), a.value().values() * b),
                          [=](const Array<S>& go, Graph<S>& gr) { gr.grad_buffer(ia) += go * b; });
}

template <typename S>
Var<S> div(Var<S> a, S b) {
  if (b == S(0)) throw std::invalid_argument("div: zero divisor");
  const std::size_t ia = a.id();
  return a.graph().record(OpKind::kDiv, {ia}, Tensor<S>(a.shape(), a.value().values() / b),
                          [=](const Array<S>& go, Graph<S>& gr) { gr.grad_buffer(ia) += go / b; });
}

template <typename S>
Var<S> abs(Var<S> x) {
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kAbs, {ix}, Tensor<S>(x.shape(), x.value().values().abs()),
                          [=](const Array<S>& go, Graph<S>& gr) {
                            const Array<S>& xv = gr.value(ix).values();
                            gr.grad_buffer(ix) +=
                                go * (xv > S(0)).template cast<S>() - go * (xv < S(0)).template cast<S>();
                          });
}

template <typename S>
Var<S> pow_const(Var<S> x, S exponent) {
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kPowConst, {ix},
                          Tensor<S>(x.shape(), x.value().values().pow(exponent)),
                          [=](const Array<S>& go, Graph<S>& gr) {
                            const Array<S>& xv = gr.value(ix).values();
                            gr.grad_buffer(ix) += go * exponent * xv.pow(exponent - S(1));
                          });
}

template <typename S>
Var<S> clip(Var<S> x, S lo, S hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lo must not exceed hi");
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kClip, {ix}, Tensor<S>(x.shape(), x.value().values().max(lo).min(hi)),
                          [=](const Array<S>& go, Graph<S>& gr) {
                            const Array<S>& xv = gr.value(ix).values();
                            gr.grad_buffer(ix) += go * ((xv > lo) && (xv < hi)).template cast<S>();
                          });
}

template <typename S>
Var<S> stop_gradient(Var<S> x) {
  return x.graph().record(OpKind::kStopGradient, {}, x.value(), nullptr);
}

// ---------------------------------------------------------------- convolution

template <typename S>
Var<S> conv2d(Var<S> input, Var<S> kernel, Index stride, Index padding) {
  Graph<S>& g = same_graph(input, kernel);
  const Nchw in = nchw_of(input.shape());
  if (kernel.value().rank() != 4) {
    throw std::invalid_argument("conv2d: kernel must be [K,C,kh,kw], got " + shape_string(kernel.shape()));
  }
  const Index k_out = kernel.value().dim(0), kh = kernel.value().dim(2), kw = kernel.value().dim(3);
  if (kernel.value().dim(1) != in.c) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kernel.value().dim(1)) +
                                " input channels, input has " + std::to_string(in.c));
  }
  if (stride <= 0 || padding < 0) throw std::invalid_argument("conv2d: invalid stride/padding");
  const Index ph = in.h + 2 * padding, pw = in.w + 2 * padding;
  if (kh > ph || kw > pw) throw std::invalid_argument("conv2d: kernel exceeds padded input");
  if ((ph - kh) % stride != 0 || (pw - kw) % stride != 0) {
    throw std::invalid_argument("conv2d: output extent is not integral for input " +
                                shape_string(input.shape()) + ", kernel " + std::to_string(kh) + "x" +
                                std::to_string(kw) + ", stride " + std::to_string(stride) +
                                ", padding " + std::to_string(padding));
  }
  const Index oh = (ph - kh) / stride + 1, ow = (pw - kw) / stride + 1;
  const Index patch = in.c * kh * kw, out_plane = oh * ow;

  auto cols = std::make_shared<std::vector<RowMatrix<S>>>(std::size_t(in.n));
  const S* xv = input.value().data();
  for (Index n = 0; n < in.n; ++n) {
    RowMatrix<S>& m = (*cols)[std::size_t(n)];
    m.setZero(patch, out_plane);
    const S* xs = xv + n * in.sample();
    for (Index c = 0; c < in.c; ++c) {
      for (Index ki = 0; ki < kh; ++ki) {
        for (Index kj = 0; kj < kw; ++kj) {
          S* row = m.data() + ((c * kh + ki) * kw + kj) * out_plane;
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride - padding + ki;
            if (iy < 0 || iy >= in.h) continue;
            const S* src_row = xs + c * in.plane() + iy * in.w;
            for (Index ox = 0; ox < ow; ++ox) {
              const Index ix = ox * stride - padding + kj;
              if (ix >= 0 && ix < in.w) row[oy * ow + ox] = src_row[ix];
            }
          }
        }
      }
    }
  }

  Tensor<S> out(with_nchw(input.shape(), in.n, k_out, oh, ow));
  Eigen::Map<const RowMatrix<S>> kmat(kernel.value().data(), k_out, patch);
  for (Index n = 0; n < in.n; ++n) {
    Eigen::Map<RowMatrix<S>> y(out.data() + n * k_out * out_plane, k_out, out_plane);
    y.noalias() = kmat * (*cols)[std::size_t(n)];
  }

  const std::size_t ix = input.id(), ik = kernel.id();
  return g.record(OpKind::kConv2d, {ix, ik}, std::move(out), [=](const Array<S>& go, Graph<S>& gr) {
    Eigen::Map<const RowMatrix<S>> kmat(gr.value(ik).data(), k_out, patch);
    const bool want_k = gr.requires_grad(ik), want_x = gr.requires_grad(ix);
    RowMatrix<S> dcols;
    for (Index n = 0; n < in.n; ++n) {
      Eigen::Map<const RowMatrix<S>> gy(go.data() + n * k_out * out_plane, k_out, out_plane);
      if (want_k) {
        Eigen::Map<RowMatrix<S>> gk(gr.grad_buffer(ik).data(), k_out, patch);
        gk.noalias() += gy * (*cols)[std::size_t(n)].transpose();
      }
      if (want_x) {
        dcols.noalias() = kmat.transpose() * gy;
        S* gx = gr.grad_buffer(ix).data() + n * in.sample();
        for (Index c = 0; c < in.c; ++c) {
          for (Index ki = 0; ki < kh; ++ki) {
            for (Index kj = 0; kj < kw; ++kj) {
              const S* row = dcols.data() + ((c * kh + ki) * kw + kj) * out_plane;
              for (Index oy = 0; oy < oh; ++oy) {
                const Index iy = oy * stride - padding + ki;
                if (iy < 0 || iy >= in.h) continue;
                S* dst_row = gx + c * in.plane() + iy * in.w;
                for (Index ox = 0; ox < ow; ++ox) {
                  const Index ixx = ox * stride - padding + kj;
                  if (ixx >= 0 && ixx < in.w) dst_row[ixx] += row[oy * ow + ox];
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename S>
Var<S> add_bias(Var<S> x, Var<S> bias) {
  Graph<S>& g = same_graph(x, bias);
  const Nchw d = nchw_of(x.shape());
  if (bias.size() != d.c) throw std::invalid_argument("add_bias: bias length must equal channel count");
  Tensor<S> out = x.value();
  const S* b = bias.value().data();
  for (Index n = 0; n < d.n; ++n)
    for (Index c = 0; c < d.c; ++c)
      out.values().segment(n * d.sample() + c * d.plane(), d.plane()) += b[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return g.record(OpKind::kAddBias, {ix, ib}, std::move(out), [=](const Array<S>& go, Graph<S>& gr) {
    accumulate(gr, ix, go);
    if (gr.requires_grad(ib)) {
      Array<S>& gb = gr.grad_buffer(ib);
      for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c) gb[c] += go.segment(n * d.sample() + c * d.plane(), d.plane()).sum();
    }
  });
}

template <typename S>
Var<S> leaky_relu(Var<S> x, S slope) {
  const std::size_t ix = x.id();
  const Array<S>& xv = x.value().values();
  return x.graph().record(OpKind::kLeakyRelu, {ix}, Tensor<S>(x.shape(), (xv >= S(0)).select(xv, xv * slope)),
                          [=](const Array<S>& go, Graph<S>& gr) {
                            const Array<S>& v = gr.value(ix).values();
                            gr.grad_buffer(ix) += (v > S(0)).select(go, go * slope);
                          });
}

// ---------------------------------------------------------------- sampling

template <typename S>
Var<S> bilinear_sample(Var<S> source, Var<S> coords) {
  same_graph(source, coords);
  const Nchw src = nchw_of(source.shape());
  const Shape& cs = coords.shape();
  const bool batched = source.shape().size() == 4;
  if ((batched && (cs.size() != 4 || cs[0] != src.n || cs[3] != 2)) || (!batched && (cs.size() != 3 || cs[2] != 2))) {
    throw std::invalid_argument("bilinear_sample: coords must be [H',W',2] (or [N,H',W',2]), got " +
                                shape_string(cs));
  }
  const Index out_h = batched ? cs[1] : cs[0], out_w = batched ? cs[2] : cs[1];
  const S* cv = coords.value().data();
  const Index out_plane = out_h * out_w;
  return sample_with_taps<S>(OpKind::kBilinearSample, source, {source.id(), coords.id()}, out_h, out_w,
                             coords.id(), true, [&](Index n, Index p) {
                               const S* c = cv + (n * out_plane + p) * 2;
                               return std::pair<S, S>(c[0], c[1]);
                             });
}

template <typename S>
Var<S> warp(Var<S> source, Var<S> flow) {
  same_graph(source, flow);
  const Nchw src = nchw_of(source.shape());
  const Nchw fl = nchw_of(flow.shape());
  if (fl.n != src.n || fl.c != 2 || fl.h != src.h || fl.w != src.w ||
      source.shape().size() != flow.shape().size()) {
    throw std::invalid_argument("warp: flow " + shape_string(flow.shape()) + " does not match source " +
                                shape_string(source.shape()));
  }
  const S* fv = flow.value().data();
  const Index plane = src.plane(), width = src.w;
  return sample_with_taps<S>(OpKind::kWarp, source, {source.id(), flow.id()}, src.h, src.w, flow.id(), false,
                             [&](Index n, Index p) {
                               const S* u = fv + n * 2 * plane;
                               return std::pair<S, S>(S(p % width) + u[p], S(p / width) + u[plane + p]);
                             });
}

template <typename S>
Var<S> local_correlation(Var<S> f1, Var<S> f2, Index radius) {
  Graph<S>& g = same_graph(f1, f2);
  require_same_shape("local_correlation", f1, f2);
  if (radius <= 0) throw std::invalid_argument("local_correlation: radius must be positive");
  const Nchw d = nchw_of(f1.shape());
  const Index side = 2 * radius + 1, disp = side * side;
  const S inv_c = S(1) / S(d.c);
  Tensor<S> out(with_nchw(f1.shape(), d.n, disp, d.h, d.w));

  // Visits every (output index, f1 index, f2 index) triple of valid overlaps in a fixed order.
  auto for_each_overlap = [d, radius, side, disp](auto&& body) {
    for (Index n = 0; n < d.n; ++n) {
      for (Index k = 0; k < disp; ++k) {
        const Index oy = k / side - radius, ox = k % side - radius;
        const Index y_lo = std::max<Index>(0, -oy), y_hi = std::min(d.h, d.h - oy);
        const Index x_lo = std::max<Index>(0, -ox), x_hi = std::min(d.w, d.w - ox);
        if (y_lo >= y_hi || x_lo >= x_hi) continue;
        for (Index c = 0; c < d.c; ++c) {
          const Index base1 = n * d.sample() + c * d.plane();
          const Index base_out = (n * disp + k) * d.plane();
          for (Index y = y_lo; y < y_hi; ++y) {
            body(base_out + y * d.w, base1 + y * d.w, base1 + (y + oy) * d.w + ox, x_lo, x_hi);
          }
        }
      }
    }
  };

  const S* a = f1.value().data();
  const S* b = f2.value().data();
  S* o = out.data();
  for_each_overlap([&](Index ro, Index r1, Index r2, Index x_lo, Index x_hi) {
    for (Index x = x_lo; x < x_hi; ++x) o[ro + x] += a[r1 + x] * b[r2 + x];
  });
  out.values() *= inv_c;

  const std::size_t i1 = f1.id(), i2 = f2.id();
  return g.record(OpKind::kLocalCorrelation, {i1, i2}, std::move(out),
                  [=](const Array<S>& go, Graph<S>& gr) {
                    const S* a = gr.value(i1).data();
                    const S* b = gr.value(i2).data();
                    S* ga = gr.requires_grad(i1) ? gr.grad_buffer(i1).data() : nullptr;
                    S* gb = gr.requires_grad(i2) ? gr.grad_buffer(i2).data() : nullptr;
                    const S* gop = go.data();
                    for_each_overlap([&](Index ro, Index r1, Index r2, Index x_lo, Index x_hi) {
                      for (Index x = x_lo; x < x_hi; ++x) {
                        const S gv = gop[ro + x] * inv_c;
                        if (ga) ga[r1 + x] += gv * b[r2 + x];
                        if (gb) gb[r2 + x] += gv * a[r1 + x];
                      }
                    });
                  });
}

template <typename S>
Var<S> upsample_bilinear(Var<S> x, Index factor) {
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
  const Nchw d = nchw_of(x.shape());
  const Index oh = d.h * factor, ow = d.w * factor;
  const std::vector<AxisTap> ty = upsample_axis(d.h, factor), tx = upsample_axis(d.w, factor);
  auto taps = std::make_shared<std::vector<Tap<S>>>();
  taps->reserve(std::size_t(oh * ow));
  for (Index i = 0; i < oh; ++i) {
    for (Index j = 0; j < ow; ++j) {
      const AxisTap& ay = ty[std::size_t(i)];
      const AxisTap& ax = tx[std::size_t(j)];
      Tap<S> t;
      t.i00 = ay.lo * d.w + ax.lo;
      t.i01 = ay.lo * d.w + ax.hi;
      t.i10 = ay.hi * d.w + ax.lo;
      t.i11 = ay.hi * d.w + ax.hi;
      t.wx = S(ax.w);
      t.wy = S(ay.w);
      t.inside_x = t.inside_y = true;
      taps->push_back(t);
    }
  }
  Tensor<S> out(with_nchw(x.shape(), d.n, d.c, oh, ow));
  const Index out_plane = oh * ow;
  for (Index nc = 0; nc < d.n * d.c; ++nc) {
    const S* plane = x.value().data() + nc * d.plane();
    S* op = out.data() + nc * out_plane;
    for (Index p = 0; p < out_plane; ++p) op[p] = (*taps)[std::size_t(p)].sample(plane);
  }
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kUpsampleBilinear, {ix}, std::move(out),
                          [=](const Array<S>& go, Graph<S>& gr) {
                            S* gx = gr.grad_buffer(ix).data();
                            for (Index nc = 0; nc < d.n * d.c; ++nc) {
                              S* gp = gx + nc * d.plane();
                              const S* gop = go.data() + nc * out_plane;
                              for (Index p = 0; p < out_plane; ++p) (*taps)[std::size_t(p)].scatter(gp, gop[p]);
                            }
                          });
}

// ---------------------------------------------------------------- reductions & layout

template <typename S>
Var<S> sum(Var<S> x) {
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kReduceSum, {ix}, Tensor<S>::scalar(x.value().values().sum()),
                          [=](const Array<S>& go, Graph<S>& gr) { gr.grad_buffer(ix) += go[0]; });
}

template <typename S>
Var<S> mean(Var<S> x) {
  const std::size_t ix = x.id();
  const S n = S(x.size());
  return x.graph().record(OpKind::kReduceMean, {ix}, Tensor<S>::scalar(x.value().values().sum() / n),
                          [=](const Array<S>& go, Graph<S>& gr) { gr.grad_buffer(ix) += go[0] / n; });
}

template <typename S>
Var<S> sum(Var<S> x, std::vector<Index> axes) {
  return reduce_axes(OpKind::kReduceSum, x, std::move(axes));
}

template <typename S>
Var<S> mean(Var<S> x, std::vector<Index> axes) {
  return reduce_axes(OpKind::kReduceMean, x, std::move(axes));
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw std::invalid_argument("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kReshape, {ix}, x.value().reshaped(std::move(shape)),
                          [=](const Array<S>& go, Graph<S>& gr) { gr.grad_buffer(ix) += go; });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, Index axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape out_shape = parts.front().shape();
  if (axis < 0) axis += Index(out_shape.size());
  if (axis < 0 || axis >= Index(out_shape.size())) throw std::invalid_argument("concat: axis out of range");
  Index total = 0;
  std::vector<Index> extents;
  std::vector<std::size_t> ids;
  for (const Var<S>& p : parts) {
    same_graph(parts.front(), p);
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (Index(i) != axis && s[i] != out_shape[i]) {
        throw std::invalid_argument("concat: extent mismatch " + shape_string(s) + " vs " +
                                    shape_string(out_shape));
      }
    }
    extents.push_back(s[std::size_t(axis)]);
    ids.push_back(p.id());
    total += s[std::size_t(axis)];
  }
  out_shape[std::size_t(axis)] = total;
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= out_shape[std::size_t(i)];
  for (std::size_t i = std::size_t(axis) + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  Tensor<S> out(out_shape);
  for (Index o = 0; o < outer; ++o) {
    Index offset = o * total * inner;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Index block = extents[k] * inner;
      out.values().segment(offset, block) = parts[k].value().values().segment(o * block, block);
      offset += block;
    }
  }
  return parts.front().graph().record(OpKind::kConcat, ids, std::move(out),
                                      [=](const Array<S>& go, Graph<S>& gr) {
                                        for (Index o = 0; o < outer; ++o) {
                                          Index offset = o * total * inner;
                                          for (std::size_t k = 0; k < ids.size(); ++k) {
                                            const Index block = extents[k] * inner;
                                            if (gr.requires_grad(ids[k])) {
                                              gr.grad_buffer(ids[k]).segment(o * block, block) +=
                                                  go.segment(offset, block);
                                            }
                                            offset += block;
                                          }
                                        }
                                      });
}

template <typename S>
Var<S> slice(Var<S> x, Index axis, Index begin, Index end) {
  Shape shape = x.shape();
  if (axis < 0) axis += Index(shape.size());
  if (axis < 0 || axis >= Index(shape.size()) || begin < 0 || end > shape[std::size_t(axis)] || begin >= end) {
    throw std::invalid_argument("slice: invalid range for shape " + shape_string(shape));
  }
  const Index extent = shape[std::size_t(axis)];
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= shape[std::size_t(i)];
  for (std::size_t i = std::size_t(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
  shape[std::size_t(axis)] = end - begin;
  const Index block = (end - begin) * inner;
  Tensor<S> out(shape);
  for (Index o = 0; o < outer; ++o) {
    out.values().segment(o * block, block) = x.value().values().segment((o * extent + begin) * inner, block);
  }
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kSlice, {ix}, std::move(out), [=](const Array<S>& go, Graph<S>& gr) {
    Array<S>& gx = gr.grad_buffer(ix);
    for (Index o = 0; o < outer; ++o) gx.segment((o * extent + begin) * inner, block) += go.segment(o * block, block);
  });
}

template <typename S>
Var<S> l2_normalize_channels(Var<S> x, S floor) {
  const Nchw d = nchw_of(x.shape());
  auto norms = std::make_shared<Array<S>>(d.n * d.plane());
  Tensor<S> out(x.shape());
  const S* xv = x.value().data();
  for (Index n = 0; n < d.n; ++n) {
    for (Index p = 0; p < d.plane(); ++p) {
      S acc = 0;
      for (Index c = 0; c < d.c; ++c) {
        const S v = xv[n * d.sample() + c * d.plane() + p];
        acc += v * v;
      }
      const S norm = std::max(std::sqrt(acc), floor);
      (*norms)[n * d.plane() + p] = norm;
      for (Index c = 0; c < d.c; ++c) {
        const Index i = n * d.sample() + c * d.plane() + p;
        out[i] = xv[i] / norm;
      }
    }
  }
  const std::size_t ix = x.id();
  const std::size_t out_id = x.graph().size();
  return x.graph().record(OpKind::kL2Normalize, {ix}, std::move(out), [=](const Array<S>& go, Graph<S>& gr) {
    const S* y = gr.value(out_id).data();
    S* gx = gr.grad_buffer(ix).data();
    for (Index n = 0; n < d.n; ++n) {
      for (Index p = 0; p < d.plane(); ++p) {
        const S norm = (*norms)[n * d.plane() + p];
        S dot = 0;
        for (Index c = 0; c < d.c; ++c) {
          const Index i = n * d.sample() + c * d.plane() + p;
          dot += y[i] * go[i];
        }
        const bool floored = !(norm > floor);
        for (Index c = 0; c < d.c; ++c) {
          const Index i = n * d.sample() + c * d.plane() + p;
          gx[i] += floored ? go[i] / norm : (go[i] - y[i] * dot) / norm;
        }
      }
    }
  });
}

template <typename S>
Var<S> census(Var<S> x, Index window) {
  if (window != 3 && window != 5 && window != 7) {
    throw std::invalid_argument("census: window must be 3, 5 or 7, got " + std::to_string(window));
  }
  const Nchw d = nchw_of(x.shape());
  if (d.c != 1 && d.c != 3) throw std::invalid_argument("census: expects 1 or 3 channels");
  const S luma[3] = {S(0.299), S(0.587), S(0.114)};
  const Index half = window / 2;
  std::vector<std::pair<Index, Index>> offsets;
  for (Index dy = -half; dy <= half; ++dy)
    for (Index dx = -half; dx <= half; ++dx)
      if (dy != 0 || dx != 0) offsets.emplace_back(dy, dx);
  const Index k_out = Index(offsets.size());
  const S soft = S(kCensusSoftness), scale = S(kCensusIntensityScale);

  // Neighbour index (border replicated) for each output pixel and offset.
  auto neighbour = [d](Index y, Index x, std::pair<Index, Index> off) {
    const Index ny = std::clamp(y + off.first, Index(0), d.h - 1);
    const Index nx = std::clamp(x + off.second, Index(0), d.w - 1);
    return ny * d.w + nx;
  };
  auto diffs = std::make_shared<Array<S>>(d.n * k_out * d.plane());
  const S* xv = x.value().data();
  for (Index n = 0; n < d.n; ++n) {
    const S* xs = xv + n * d.sample();
    for (Index k = 0; k < k_out; ++k) {
      S* dk = diffs->data() + (n * k_out + k) * d.plane();
      for (Index y = 0; y < d.h; ++y) {
        for (Index xx = 0; xx < d.w; ++xx) {
          const Index p = y * d.w + xx, q = neighbour(y, xx, offsets[std::size_t(k)]);
          if (d.c == 1) {
            dk[p] = scale * (xs[q] - xs[p]);
          } else {
            const Index pl = d.plane();
            dk[p] = scale * (luma[0] * (xs[q] - xs[p]) + luma[1] * (xs[pl + q] - xs[pl + p]) +
                             luma[2] * (xs[2 * pl + q] - xs[2 * pl + p]));
          }
        }
      }
    }
  }
  Tensor<S> out(with_nchw(x.shape(), d.n, k_out, d.h, d.w), *diffs / (soft + diffs->square()).sqrt());
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::kCensus, {ix}, std::move(out), [=](const Array<S>& go, Graph<S>& gr) {
    S* gx = gr.grad_buffer(ix).data();
    for (Index n = 0; n < d.n; ++n) {
      S* gs = gx + n * d.sample();
      for (Index k = 0; k < k_out; ++k) {
        const Index base = (n * k_out + k) * d.plane();
        for (Index y = 0; y < d.h; ++y) {
          for (Index xx = 0; xx < d.w; ++xx) {
            const Index p = y * d.w + xx, q = neighbour(y, xx, offsets[std::size_t(k)]);
            const S dv = (*diffs)[base + p];
            const S denom = soft + dv * dv;
            const S gd = go[base + p] * scale * soft / (denom * std::sqrt(denom));
            for (Index c = 0; c < d.c; ++c) {
              const S w = d.c == 1 ? S(1) : luma[c];
              gs[c * d.plane() + q] += w * gd;
              gs[c * d.plane() + p] -= w * gd;
            }
          }
        }
      }
    }
  });
}

#define DDFLOW_INSTANTIATE_OPS(S)                                                   \
  template Var<S> add(Var<S>, Var<S>);                                              \
  template Var<S> sub(Var<S>, Var<S>);                                              \
  template Var<S> mul(Var<S>, Var<S>);                                              \
  template Var<S> div(Var<S>, Var<S>);                                              \
  template Var<S> add(Var<S>, S);                                                   \
  template Var<S> mul(Var<S>, S);                                                   \
  template Var<S> div(Var<S>, S);                                                   \
  template Var<S> abs(Var<S>);                                                      \
  template Var<S> pow_const(Var<S>, S);                                             \
  template Var<S> clip(Var<S>, S, S);                                               \
  template Var<S> stop_gradient(Var<S>);                                            \
  template Var<S> conv2d(Var<S>, Var<S>, Index, Index);                             \
  template Var<S> add_bias(Var<S>, Var<S>);                                         \
  template Var<S> leaky_relu(Var<S>, S);                                            \
  template Var<S> bilinear_sample(Var<S>, Var<S>);                                  \
  template Var<S> warp(Var<S>, Var<S>);                                             \
  template Var<S> local_correlation(Var<S>, Var<S>, Index);                         \
  template Var<S> upsample_bilinear(Var<S>, Index);                                 \
  template Var<S> sum(Var<S>);                                                      \
  template Var<S> mean(Var<S>);                                                     \
  template Var<S> sum(Var<S>, std::vector<Index>);                                  \
  template Var<S> mean(Var<S>, std::vector<Index>);                                 \
  template Var<S> reshape(Var<S>, Shape);                                           \
  template Var<S> concat(const std::vector<Var<S>>&, Index);                        \
  template Var<S> slice(Var<S>, Index, Index, Index);                               \
  template Var<S> l2_normalize_channels(Var<S>, S);                                 \
  template Var<S> census(Var<S>, Index);

DDFLOW_INSTANTIATE_OPS(float)
DDFLOW_INSTANTIATE_OPS(double)

}  // namespace ddflow
