#include "ddflow/net/flow_net.hpp"

#include "ddflow/diff/ops.hpp"
#include "ddflow/image/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddflow {
namespace {

constexpr float kSlope = 0.1f;

std::string pyr_name(Index level, int conv, const char* what) {
  return "pyramid" + std::to_string(level) + "/conv" + std::to_string(conv) + "/" + what;
}

std::string dec_name(Index level, std::size_t conv, const char* what) {
  return "decoder" + std::to_string(level) + "/conv" + std::to_string(conv) + "/" + what;
}

struct ConvSpec {
  std::string name;
  Index out, in, k;
  double init_scale = 1.0;
};

// Flow-output layers start small so the initial flow field is close to zero.
constexpr double kFlowInitScale = 0.1;

// Every convolution of the network in parameter order.
std::vector<ConvSpec> conv_specs(const NetConfig& c) {
  std::vector<ConvSpec> specs;
  for (Index l = 0; l < c.levels; ++l) {
    const Index in = l == 0 ? 3 : c.feature_channels[std::size_t(l - 1)];
    const Index out = c.feature_channels[std::size_t(l)];
    specs.push_back({pyr_name(l, 0, ""), out, in, l == 0 ? 3 : 4});
    specs.push_back({pyr_name(l, 1, ""), out, out, 3});
  }
  for (Index l = c.levels - 1; l >= 2; --l) {
    Index in = c.correlation_channels() + c.feature_channels[std::size_t(l)] + 2;
    std::size_t k = 0;
    for (Index h : c.decoder_hidden) {
      specs.push_back({dec_name(l, k++, ""), h, in, 3});
      in = h;
    }
    specs.push_back({dec_name(l, k, ""), 2, in, 3, kFlowInitScale});
  }
  return specs;
}

template <typename S>
Var<S> conv_bias(Var<S> x, const BoundParams<S>& p, const std::string& prefix, Index stride, Index pad) {
  return add_bias(conv2d(x, p(prefix + "w"), stride, pad), p(prefix + "b"));
}

template <typename S>
Var<S> batch4(Var<S> x) {
  return x.shape().size() == 3 ? reshape(x, as_nchw(x.shape())) : x;
}

template <typename S>
void check_images(Var<S> i1, Var<S> i2, const NetConfig& c) {
  if (i1.shape() != i2.shape()) {
    throw std::invalid_argument("flow network: frame shapes differ " + shape_string(i1.shape()) + " vs " +
                                shape_string(i2.shape()));
  }
  const Shape& s = i1.shape();
  if (s[1] != 3) throw std::invalid_argument("flow network: expected RGB input, got " + shape_string(s));
  const Index m = c.input_multiple();
  if (s[2] % m != 0 || s[3] % m != 0) {
    throw std::invalid_argument("flow network: extents " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                " must be multiples of " + std::to_string(m) + " (pad the input first)");
  }
}

// Coarse-to-fine decoding of flow from ref to tgt features (both [N,C,h,w] per level).
template <typename S>
Var<S> decode(const std::vector<Var<S>>& ref, const std::vector<Var<S>>& tgt, const BoundParams<S>& p,
              NetTrace<S>* trace) {
  const NetConfig& c = *p.config;
  Graph<S>& g = ref[0].graph();
  Var<S> flow;
  for (Index l = c.levels - 1; l >= 2; --l) {
    Var<S> f1 = ref[std::size_t(l)], f2 = tgt[std::size_t(l)];
    const Shape& s = f1.shape();
    Var<S> warped = f2;
    if (flow.valid()) {
      flow = upsample_bilinear(flow, 2) * S(2);
      warped = warp(f2, flow);
    } else {
      flow = g.constant(Tensor<S>({s[0], 2, s[2], s[3]}));
    }
    Var<S> n1 = l2_normalize_channels(f1), n2 = l2_normalize_channels(warped);
    if (trace) trace->normalized_features.emplace_back(n1, n2);
    // local_correlation averages over channels; rescale to a cosine similarity.
    Var<S> cost = local_correlation(n1, n2, c.correlation_radius) * S(s[1]);
    Var<S> x = concat<S>({cost, f1, flow}, 1);
    const std::size_t layers = c.decoder_hidden.size();
    for (std::size_t k = 0; k < layers; ++k) x = leaky_relu(conv_bias(x, p, dec_name(l, k, ""), 1, 1), S(kSlope));
    flow = flow + conv_bias(x, p, dec_name(l, layers, ""), 1, 1);
    if (trace) trace->level_flows.push_back(flow);
  }
  return upsample_bilinear(flow, 4) * S(4);
}

template <typename S>
std::vector<Var<S>> split_batch(const std::vector<Var<S>>& levels, Index begin, Index end) {
  std::vector<Var<S>> out;
  for (const auto& v : levels) out.push_back(slice(v, 0, begin, end));
  return out;
}

template <typename S>
std::vector<Var<S>> join_batch(const std::vector<Var<S>>& a, const std::vector<Var<S>>& b) {
  std::vector<Var<S>> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(concat<S>({a[i], b[i]}, 0));
  return out;
}

template <typename S>
Var<S> image_var(Graph<S>& g, const Image& img) {
  const Image rgb = to_rgb(img);
  return g.constant(rgb.tensor<S>().reshaped({1, 3, rgb.height(), rgb.width()}));
}

}  // namespace

void NetConfig::validate() const {
  if (levels < 3) throw std::invalid_argument("NetConfig: levels must be at least 3, got " + std::to_string(levels));
  if (Index(feature_channels.size()) != levels) {
    throw std::invalid_argument("NetConfig: need one feature channel count per level");
  }
  for (Index c : feature_channels)
    if (c <= 0) throw std::invalid_argument("NetConfig: feature channels must be positive");
  for (Index c : decoder_hidden)
    if (c <= 0) throw std::invalid_argument("NetConfig: decoder widths must be positive");
  if (correlation_radius < 0) throw std::invalid_argument("NetConfig: correlation radius must be non-negative");
}

template <typename S>
void ModelParams<S>::add(std::string name, Tensor<S> value) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::invalid_argument("ModelParams: duplicate name " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

template <typename S>
std::size_t ModelParams<S>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw std::out_of_range("ModelParams: no parameter named " + name);
}

template <typename S>
const Tensor<S>& ModelParams<S>::at(const std::string& name) const {
  return entries_[index_of(name)].value;
}

template <typename S>
Tensor<S>& ModelParams<S>::at(const std::string& name) {
  return entries_[index_of(name)].value;
}

template <typename S>
Index ModelParams<S>::scalar_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename S>
bool ModelParams<S>::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.values().isFinite().all()) return false;
  return true;
}

template <typename S>
ModelParams<S> init_params(const NetConfig& config, std::mt19937_64& rng) {
  config.validate();
  ModelParams<S> p;
  for (const ConvSpec& c : conv_specs(config)) {
    const Index fan_in = c.in * c.k * c.k;
    const double bound = c.init_scale * std::sqrt(6.0 / double(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<S> w({c.out, c.in, c.k, c.k});
    for (Index i = 0; i < w.size(); ++i) w[i] = S(dist(rng));
    p.add(c.name + "w", std::move(w));
    p.add(c.name + "b", Tensor<S>({c.out}));
  }
  return p;
}

Index parameter_count(const NetConfig& c) {
  c.validate();
  const auto& f = c.feature_channels;
  Index n = 3 * 9 * f[0] + f[0] + f[0] * 9 * f[0] + f[0];
  for (Index l = 1; l < c.levels; ++l) {
    const Index a = f[std::size_t(l - 1)], b = f[std::size_t(l)];
    n += a * 16 * b + b + b * 9 * b + b;
  }
  for (Index l = 2; l < c.levels; ++l) {
    Index in = c.correlation_channels() + f[std::size_t(l)] + 2;
    for (Index h : c.decoder_hidden) {
      n += in * 9 * h + h;
      in = h;
    }
    n += in * 9 * 2 + 2;
  }
  return n;
}

template <typename S>
BoundParams<S> bind_params(Graph<S>& g, const ModelParams<S>& params, const NetConfig& config, bool requires_grad) {
  config.validate();
  BoundParams<S> b;
  b.config = &config;
  b.params = &params;
  for (const auto& e : params.entries()) b.vars.push_back(g.input(e.value, requires_grad));
  return b;
}

template <typename S>
std::vector<Var<S>> feature_pyramid(Var<S> images, const BoundParams<S>& p) {
  const NetConfig& c = *p.config;
  Var<S> x = batch4(images);
  check_images(x, x, c);
  x = x - S(0.5);
  std::vector<Var<S>> levels;
  for (Index l = 0; l < c.levels; ++l) {
    x = l == 0 ? conv_bias(x, p, pyr_name(l, 0, ""), 1, 1) : conv_bias(x, p, pyr_name(l, 0, ""), 2, 1);
    x = leaky_relu(x, S(kSlope));
    x = leaky_relu(conv_bias(x, p, pyr_name(l, 1, ""), 1, 1), S(kSlope));
    levels.push_back(x);
  }
  return levels;
}

template <typename S>
Var<S> forward_flow(Var<S> i1, Var<S> i2, const BoundParams<S>& p, NetTrace<S>* trace) {
  i1 = batch4(i1);
  i2 = batch4(i2);
  check_images(i1, i2, *p.config);
  const Index n = i1.shape()[0];
  const auto feats = feature_pyramid(concat<S>({i1, i2}, 0), p);
  return decode(split_batch(feats, 0, n), split_batch(feats, n, 2 * n), p, trace);
}

template <typename S>
std::pair<Var<S>, Var<S>> forward_backward(Var<S> i1, Var<S> i2, const BoundParams<S>& p, NetTrace<S>* trace) {
  i1 = batch4(i1);
  i2 = batch4(i2);
  check_images(i1, i2, *p.config);
  const Index n = i1.shape()[0];
  const auto feats = feature_pyramid(concat<S>({i1, i2}, 0), p);
  const auto f1 = split_batch(feats, 0, n), f2 = split_batch(feats, n, 2 * n);
  Var<S> both = decode(join_batch(f1, f2), join_batch(f2, f1), p, trace);
  return {slice(both, 0, 0, n), slice(both, 0, n, 2 * n)};
}

Padding padding_for(Index height, Index width, Index multiple) {
  if (height <= 0 || width <= 0 || multiple <= 0) throw std::invalid_argument("padding_for: non-positive extent");
  return {(multiple - height % multiple) % multiple, (multiple - width % multiple) % multiple};
}

template <typename S>
Tensor<S> pad_replicate(const Tensor<S>& nchw, const Padding& pad) {
  if (nchw.rank() != 4) throw std::invalid_argument("pad_replicate: expected [N,C,H,W]");
  if (pad.none()) return nchw;
  const Index planes = nchw.dim(0) * nchw.dim(1), h = nchw.dim(2), w = nchw.dim(3);
  const Index ph = h + pad.bottom, pw = w + pad.right;
  Tensor<S> out({nchw.dim(0), nchw.dim(1), ph, pw});
  for (Index k = 0; k < planes; ++k) {
    const S* src = nchw.data() + k * h * w;
    S* dst = out.data() + k * ph * pw;
    for (Index y = 0; y < ph; ++y) {
      const S* row = src + std::min(y, h - 1) * w;
      for (Index x = 0; x < pw; ++x) dst[y * pw + x] = row[std::min(x, w - 1)];
    }
  }
  return out;
}

template <typename S>
std::pair<Var<S>, Var<S>> forward_backward_padded(Graph<S>& g, const Tensor<S>& i1, const Tensor<S>& i2,
                                                  const BoundParams<S>& p, Padding* used) {
  if (i1.rank() != 4 || i1.shape() != i2.shape()) {
    throw std::invalid_argument("forward_backward_padded: frames must share an [N,3,H,W] shape");
  }
  const Index h = i1.dim(2), w = i1.dim(3);
  const Padding pad = padding_for(h, w, p.config->input_multiple());
  if (used) *used = pad;
  auto [wf, wb] = forward_backward(g.constant(pad_replicate(i1, pad)), g.constant(pad_replicate(i2, pad)), p);
  if (pad.none()) return {wf, wb};
  auto unpad = [&](Var<S> f) { return slice(slice(f, 2, 0, h), 3, 0, w); };
  return {unpad(wf), unpad(wb)};
}

FlowField forward_flow(const Image& i1, const Image& i2, const ModelParams<float>& params, const NetConfig& config) {
  return forward_backward(i1, i2, params, config).first;
}

std::pair<FlowField, FlowField> forward_backward(const Image& i1, const Image& i2, const ModelParams<float>& params,
                                                 const NetConfig& config) {
  Graph<float> g;
  const BoundParams<float> p = bind_params(g, params, config, false);
  auto [wf, wb] = forward_backward_padded(g, image_var(g, i1).value(), image_var(g, i2).value(), p);
  return {FlowField::from_planar(wf.value()), FlowField::from_planar(wb.value())};
}

template class ModelParams<float>;
template class ModelParams<double>;

#define DDFLOW_INSTANTIATE_NET(S)                                                                       \
  template ModelParams<S> init_params(const NetConfig&, std::mt19937_64&);                             \
  template BoundParams<S> bind_params(Graph<S>&, const ModelParams<S>&, const NetConfig&, bool);       \
  template std::vector<Var<S>> feature_pyramid(Var<S>, const BoundParams<S>&);                         \
  template Var<S> forward_flow(Var<S>, Var<S>, const BoundParams<S>&, NetTrace<S>*);                   \
  template std::pair<Var<S>, Var<S>> forward_backward(Var<S>, Var<S>, const BoundParams<S>&, NetTrace<S>*); \
  template Tensor<S> pad_replicate(const Tensor<S>&, const Padding&);                                  \
  template std::pair<Var<S>, Var<S>> forward_backward_padded(Graph<S>&, const Tensor<S>&, const Tensor<S>&, \
                                                             const BoundParams<S>&, Padding*);

DDFLOW_INSTANTIATE_NET(float)
DDFLOW_INSTANTIATE_NET(double)

}  // namespace ddflow
