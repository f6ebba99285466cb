#include "ddflow/flow/occlusion.hpp"

#include "ddflow/diff/graph.hpp"
#include "ddflow/diff/ops.hpp"

#include <stdexcept>
#include <string>

namespace ddflow {
namespace {

void check_same(Index h1, Index w1, Index h2, Index w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(h1) + "x" +
                                std::to_string(w1) + " vs " + std::to_string(h2) + "x" + std::to_string(w2));
  }
}

Tensor<float> warp_planar(const Tensor<float>& target, const Tensor<float>& flow) {
  Graph<float> g;
  return warp(g.constant(target), g.constant(flow)).value();
}

Tensor<float> batch_of_one(const FlowField& f) {
  return f.planar().reshaped({1, 2, f.height(), f.width()});
}

}  // namespace

Image warp(const Image& target, const FlowField& flow) {
  check_same(target.height(), target.width(), flow.height(), flow.width(), "warp");
  Tensor<float> out = warp_planar(target.tensor().reshaped({1, target.channels(), target.height(), target.width()}),
                                  batch_of_one(flow));
  return Image::from_tensor(out, target.descriptor());
}

FlowField warp(const FlowField& target, const FlowField& flow) {
  check_same(target.height(), target.width(), flow.height(), flow.width(), "warp");
  return FlowField::from_planar(warp_planar(batch_of_one(target), batch_of_one(flow)));
}

FlowField reversed_flow(const FlowField& w_f, const FlowField& w_b) {
  check_same(w_f.height(), w_f.width(), w_b.height(), w_b.width(), "reversed_flow");
  return warp(w_b, w_f);
}

void OcclusionParams::validate() const {
  if (!(alpha1 > 0.0) || !(alpha2 > 0.0)) {
    throw std::invalid_argument("occlusion thresholds must be positive, got alpha1=" + std::to_string(alpha1) +
                                " alpha2=" + std::to_string(alpha2));
  }
}

Tensor<float> estimate_occlusion(const Tensor<float>& w_f, const Tensor<float>& w_b, const OcclusionParams& params) {
  params.validate();
  if (w_f.shape() != w_b.shape()) throw std::invalid_argument("estimate_occlusion: shape mismatch");
  const Shape s = as_nchw(w_f.shape());
  if (s[1] != 2) throw std::invalid_argument("estimate_occlusion: flows must have 2 channels");
  const Index n = s[0], h = s[2], w = s[3], plane = h * w;
  const Tensor<float> wf = w_f.reshaped(s);
  const Tensor<float> rev = warp_planar(w_b.reshaped(s), wf);

  Tensor<float> occ({n, h, w});
  for (Index b = 0; b < n; ++b) {
    const Index base = b * 2 * plane;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const Index i = y * w + x;
        const double u = wf[base + i], v = wf[base + plane + i];
        const double ru = rev[base + i], rv = rev[base + plane + i];
        const double tx = double(x) + u, ty = double(y) + v;
        const bool outside = !(tx >= 0.0 && tx <= double(w - 1) && ty >= 0.0 && ty <= double(h - 1));
        const double mismatch = (u + ru) * (u + ru) + (v + rv) * (v + rv);
        const double bound = params.alpha1 * (u * u + v * v + ru * ru + rv * rv) + params.alpha2;
        occ[b * plane + i] = (outside || mismatch >= bound) ? 1.0f : 0.0f;
      }
  }
  return occ;
}

OcclusionMap estimate_occlusion(const FlowField& w_f, const FlowField& w_b, const OcclusionParams& params) {
  check_same(w_f.height(), w_f.width(), w_b.height(), w_b.width(), "estimate_occlusion");
  return occlusion_from_tensor(estimate_occlusion(batch_of_one(w_f), batch_of_one(w_b), params));
}

ValidMask valid_mask(const OcclusionMap& patch_occ, const OcclusionMap& cropped_teacher_occ) {
  check_same(patch_occ.height(), patch_occ.width(), cropped_teacher_occ.height(), cropped_teacher_occ.width(),
             "valid_mask");
  ValidMask m(patch_occ.height(), patch_occ.width());
  for (Index i = 0; i < m.size(); ++i) m.set(i, patch_occ[i] && !cropped_teacher_occ[i]);
  return m;
}

FlowField crop(const FlowField& flow, const CropSpec& spec) {
  if (!spec.valid_for(flow.height(), flow.width())) throw std::invalid_argument("crop: spec out of bounds");
  FlowField out(spec.h, spec.w);
  for (Index y = 0; y < spec.h; ++y)
    for (Index x = 0; x < spec.w; ++x) {
      out.u(y, x) = flow.u(spec.y0 + y, spec.x0 + x);
      out.v(y, x) = flow.v(spec.y0 + y, spec.x0 + x);
    }
  return out;
}

OcclusionMap crop(const OcclusionMap& occ, const CropSpec& spec) {
  if (!spec.valid_for(occ.height(), occ.width())) throw std::invalid_argument("crop: spec out of bounds");
  OcclusionMap out(spec.h, spec.w);
  for (Index y = 0; y < spec.h; ++y)
    for (Index x = 0; x < spec.w; ++x) out.set(y, x, occ(spec.y0 + y, spec.x0 + x));
  return out;
}

std::pair<FlowField, OcclusionMap> crop_teacher_outputs(const FlowField& w, const OcclusionMap& o,
                                                        const CropSpec& spec) {
  check_same(w.height(), w.width(), o.height(), o.width(), "crop_teacher_outputs");
  return {crop(w, spec), crop(o, spec)};
}

OcclusionMap occlusion_from_tensor(const Tensor<float>& t, Index n) {
  if (t.rank() != 2 && t.rank() != 3) throw std::invalid_argument("occlusion_from_tensor: expected [H,W] or [N,H,W]");
  const Index h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const Index batch = t.rank() == 3 ? t.dim(0) : 1;
  if (n < 0 || n >= batch) throw std::invalid_argument("occlusion_from_tensor: sample out of range");
  OcclusionMap m(h, w);
  for (Index i = 0; i < h * w; ++i) {
    const float b = t[n * h * w + i];
    if (b != 0.0f && b != 1.0f) throw std::invalid_argument("occlusion_from_tensor: non-binary value");
    m.set(i, b == 1.0f);
  }
  return m;
}

}  // namespace ddflow
