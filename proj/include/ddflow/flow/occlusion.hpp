#ifndef DDFLOW_FLOW_OCCLUSION_HPP_
#define DDFLOW_FLOW_OCCLUSION_HPP_

#include "ddflow/flow/types.hpp"
#include "ddflow/image/image.hpp"

#include <utility>
#include <vector>

namespace ddflow {

/// output(p) = bilinear sample of target at p + flow(p), border clamped.
Image warp(const Image& target, const FlowField& flow);
FlowField warp(const FlowField& target, const FlowField& flow);

/// w_b sampled at p + w_f(p).
FlowField reversed_flow(const FlowField& w_f, const FlowField& w_b);

struct OcclusionParams {
  double alpha1 = 0.01;
  double alpha2 = 0.05;

  void validate() const;
};

/// Forward-backward consistency check. Pixel p is occluded when
/// |w_f + w^|^2 >= alpha1 (|w_f|^2 + |w^|^2) + alpha2 with w^ = reversed_flow(w_f, w_b),
/// or when p + w_f(p) leaves [0, W-1] x [0, H-1]. Swap the arguments for the
/// backward map.
OcclusionMap estimate_occlusion(const FlowField& w_f, const FlowField& w_b, const OcclusionParams& params = {});

/// Batched form on planar [N,2,H,W] flows. Returns [N,H,W] of 0/1.
Tensor<float> estimate_occlusion(const Tensor<float>& w_f, const Tensor<float>& w_b,
                                 const OcclusionParams& params = {});

/// 1 where the patch map is occluded and the cropped teacher map is not.
ValidMask valid_mask(const OcclusionMap& patch_occ, const OcclusionMap& cropped_teacher_occ);

FlowField crop(const FlowField& flow, const CropSpec& spec);
OcclusionMap crop(const OcclusionMap& occ, const CropSpec& spec);

std::pair<FlowField, OcclusionMap> crop_teacher_outputs(const FlowField& w, const OcclusionMap& o,
                                                        const CropSpec& spec);

OcclusionMap occlusion_from_tensor(const Tensor<float>& t, Index n = 0);

}  // namespace ddflow

#endif  // DDFLOW_FLOW_OCCLUSION_HPP_
