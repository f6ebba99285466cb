#ifndef DDFLOW_LOSS_LOSSES_HPP_
#define DDFLOW_LOSS_LOSSES_HPP_

#include "ddflow/diff/graph.hpp"
#include "ddflow/diff/tensor.hpp"

namespace ddflow {

/// psi(x) = (|x| + epsilon)^q.
struct RobustLossParams {
  double epsilon = 0.01;
  double q = 0.4;

  void validate() const;
};

template <typename S>
Var<S> psi(Var<S> x, const RobustLossParams& params = {});

/// Bidirectional occlusion-masked photometric loss.
///
/// Images are [C,H,W] or [N,C,H,W] (census descriptors or RGB), flows the
/// matching [2,H,W] or [N,2,H,W], occlusion maps [H,W] or [N,H,W] of 0/1.
/// Pixel penalties are psi of the difference between i1 and i2 warped by w_f
/// (and symmetrically for w_b), averaged over channels, summed over
/// non-occluded pixels and divided by their count. A direction without any
/// non-occluded pixel contributes 0. The batch loss is the mean over pairs.
template <typename S>
Var<S> photometric_loss(Var<S> i1, Var<S> i2, Var<S> w_f, Var<S> w_b, const Tensor<S>& o_f, const Tensor<S>& o_b,
                        const RobustLossParams& params = {});

/// One direction of the distillation loss: psi of the teacher-student flow
/// difference averaged over both displacement channels, summed over mask-1
/// pixels and divided by their count (0 for an empty mask). Batch mean over pairs.
template <typename S>
Var<S> distillation_loss(const Tensor<S>& w_teacher, Var<S> w_student, const Tensor<S>& mask,
                         const RobustLossParams& params = {});

template <typename S>
Var<S> student_total_loss(Var<S> photometric, Var<S> distillation) {
  return photometric + distillation;
}

}  // namespace ddflow

#endif  // DDFLOW_LOSS_LOSSES_HPP_
