#include "ddflow/loss/losses.hpp"

#include "ddflow/diff/ops.hpp"

#include <stdexcept>
#include <string>

namespace ddflow {
namespace {

template <typename S>
Var<S> batched(Var<S> x) {
  return x.shape().size() == 3 ? reshape(x, as_nchw(x.shape())) : x;
}

// Weights [N,H,W] from a 0/1 map given as [H,W] or [N,H,W].
template <typename S>
Tensor<S> batched_map(const Tensor<S>& m, Index n, Index h, Index w, const char* what) {
  const Shape want{n, h, w};
  Tensor<S> out = m.rank() == 2 ? m.reshaped({1, m.dim(0), m.dim(1)}) : m;
  if (out.shape() != want) {
    throw std::invalid_argument(std::string(what) + ": map shape " + shape_string(m.shape()) +
                                " does not match " + shape_string(want));
  }
  for (Index i = 0; i < out.size(); ++i) {
    if (out[i] != S(0) && out[i] != S(1)) throw std::invalid_argument(std::string(what) + ": map is not binary");
  }
  return out;
}

// Mean over pairs of (sum_p penalty(p) * weight(p)) / sum_p weight(p); 0 for empty weights.
template <typename S>
Var<S> masked_mean(Var<S> penalty, const Tensor<S>& weight) {
  Graph<S>& g = penalty.graph();
  const Index n = weight.dim(0), plane = weight.dim(1) * weight.dim(2);
  Tensor<S> inv({n});
  for (Index b = 0; b < n; ++b) {
    const S count = weight.values().segment(b * plane, plane).sum();
    inv[b] = count > S(0) ? S(1) / count : S(0);
  }
  Var<S> per_pair = sum(penalty * g.constant(weight), {1, 2}) * g.constant(inv);
  return mean(per_pair);
}

template <typename S>
Var<S> direction_loss(Var<S> ref, Var<S> other, Var<S> flow, const Tensor<S>& occ, const RobustLossParams& params) {
  Tensor<S> keep = occ;
  keep.values() = S(1) - occ.values();
  Var<S> diff = ref - warp(other, flow);
  return masked_mean(mean(psi(diff, params), {1}), keep);
}

}  // namespace

void RobustLossParams::validate() const {
  if (!(epsilon > 0.0) || !(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("robust loss needs epsilon > 0 and 0 < q <= 1, got epsilon=" +
                                std::to_string(epsilon) + " q=" + std::to_string(q));
  }
}

template <typename S>
Var<S> psi(Var<S> x, const RobustLossParams& params) {
  params.validate();
  return pow_const(abs(x) + S(params.epsilon), S(params.q));
}

template <typename S>
Var<S> photometric_loss(Var<S> i1, Var<S> i2, Var<S> w_f, Var<S> w_b, const Tensor<S>& o_f, const Tensor<S>& o_b,
                        const RobustLossParams& params) {
  i1 = batched(i1);
  i2 = batched(i2);
  w_f = batched(w_f);
  w_b = batched(w_b);
  if (i1.shape() != i2.shape()) throw std::invalid_argument("photometric_loss: image shapes differ");
  if (w_f.shape() != w_b.shape()) throw std::invalid_argument("photometric_loss: flow shapes differ");
  const Shape& s = i1.shape();
  const Shape want_flow{s[0], 2, s[2], s[3]};
  if (w_f.shape() != want_flow) {
    throw std::invalid_argument("photometric_loss: flow " + shape_string(w_f.shape()) + " does not match images " +
                                shape_string(s));
  }
  const Tensor<S> of = batched_map(o_f, s[0], s[2], s[3], "photometric_loss");
  const Tensor<S> ob = batched_map(o_b, s[0], s[2], s[3], "photometric_loss");
  return direction_loss(i1, i2, w_f, of, params) + direction_loss(i2, i1, w_b, ob, params);
}

template <typename S>
Var<S> distillation_loss(const Tensor<S>& w_teacher, Var<S> w_student, const Tensor<S>& mask,
                         const RobustLossParams& params) {
  w_student = batched(w_student);
  const Shape& s = w_student.shape();
  if (s[1] != 2) throw std::invalid_argument("distillation_loss: student flow must have 2 channels");
  if (shape_size(w_teacher.shape()) != shape_size(s) || as_nchw(w_teacher.shape()) != s) {
    throw std::invalid_argument("distillation_loss: teacher flow " + shape_string(w_teacher.shape()) +
                                " does not match student " + shape_string(s));
  }
  const Tensor<S> m = batched_map(mask, s[0], s[2], s[3], "distillation_loss");
  Var<S> teacher = w_student.graph().constant(w_teacher.reshaped(s));
  return masked_mean(mean(psi(teacher - w_student, params), {1}), m);
}

#define DDFLOW_INSTANTIATE_LOSSES(S)                                                                    \
  template Var<S> psi(Var<S>, const RobustLossParams&);                                                 \
  template Var<S> photometric_loss(Var<S>, Var<S>, Var<S>, Var<S>, const Tensor<S>&, const Tensor<S>&, \
                                   const RobustLossParams&);                                            \
  template Var<S> distillation_loss(const Tensor<S>&, Var<S>, const Tensor<S>&, const RobustLossParams&);

DDFLOW_INSTANTIATE_LOSSES(float)
DDFLOW_INSTANTIATE_LOSSES(double)

}  // namespace ddflow
