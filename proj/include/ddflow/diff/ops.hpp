#ifndef DDFLOW_DIFF_OPS_HPP_
#define DDFLOW_DIFF_OPS_HPP_

#include "ddflow/diff/graph.hpp"

#include <vector>

namespace ddflow {

// Elementwise. Binary forms require equal shapes; scalar forms broadcast.
template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
/// Rejects any zero element of b.
template <typename S> Var<S> div(Var<S> a, Var<S> b);
template <typename S> Var<S> add(Var<S> a, S b);
template <typename S> Var<S> mul(Var<S> a, S b);
template <typename S> Var<S> div(Var<S> a, S b);
/// |x|, with subgradient 0 at x = 0.
template <typename S> Var<S> abs(Var<S> x);
template <typename S> Var<S> pow_const(Var<S> x, S exponent);
/// Gradient 1 strictly inside (lo, hi), 0 elsewhere.
template <typename S> Var<S> clip(Var<S> x, S lo, S hi);
/// Forwards the value; contributes nothing to upstream gradients.
template <typename S> Var<S> stop_gradient(Var<S> x);

template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }
template <typename S> Var<S> operator/(Var<S> a, Var<S> b) { return div(a, b); }
template <typename S> Var<S> operator+(Var<S> a, S b) { return add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, S b) { return add(a, -b); }
template <typename S> Var<S> operator*(Var<S> a, S b) { return mul(a, b); }
template <typename S> Var<S> operator*(S a, Var<S> b) { return mul(b, a); }
template <typename S> Var<S> operator/(Var<S> a, S b) { return div(a, b); }

/// Cross-correlation of [N,C,H,W] (or [C,H,W]) input with a [K,C,kh,kw] kernel.
template <typename S> Var<S> conv2d(Var<S> input, Var<S> kernel, Index stride, Index padding);
/// Adds bias[k] to every element of channel k.
template <typename S> Var<S> add_bias(Var<S> x, Var<S> bias);
template <typename S> Var<S> leaky_relu(Var<S> x, S slope = S(0.1));

/// Samples [C,H,W] source at absolute (x, y) positions given as [H',W',2]
/// (rank-4 inputs carry a leading batch axis). Border replication.
template <typename S> Var<S> bilinear_sample(Var<S> source, Var<S> coords);
/// output(p) = source sampled at p + flow(p); flow is planar [N,2,H,W].
template <typename S> Var<S> warp(Var<S> source, Var<S> flow);
/// Channel dy*(2r+1)+dx holds mean_c f1(p) * f2(p + (dx - r, dy - r)), zero padded.
template <typename S> Var<S> local_correlation(Var<S> f1, Var<S> f2, Index radius);
/// Half-pixel-centred bilinear upsampling by an integer factor.
template <typename S> Var<S> upsample_bilinear(Var<S> x, Index factor);

template <typename S> Var<S> sum(Var<S> x);
template <typename S> Var<S> mean(Var<S> x);
/// Reduces the listed axes; they are removed from the result shape.
template <typename S> Var<S> sum(Var<S> x, std::vector<Index> axes);
template <typename S> Var<S> mean(Var<S> x, std::vector<Index> axes);

template <typename S> Var<S> reshape(Var<S> x, Shape shape);
/// Concatenates along `axis`; all other extents must match.
template <typename S> Var<S> concat(const std::vector<Var<S>>& parts, Index axis);
/// Elements [begin, end) of `axis`.
template <typename S> Var<S> slice(Var<S> x, Index axis, Index begin, Index end);
/// Divides each channel vector of [N,C,H,W] by max(||v||, floor).
template <typename S> Var<S> l2_normalize_channels(Var<S> x, S floor = S(1e-6));
/// Soft census descriptor of [N,C,H,W] with C in {1,3}; yields window^2-1 channels.
/// Differences are scaled by 255 before d / sqrt(0.81 + d^2).
template <typename S> Var<S> census(Var<S> x, Index window = 3);

}  // namespace ddflow

#endif  // DDFLOW_DIFF_OPS_HPP_
