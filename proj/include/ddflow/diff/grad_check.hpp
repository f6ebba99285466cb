#ifndef DDFLOW_DIFF_GRAD_CHECK_HPP_
#define DDFLOW_DIFF_GRAD_CHECK_HPP_

#include "ddflow/diff/graph.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ddflow {

/// Builds a scalar-valued graph from leaf variables that require gradients.
using GraphFn = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double step = 1e-4;
  /// Coordinates probed per input; inputs with fewer elements are probed fully.
  Index coords_per_input = 24;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index coordinates_checked = 0;
};

/// Compares reverse-mode gradients with central differences at sampled coordinates.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const GraphFn& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options = {});

/// Explicit coordinates: coords[i] lists the flat indices probed in inputs[i].
GradCheckResult grad_check_at(const GraphFn& f, const std::vector<Tensor<double>>& inputs,
                              const std::vector<std::vector<Index>>& coords, double step = 1e-4);

}  // namespace ddflow

#endif  // DDFLOW_DIFF_GRAD_CHECK_HPP_
