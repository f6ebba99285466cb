#include "ddflow/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ddflow {
namespace {

double evaluate(const GraphFn& f, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(g.input(t, false));
  Var<double> out = f(g, leaves);
  if (out.size() != 1) throw std::invalid_argument("grad_check: function output must be scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check_at(const GraphFn& f, const std::vector<Tensor<double>>& inputs,
                              const std::vector<std::vector<Index>>& coords, double step) {
  if (coords.size() != inputs.size()) throw std::invalid_argument("grad_check: one coordinate list per input");
  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(g.input(t, true));
  Var<double> out = f(g, leaves);
  if (out.size() != 1) throw std::invalid_argument("grad_check: function output must be scalar");
  g.backward(out);

  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = g.grad(leaves[i]);
    for (Index c : coords[i]) {
      const double original = probe[i][c];
      probe[i][c] = original + step;
      const double up = evaluate(f, probe);
      probe[i][c] = original - step;
      const double down = evaluate(f, probe);
      probe[i][c] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.coordinates_checked;
    }
  }
  return result;
}

GradCheckResult grad_check(const GraphFn& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<std::vector<Index>> coords;
  for (const auto& t : inputs) {
    std::vector<Index> all(std::size_t(t.size()));
    std::iota(all.begin(), all.end(), Index{0});
    if (t.size() > options.coords_per_input) {
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(std::size_t(options.coords_per_input));
    }
    coords.push_back(std::move(all));
  }
  return grad_check_at(f, inputs, coords, options.step);
}

}  // namespace ddflow
