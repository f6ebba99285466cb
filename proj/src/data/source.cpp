#include "ddflow/data/source.hpp"

#include <stdexcept>

namespace ddflow {

InMemoryPairs::InMemoryPairs(const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("InMemoryPairs: no training pairs");
  for (const auto& p : pairs) frames_.emplace_back(p.i1, p.i2);
}

SyntheticStream::SyntheticStream(std::uint64_t seed, SyntheticConfig config) : seed_(seed), config_(config) {
  config_.validate();
}

std::pair<Image, Image> SyntheticStream::frames(std::uint64_t index) const {
  LabeledPair p = synthetic_pair(seed_, index, config_);
  return {std::move(p.i1), std::move(p.i2)};
}

}  // namespace ddflow
