#ifndef DDFLOW_DATA_SOURCE_HPP_
#define DDFLOW_DATA_SOURCE_HPP_

#include "ddflow/data/synthetic.hpp"
#include "ddflow/image/image.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace ddflow {

/// Unlabeled frame pairs for training. Only frames are exposed, so no loss can
/// reach ground truth.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual std::pair<Image, Image> frames(std::uint64_t index) const = 0;
};

class InMemoryPairs final : public PairSource {
 public:
  explicit InMemoryPairs(const std::vector<LabeledPair>& pairs);
  std::uint64_t size() const override { return frames_.size(); }
  std::pair<Image, Image> frames(std::uint64_t index) const override { return frames_.at(index); }

 private:
  std::vector<std::pair<Image, Image>> frames_;
};

/// Unbounded stream of freshly rendered synthetic scenes.
class SyntheticStream final : public PairSource {
 public:
  SyntheticStream(std::uint64_t seed, SyntheticConfig config);
  std::uint64_t size() const override { return std::uint64_t{1} << 40; }
  std::pair<Image, Image> frames(std::uint64_t index) const override;

 private:
  std::uint64_t seed_;
  SyntheticConfig config_;
};

}  // namespace ddflow

#endif  // DDFLOW_DATA_SOURCE_HPP_
