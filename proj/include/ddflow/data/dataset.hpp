#ifndef DDFLOW_DATA_DATASET_HPP_
#define DDFLOW_DATA_DATASET_HPP_

#include "ddflow/data/synthetic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ddflow {

/// One row of a dataset manifest; paths are relative to the dataset directory.
struct ManifestEntry {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::string frame1, frame2, flow_f, flow_b, occ_f, occ_b;
};

/// Column header of manifest.csv.
inline constexpr const char* kManifestHeader = "index,seed,frame1,frame2,flow_f,flow_b,occ_f,occ_b";

/// Writes frames (PNG), flows (.flo), occlusion maps (PNG) and manifest.csv into `dir`.
void write_dataset(const std::string& dir, const std::vector<LabeledPair>& pairs, std::uint64_t seed);

std::vector<ManifestEntry> read_manifest(const std::string& dir);
std::vector<LabeledPair> read_dataset(const std::string& dir);

}  // namespace ddflow

#endif  // DDFLOW_DATA_DATASET_HPP_
