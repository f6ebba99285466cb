#ifndef DDFLOW_TRAIN_CHECKPOINT_HPP_
#define DDFLOW_TRAIN_CHECKPOINT_HPP_

#include "ddflow/net/flow_net.hpp"
#include "ddflow/train/adam.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace ddflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue a run bit-exactly.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  NetConfig net;
  ModelParams<float> teacher;
  std::optional<ModelParams<float>> student;
  AdamState<float> teacher_opt;
  std::optional<AdamState<float>> student_opt;
  std::uint64_t global_step = 0;
  /// Textual std::mt19937_64 state.
  std::string rng_state;

  bool operator==(const Checkpoint&) const = default;
};

/// Little-endian binary layout:
///   "DDFCKPT1", u32 version, NetConfig (u32 levels, u32 radius, u32 count + u32
///   list for feature channels and decoder widths), u32 teacher/student flags,
///   array records (u32 name length, name, u32 rank, u32 extents, f32 payload)
///   for teacher/ then student/ params, optimizer sections (u32 name length,
///   name, u64 t, records m/<param>, v/<param>), u64 global step, u32 length +
///   rng state text.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ddflow

#endif  // DDFLOW_TRAIN_CHECKPOINT_HPP_
