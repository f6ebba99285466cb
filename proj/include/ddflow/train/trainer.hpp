#ifndef DDFLOW_TRAIN_TRAINER_HPP_
#define DDFLOW_TRAIN_TRAINER_HPP_

#include "ddflow/data/source.hpp"
#include "ddflow/flow/occlusion.hpp"
#include "ddflow/image/ops.hpp"
#include "ddflow/loss/losses.hpp"
#include "ddflow/net/flow_net.hpp"
#include "ddflow/train/adam.hpp"
#include "ddflow/train/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ddflow {

enum class Stage { kWarmup, kTeacher, kJoint, kDone };
std::string_view stage_name(Stage s);

/// Staged schedule: warm-up without occlusion handling, teacher training with
/// occlusion masking, then joint teacher and student training.
struct SchedulePlan {
  std::uint64_t warmup_steps = 2000;
  std::uint64_t teacher_steps = 3000;
  std::uint64_t joint_steps = 3000;
  /// Student patch extent as a fraction of the frame.
  double crop_fraction = 0.75;
  std::uint64_t seed = 1;
  bool census = true;
  Index census_window = 3;
  /// Occlusion masking in the teacher and joint stages (the warm-up never masks).
  bool occlusion = true;
  /// Distillation loss for the student; off gives the photometric-only ablation.
  bool distillation = true;
  AugmentConfig augment;
  RobustLossParams loss;
  OcclusionParams occlusion_params;

  void validate() const;
  std::uint64_t total_steps() const { return warmup_steps + teacher_steps + joint_steps; }
  /// Stage of global step `step` (numbered from 1).
  Stage stage_of(std::uint64_t step) const;
  /// Patch extent for an H x W frame.
  std::pair<Index, Index> crop_extent(Index height, Index width) const;
};

struct StepResult {
  std::uint64_t step = 0;
  Stage stage = Stage::kWarmup;
  double loss_p = 0.0;  // teacher L_p before the joint stage, student L_p during it
  double loss_o = 0.0;  // student L_o; 0 outside the joint stage
  double teacher_loss_p = 0.0;
  double lr = 0.0;
};

/// Augmented frames of one batch, as [N,3,H,W] tensors in [0, 1].
struct Batch {
  Tensor<float> i1, i2;
};

/// Teacher photometric step on full frames: (loss, gradients, forward flow, backward flow).
struct TeacherPass {
  double loss = 0.0;
  std::vector<Tensor<float>> grads;
  Tensor<float> w_f, w_b;
};

struct StudentPass {
  double loss_p = 0.0, loss_o = 0.0;
  std::vector<Tensor<float>> grads;
  Tensor<float> w_f, w_b;
  Tensor<float> valid_f, valid_b;  // [N,h,w] masks
};

/// Teacher forward/backward on full frames. occlusion=false uses all-zero maps.
TeacherPass teacher_pass(const ModelParams<float>& teacher, const NetConfig& config, const Batch& batch,
                         bool occlusion, const SchedulePlan& plan);

/// Student forward/backward on patches. Teacher annotations are plain arrays
/// (already cropped to the patches), so no gradient can reach the teacher.
StudentPass student_pass(const ModelParams<float>& student, const NetConfig& config, const Batch& patches,
                         const Tensor<float>& teacher_w_f, const Tensor<float>& teacher_w_b,
                         const Tensor<float>& teacher_occ_f, const Tensor<float>& teacher_occ_b,
                         const SchedulePlan& plan);

/// Census descriptors (or RGB when disabled) of a [N,3,H,W] batch.
Tensor<float> loss_images(const Tensor<float>& frames, const SchedulePlan& plan);

/// Slices every sample of a [N,C,H,W] (or [N,H,W]) tensor with its own CropSpec.
Tensor<float> crop_batch(const Tensor<float>& t, const std::vector<CropSpec>& specs);

class Trainer {
 public:
  Trainer(NetConfig net, OptimizerConfig optim, SchedulePlan plan, std::shared_ptr<const PairSource> data);

  /// Continues from a checkpoint written by a trainer with the same configuration.
  void restore(const Checkpoint& ckpt);
  Checkpoint checkpoint() const;

  std::uint64_t global_step() const { return step_; }
  bool done() const { return step_ >= plan_.total_steps(); }
  Stage next_stage() const { return plan_.stage_of(step_ + 1); }

  /// Copies the teacher into a fresh student (with zeroed optimizer state) once
  /// the teacher stage is complete. No-op before that or when a student exists.
  void start_joint_stage();

  /// Runs the next scheduled step.
  StepResult step();

  /// Runs to the end of the schedule (or `max_steps` further steps). `on_step`
  /// sees every result; `on_checkpoint` fires at stage boundaries, every
  /// checkpoint_interval steps, and where the run stops.
  void run(const std::function<void(const StepResult&)>& on_step,
           const std::function<void(const Checkpoint&)>& on_checkpoint, std::uint64_t checkpoint_interval = 0,
           std::optional<std::uint64_t> max_steps = std::nullopt);

  const ModelParams<float>& teacher() const { return teacher_; }
  const std::optional<ModelParams<float>>& student() const { return student_; }
  /// Student when present, otherwise teacher.
  const ModelParams<float>& inference_model() const { return student_ ? *student_ : teacher_; }
  const NetConfig& net_config() const { return net_; }
  const SchedulePlan& plan() const { return plan_; }

  /// Draws the next batch (indices, augmentation) from the trainer's generator.
  Batch next_batch();

 private:
  NetConfig net_;
  OptimizerConfig optim_;
  SchedulePlan plan_;
  std::shared_ptr<const PairSource> data_;
  ModelParams<float> teacher_;
  std::optional<ModelParams<float>> student_;
  AdamState<float> teacher_opt_;
  std::optional<AdamState<float>> student_opt_;
  std::mt19937_64 rng_;
  std::uint64_t step_ = 0;
};

inline constexpr const char* kMetricsHeader = "step,stage,loss_p,loss_o,lr";

/// Append-only `step,stage,loss_p,loss_o,lr` CSV. Opening for a run resumed at
/// step k keeps the rows of steps 1..k and drops any later ones, so the file
/// never repeats or skips a step.
class MetricsCsv {
 public:
  MetricsCsv(const std::filesystem::path& path, std::uint64_t resume_step);
  void append(const StepResult& r);

 private:
  std::filesystem::path path_;
};

std::string metrics_row(const StepResult& r);

}  // namespace ddflow

#endif  // DDFLOW_TRAIN_TRAINER_HPP_
