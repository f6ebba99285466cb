#include "ddflow/train/trainer.hpp"

#include "ddflow/diff/ops.hpp"
#include "ddflow/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ddflow {
namespace {

Tensor<float> stack_frames(const std::vector<Image>& frames) {
  const Image& first = frames.front();
  const Index plane = first.height() * first.width();
  Tensor<float> out({Index(frames.size()), 3, first.height(), first.width()});
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const Image rgb = to_rgb(frames[n]);
    if (rgb.height() != first.height() || rgb.width() != first.width()) {
      throw std::invalid_argument("training frames must share one extent");
    }
    out.values().segment(Index(n) * 3 * plane, 3 * plane) = rgb.values();
  }
  return out;
}

std::vector<Tensor<float>> param_grads(const Graph<float>& g, const BoundParams<float>& p) {
  std::vector<Tensor<float>> grads;
  grads.reserve(p.vars.size());
  for (const auto& v : p.vars) grads.push_back(g.grad(v));
  return grads;
}

Tensor<float> zero_maps(const Tensor<float>& flow) { return Tensor<float>({flow.dim(0), flow.dim(2), flow.dim(3)}); }

Tensor<float> valid_mask_batch(const Tensor<float>& patch_occ, const Tensor<float>& teacher_occ) {
  Tensor<float> m(patch_occ.shape());
  m.values() = (patch_occ.values() - teacher_occ.values()).max(0.0f).min(1.0f);
  return m;
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kWarmup: return "warmup";
    case Stage::kTeacher: return "teacher";
    case Stage::kJoint: return "joint";
    case Stage::kDone: return "done";
  }
  return "?";
}

void SchedulePlan::validate() const {
  if (!(crop_fraction > 0.0 && crop_fraction < 1.0)) {
    throw std::invalid_argument("schedule: crop fraction must lie in (0, 1)");
  }
  if (augment.flip_horizontal_prob < 0.0 || augment.flip_horizontal_prob > 1.0 ||
      augment.flip_vertical_prob < 0.0 || augment.flip_vertical_prob > 1.0) {
    throw std::invalid_argument("schedule: flip probabilities must lie in [0, 1]");
  }
  if (census_window != 3 && census_window != 5 && census_window != 7) {
    throw std::invalid_argument("schedule: census window must be 3, 5 or 7");
  }
  loss.validate();
  occlusion_params.validate();
}

Stage SchedulePlan::stage_of(std::uint64_t step) const {
  if (step == 0) throw std::invalid_argument("stage_of: steps are numbered from 1");
  if (step <= warmup_steps) return Stage::kWarmup;
  if (step <= warmup_steps + teacher_steps) return Stage::kTeacher;
  if (step <= total_steps()) return Stage::kJoint;
  return Stage::kDone;
}

std::pair<Index, Index> SchedulePlan::crop_extent(Index height, Index width) const {
  const Index h = Index(std::lround(crop_fraction * double(height)));
  const Index w = Index(std::lround(crop_fraction * double(width)));
  if (!CropSpec{0, 0, h, w}.valid_for(height, width)) {
    throw std::invalid_argument("crop fraction " + std::to_string(crop_fraction) + " gives an invalid " +
                                std::to_string(h) + "x" + std::to_string(w) + " patch for " +
                                std::to_string(height) + "x" + std::to_string(width) + " frames");
  }
  return {h, w};
}

Tensor<float> loss_images(const Tensor<float>& frames, const SchedulePlan& plan) {
  if (!plan.census) return frames;
  Graph<float> g;
  return census(g.constant(frames), plan.census_window).value();
}

Tensor<float> crop_batch(const Tensor<float>& t, const std::vector<CropSpec>& specs) {
  const bool maps = t.rank() == 3;
  if ((!maps && t.rank() != 4) || t.dim(0) != Index(specs.size())) {
    throw std::invalid_argument("crop_batch: expected [N,C,H,W] or [N,H,W] with one crop per sample");
  }
  const Index c = maps ? 1 : t.dim(1), h = t.dim(maps ? 1 : 2), w = t.dim(maps ? 2 : 3);
  const CropSpec& s0 = specs.front();
  for (const auto& s : specs) {
    if (!s.valid_for(h, w) || s.h != s0.h || s.w != s0.w) throw std::invalid_argument("crop_batch: invalid crop");
  }
  Shape shape = maps ? Shape{t.dim(0), s0.h, s0.w} : Shape{t.dim(0), c, s0.h, s0.w};
  Tensor<float> out(shape);
  for (std::size_t n = 0; n < specs.size(); ++n) {
    const CropSpec& s = specs[n];
    for (Index k = 0; k < c; ++k) {
      const float* src = t.data() + (Index(n) * c + k) * h * w;
      float* dst = out.data() + (Index(n) * c + k) * s.h * s.w;
      for (Index y = 0; y < s.h; ++y) {
        std::copy_n(src + (s.y0 + y) * w + s.x0, s.w, dst + y * s.w);
      }
    }
  }
  return out;
}

TeacherPass teacher_pass(const ModelParams<float>& teacher, const NetConfig& config, const Batch& batch,
                         bool occlusion, const SchedulePlan& plan) {
  Graph<float> g;
  const BoundParams<float> p = bind_params(g, teacher, config, true);
  auto [wf, wb] = forward_backward_padded(g, batch.i1, batch.i2, p);
  Tensor<float> o_f, o_b;
  if (occlusion) {
    o_f = estimate_occlusion(wf.value(), wb.value(), plan.occlusion_params);
    o_b = estimate_occlusion(wb.value(), wf.value(), plan.occlusion_params);
  } else {
    o_f = zero_maps(wf.value());
    o_b = o_f;
  }
  Var<float> loss = photometric_loss(g.constant(loss_images(batch.i1, plan)), g.constant(loss_images(batch.i2, plan)),
                                     wf, wb, o_f, o_b, plan.loss);
  TeacherPass out;
  out.loss = double(loss.value()[0]);
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite teacher loss");
  g.backward(loss);
  out.grads = param_grads(g, p);
  out.w_f = wf.value();
  out.w_b = wb.value();
  return out;
}

StudentPass student_pass(const ModelParams<float>& student, const NetConfig& config, const Batch& patches,
                         const Tensor<float>& teacher_w_f, const Tensor<float>& teacher_w_b,
                         const Tensor<float>& teacher_occ_f, const Tensor<float>& teacher_occ_b,
                         const SchedulePlan& plan) {
  Graph<float> g;
  const BoundParams<float> p = bind_params(g, student, config, true);
  auto [wf, wb] = forward_backward_padded(g, patches.i1, patches.i2, p);
  const Tensor<float> occ_f = estimate_occlusion(wf.value(), wb.value(), plan.occlusion_params);
  const Tensor<float> occ_b = estimate_occlusion(wb.value(), wf.value(), plan.occlusion_params);
  const Tensor<float> keep_all = zero_maps(wf.value());
  Var<float> lp = photometric_loss(g.constant(loss_images(patches.i1, plan)), g.constant(loss_images(patches.i2, plan)),
                                   wf, wb, plan.occlusion ? occ_f : keep_all, plan.occlusion ? occ_b : keep_all,
                                   plan.loss);
  StudentPass out;
  out.valid_f = valid_mask_batch(occ_f, teacher_occ_f);
  out.valid_b = valid_mask_batch(occ_b, teacher_occ_b);
  Var<float> lo = distillation_loss(teacher_w_f, wf, out.valid_f, plan.loss) +
                  distillation_loss(teacher_w_b, wb, out.valid_b, plan.loss);
  Var<float> total = plan.distillation ? student_total_loss(lp, lo) : lp;
  out.loss_p = double(lp.value()[0]);
  out.loss_o = double(lo.value()[0]);
  if (!std::isfinite(double(total.value()[0]))) throw NumericalError("non-finite student loss");
  g.backward(total);
  out.grads = param_grads(g, p);
  out.w_f = wf.value();
  out.w_b = wb.value();
  return out;
}

Trainer::Trainer(NetConfig net, OptimizerConfig optim, SchedulePlan plan, std::shared_ptr<const PairSource> data)
    : net_(std::move(net)), optim_(optim), plan_(std::move(plan)), data_(std::move(data)), rng_(plan_.seed) {
  net_.validate();
  optim_.validate();
  plan_.validate();
  if (!data_ || data_->size() == 0) throw std::invalid_argument("Trainer: empty training data");
  const auto [i1, i2] = data_->frames(0);
  if (plan_.joint_steps > 0) plan_.crop_extent(i1.height(), i1.width());
  std::mt19937_64 init_rng(plan_.seed);
  teacher_ = init_params<float>(net_, init_rng);
  teacher_opt_ = AdamState<float>::zeros_like(teacher_);
  // Batches draw from a stream separate from initialization.
  rng_.seed(plan_.seed ^ 0x9e3779b97f4a7c15ull);
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!(ckpt.net == net_)) throw std::invalid_argument("checkpoint network config differs from the run config");
  if (ckpt.global_step > plan_.total_steps()) {
    throw std::invalid_argument("checkpoint step " + std::to_string(ckpt.global_step) + " lies beyond the schedule");
  }
  const std::uint64_t boundary = plan_.warmup_steps + plan_.teacher_steps;
  const bool joint_started = ckpt.global_step > boundary;
  if (joint_started ? !ckpt.student : (ckpt.student && ckpt.global_step < boundary)) {
    throw std::invalid_argument("checkpoint student presence does not match its step within the schedule");
  }
  std::istringstream is(ckpt.rng_state);
  std::mt19937_64 rng;
  is >> rng;
  if (is.fail()) throw std::invalid_argument("checkpoint rng state is unreadable");
  teacher_ = ckpt.teacher;
  teacher_opt_ = ckpt.teacher_opt;
  student_ = ckpt.student;
  student_opt_ = ckpt.student_opt;
  step_ = ckpt.global_step;
  rng_ = rng;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.net = net_;
  c.teacher = teacher_;
  c.teacher_opt = teacher_opt_;
  c.student = student_;
  c.student_opt = student_opt_;
  c.global_step = step_;
  c.rng_state = rng_text(rng_);
  return c;
}

void Trainer::start_joint_stage() {
  if (student_ || step_ < plan_.warmup_steps + plan_.teacher_steps || plan_.joint_steps == 0) return;
  student_ = teacher_;
  student_opt_ = AdamState<float>::zeros_like(*student_);
}

Batch Trainer::next_batch() {
  std::uniform_int_distribution<std::uint64_t> pick(0, data_->size() - 1);
  std::vector<Image> f1, f2;
  for (Index n = 0; n < optim_.batch_size; ++n) {
    const auto [a, b] = data_->frames(pick(rng_));
    auto [x, y] = augment(to_rgb(a), to_rgb(b), rng_, plan_.augment);
    f1.push_back(std::move(x));
    f2.push_back(std::move(y));
  }
  return {stack_frames(f1), stack_frames(f2)};
}

StepResult Trainer::step() {
  if (done()) throw std::logic_error("Trainer::step: schedule already complete");
  const std::uint64_t s = step_ + 1;
  StepResult r;
  r.step = s;
  r.stage = plan_.stage_of(s);
  r.lr = optim_.learning_rate(s);
  try {
    const Batch batch = next_batch();
    if (r.stage != Stage::kJoint) {
      TeacherPass t = teacher_pass(teacher_, net_, batch, r.stage == Stage::kTeacher && plan_.occlusion, plan_);
      adam_step(teacher_, t.grads, teacher_opt_, optim_, s);
      r.loss_p = r.teacher_loss_p = t.loss;
    } else {
      start_joint_stage();
      TeacherPass t = teacher_pass(teacher_, net_, batch, plan_.occlusion, plan_);
      const Tensor<float> t_occ_f = estimate_occlusion(t.w_f, t.w_b, plan_.occlusion_params);
      const Tensor<float> t_occ_b = estimate_occlusion(t.w_b, t.w_f, plan_.occlusion_params);
      adam_step(teacher_, t.grads, teacher_opt_, optim_, s);

      const auto [h, w] = plan_.crop_extent(batch.i1.dim(2), batch.i1.dim(3));
      const Index height = batch.i1.dim(2), width = batch.i1.dim(3);
      std::uniform_int_distribution<Index> ox(0, width - w), oy(0, height - h);
      std::vector<CropSpec> specs;
      for (Index n = 0; n < batch.i1.dim(0); ++n) {
        const Index x0 = ox(rng_);
        specs.push_back({x0, oy(rng_), h, w});
      }
      const Batch patches{crop_batch(batch.i1, specs), crop_batch(batch.i2, specs)};
      StudentPass sp = student_pass(*student_, net_, patches, crop_batch(t.w_f, specs), crop_batch(t.w_b, specs),
                                    crop_batch(t_occ_f, specs), crop_batch(t_occ_b, specs), plan_);
      adam_step(*student_, sp.grads, *student_opt_, optim_, s);
      r.teacher_loss_p = t.loss;
      r.loss_p = sp.loss_p;
      r.loss_o = sp.loss_o;
    }
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " (step " + std::to_string(s) + ")");
  }
  step_ = s;
  return r;
}

void Trainer::run(const std::function<void(const StepResult&)>& on_step,
                  const std::function<void(const Checkpoint&)>& on_checkpoint, std::uint64_t checkpoint_interval,
                  std::optional<std::uint64_t> max_steps) {
  const std::uint64_t boundary1 = plan_.warmup_steps, boundary2 = plan_.warmup_steps + plan_.teacher_steps;
  std::uint64_t ran = 0;
  while (!done() && (!max_steps || ran < *max_steps)) {
    const StepResult r = step();
    ++ran;
    if (on_step) on_step(r);
    const bool due = (checkpoint_interval > 0 && step_ % checkpoint_interval == 0) || step_ == boundary1 ||
                     step_ == boundary2 || done() || (max_steps && ran == *max_steps);
    if (due && on_checkpoint) on_checkpoint(checkpoint());
  }
  // A schedule without any steps still yields its initial state.
  if (plan_.total_steps() == 0 && on_checkpoint) on_checkpoint(checkpoint());
}

std::string metrics_row(const StepResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu,%s,%.9g,%.9g,%.9g", static_cast<unsigned long long>(r.step),
                std::string(stage_name(r.stage)).c_str(), r.loss_p, r.loss_o, r.lr);
  return buf;
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path, std::uint64_t resume_step) : path_(path) {
  std::vector<std::string> kept;
  if (resume_step > 0 && std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::uint64_t step = std::stoull(line.substr(0, line.find(',')));
      if (step <= resume_step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics file " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& l : kept) out << l << "\n";
}

void MetricsCsv::append(const StepResult& r) {
  std::ofstream out(path_, std::ios::app);
  out << metrics_row(r) << "\n";
  if (!out) throw std::runtime_error("cannot append to metrics file " + path_.string());
}

}  // namespace ddflow
