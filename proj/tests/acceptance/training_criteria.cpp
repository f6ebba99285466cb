#include "harness.hpp"

#include "ddflow/data/source.hpp"
#include "ddflow/data/synthetic.hpp"
#include "ddflow/eval/metrics.hpp"
#include "ddflow/flow/occlusion.hpp"
#include "ddflow/net/flow_net.hpp"
#include "ddflow/train/checkpoint.hpp"
#include "ddflow/train/trainer.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

namespace ddflow::acceptance {
namespace {

constexpr std::uint64_t kHeldOutSeed = 1000;
constexpr std::uint64_t kOccludedSetSeed = 2000;
constexpr Index kHeldOutPairs = 50;

// Desk-scale schedule on 64x64 synthetic pairs with shifts up to 8 px.
struct Desk {
  NetConfig net;
  OptimizerConfig optim;
  SchedulePlan plan;
  SyntheticConfig data;
};

Desk desk(std::uint64_t seed) {
  Desk d;
  d.optim.lr0 = 5e-4;
  d.optim.halving_interval = 2000;
  d.plan.warmup_steps = 2000;
  d.plan.teacher_steps = 3000;
  d.plan.joint_steps = 0;
  d.plan.seed = seed;
  return d;
}

std::shared_ptr<const PairSource> stream(std::uint64_t seed) {
  return std::make_shared<SyntheticStream>(seed, SyntheticConfig{});
}

void progress(const std::string& what, const StepResult& r) {
  if (r.step % 1000 == 0) std::cerr << "  [" << what << "] step " << r.step << " loss_p " << r.loss_p << "\n";
}

struct TeacherRun {
  Checkpoint warmup, final;
  double seconds = 0.0;
};

// Teachers are shared between criteria within one invocation.
const TeacherRun& teacher(std::uint64_t seed) {
  static std::map<std::uint64_t, TeacherRun> cache;
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;
  const Desk d = desk(seed);
  Trainer t(d.net, d.optim, d.plan, stream(seed));
  TeacherRun run;
  const Stopwatch clock;
  t.run([&](const StepResult& r) { progress("teacher seed " + std::to_string(seed), r); },
        [&](const Checkpoint& c) {
          if (c.global_step == d.plan.warmup_steps) run.warmup = c;
        });
  run.seconds = clock.seconds();
  run.final = t.checkpoint();
  return cache.emplace(seed, std::move(run)).first->second;
}

const std::vector<LabeledPair>& held_out() {
  static const std::vector<LabeledPair> pairs = gen_synthetic(kHeldOutSeed, kHeldOutPairs, SyntheticConfig{});
  return pairs;
}

// Held-out pairs whose ground truth occludes at least 10% of the frame.
const std::vector<LabeledPair>& occluded_held_out() {
  static const std::vector<LabeledPair> pairs = [] {
    std::vector<LabeledPair> out;
    for (Index index = 0; Index(out.size()) < kHeldOutPairs; ++index) {
      LabeledPair p = synthetic_pair(kOccludedSetSeed, std::uint64_t(index), SyntheticConfig{});
      if (double(p.occ_f.count()) >= 0.1 * double(p.occ_f.size())) out.push_back(std::move(p));
    }
    return out;
  }();
  return pairs;
}

EvalReport evaluate_model(const ModelParams<float>& params, const NetConfig& net, const std::vector<LabeledPair>& data) {
  return evaluate(
      [&](const LabeledPair& p) {
        auto [wf, wb] = forward_backward(p.i1, p.i2, params, net);
        OcclusionMap occ = estimate_occlusion(wf, wb);
        return std::pair{std::move(wf), std::move(occ)};
      },
      data);
}

// ---------------------------------------------------------------- criterion 7

Outcome end_to_end_teacher() {
  const TeacherRun& run = teacher(1);
  const EvalReport r = evaluate_model(run.final.teacher, run.final.net, held_out());
  const double noc = r.epe_noc.value_or(1e30);
  return {noc < 1.5 && run.seconds < 1800.0,
          format("epe_noc %.3f px (all %.3f, occ %.3f) on %lld held-out pairs; %lld steps in %.0f s", noc,
                 r.epe_all.value_or(-1), r.epe_occ.value_or(-1), static_cast<long long>(kHeldOutPairs),
                 static_cast<long long>(run.final.global_step), run.seconds)};
}

// ---------------------------------------------------------------- criterion 8

struct Ablation {
  std::uint64_t seed;
  double occ_with, occ_without, noc_with, noc_without;
  double occ_gain() const { return 1.0 - occ_with / occ_without; }
  double noc_loss() const { return noc_with / noc_without - 1.0; }
  bool pass() const { return occ_gain() >= 0.15 && noc_loss() < 0.05; }
};

EvalReport joint_student(std::uint64_t seed, bool distillation) {
  const TeacherRun& base = teacher(seed);
  Desk d = desk(seed);
  d.plan.joint_steps = 3000;
  d.plan.census = true;
  d.plan.occlusion = true;
  d.plan.distillation = distillation;
  Trainer t(d.net, d.optim, d.plan, stream(seed));
  t.restore(base.final);
  const std::string tag = "joint seed " + std::to_string(seed) + (distillation ? " L_p+L_o" : " L_p");
  t.run([&](const StepResult& r) { progress(tag, r); }, nullptr);
  return evaluate_model(*t.student(), d.net, held_out());
}

Outcome ablation_trend() {
  std::vector<Ablation> runs;
  for (std::uint64_t seed : {1, 2, 3}) {
    const EvalReport with = joint_student(seed, true), without = joint_student(seed, false);
    runs.push_back({seed, with.epe_occ.value_or(1e30), without.epe_occ.value_or(1e-30), with.epe_noc.value_or(1e30),
                    without.epe_noc.value_or(1e-30)});
  }
  std::sort(runs.begin(), runs.end(), [](const Ablation& a, const Ablation& b) { return a.occ_gain() < b.occ_gain(); });
  std::string detail;
  for (const Ablation& a : runs) {
    detail += format("seed %llu: occ %.3f vs %.3f (%+.1f%%), noc %.3f vs %.3f (%+.1f%%); ",
                     static_cast<unsigned long long>(a.seed), a.occ_with, a.occ_without, -100.0 * a.occ_gain(),
                     a.noc_with, a.noc_without, 100.0 * a.noc_loss());
  }
  const Ablation& median = runs[1];
  detail += format("median run seed %llu %s", static_cast<unsigned long long>(median.seed),
                   median.pass() ? "passes" : "fails");
  return {median.pass(), detail};
}

// ---------------------------------------------------------------- criterion 9

Outcome occlusion_handling_trend() {
  const TeacherRun& masked = teacher(1);
  Desk d = desk(1);
  d.plan.occlusion = false;
  Trainer unmasked(d.net, d.optim, d.plan, stream(1));
  unmasked.restore(masked.warmup);
  unmasked.run([&](const StepResult& r) { progress("unmasked teacher seed 1", r); }, nullptr);

  const auto& data = occluded_held_out();
  const EvalReport with = evaluate_model(masked.final.teacher, d.net, data);
  const EvalReport without = evaluate_model(unmasked.teacher(), d.net, data);
  const double a = with.epe_all.value_or(1e30), b = without.epe_all.value_or(1e-30);
  const double gain = 1.0 - a / b;
  return {gain >= 0.05, format("epe_all masked %.3f vs unmasked %.3f (%.1f%% better) on %zu pairs with >= 10%% "
                               "occluded pixels",
                               a, b, 100.0 * gain, data.size())};
}

}  // namespace

std::vector<Criterion> training_criteria() {
  return {
      {7, "end-to-end teacher", end_to_end_teacher},
      {8, "distillation ablation trend", ablation_trend},
      {9, "occlusion handling trend", occlusion_handling_trend},
  };
}

}  // namespace ddflow::acceptance
