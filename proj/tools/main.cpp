// ddflow command-line entry point: gen-data, train, infer, eval.
//
// Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.

#include "ddflow/data/dataset.hpp"
#include "ddflow/data/synthetic.hpp"
#include "ddflow/error.hpp"
#include "ddflow/eval/metrics.hpp"
#include "ddflow/flow/occlusion.hpp"
#include "ddflow/image/color.hpp"
#include "ddflow/io/flow_io.hpp"
#include "ddflow/io/png.hpp"
#include "ddflow/train/checkpoint.hpp"
#include "ddflow/train/config.hpp"
#include "ddflow/train/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ddflow;

namespace {

constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct GenDataArgs {
  std::string out;
  std::uint64_t count = 100;
  std::string size = "64x64";
  Index max_shift = 8;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string out;
  std::vector<std::string> overrides;
  std::uint64_t log_every = 100;
  std::optional<std::uint64_t> max_steps;
};

struct InferArgs {
  std::string ckpt, frame1, frame2, out_flo, viz;
};

struct EvalArgs {
  std::string ckpt, data, report, viz_dir, per_pair;
  bool oracle = false;
};

std::pair<Index, Index> parse_size(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw std::invalid_argument("--size must look like HxW, got '" + s + "'");
  return {std::stol(m[1]), std::stol(m[2])};
}

std::string step_name(std::uint64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "step_%08llu.ckpt", static_cast<unsigned long long>(step));
  return buf;
}

int cmd_gen_data(const GenDataArgs& a) {
  SyntheticConfig c;
  std::tie(c.height, c.width) = parse_size(a.size);
  c.max_shift = a.max_shift;
  c.validate();
  const NetConfig net;
  // The coarsest cost volume reaches radius * stride pixels.
  const Index reach = net.correlation_radius * net.input_multiple();
  if (c.max_shift > reach) {
    std::cerr << "warning: max shift " << c.max_shift << " exceeds the default network's search reach of " << reach
              << " px\n";
  }
  write_dataset(a.out, gen_synthetic(a.seed, Index(a.count), c), a.seed);
  std::cout << "wrote " << a.count << " pairs to " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunConfig config = load_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config = parse_config(kv, std::move(config));
  }
  config.validate();

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + a.out + ": " + ec.message());
  {
    std::ofstream archived(fs::path(a.out) / "config.txt");
    archived << to_config_text(config);
    if (!archived) throw std::runtime_error("cannot write " + (fs::path(a.out) / "config.txt").string());
  }

  Trainer trainer(config.net, config.optim, config.plan, make_source(config));
  if (resume) trainer.restore(*resume);
  if (trainer.done() && resume) {
    std::cout << "schedule already complete at step " << trainer.global_step() << "\n";
    return 0;
  }

  MetricsCsv metrics(fs::path(a.out) / "metrics.csv", trainer.global_step());
  auto on_step = [&](const StepResult& r) {
    metrics.append(r);
    if (a.log_every > 0 && (r.step % a.log_every == 0 || r.step == 1)) {
      std::cout << "step " << r.step << " [" << stage_name(r.stage) << "] loss_p " << r.loss_p << " loss_o "
                << r.loss_o << " lr " << r.lr << std::endl;
    }
  };
  auto on_checkpoint = [&](const Checkpoint& c) {
    const fs::path dir(a.out);
    save_checkpoint(dir / step_name(c.global_step), c);
    save_checkpoint(dir / "last.ckpt", c);
    if (c.global_step >= config.plan.total_steps()) save_checkpoint(dir / "final.ckpt", c);
  };
  trainer.run(on_step, on_checkpoint, config.checkpoint_interval, a.max_steps);
  std::cout << "stopped at step " << trainer.global_step() << " of " << config.plan.total_steps() << "\n";
  return 0;
}

struct LoadedModel {
  NetConfig net;
  ModelParams<float> params;
};

/// The student when present, otherwise the teacher (with a warning).
LoadedModel load_model(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  Checkpoint c = load_checkpoint(path);
  if (!c.student) {
    std::cerr << "warning: " << path << " has no student model; using the teacher\n";
    return {c.net, std::move(c.teacher)};
  }
  return {c.net, std::move(*c.student)};
}

int cmd_infer(const InferArgs& a) {
  const LoadedModel model = load_model(a.ckpt);
  const Image i1 = read_image(a.frame1), i2 = read_image(a.frame2);
  if (i1.height() != i2.height() || i1.width() != i2.width()) {
    throw std::invalid_argument("frames differ in extent");
  }
  const Padding pad = padding_for(i1.height(), i1.width(), model.net.input_multiple());
  if (!pad.none()) {
    std::cout << "padded " << i1.height() << "x" << i1.width() << " by " << pad.bottom << " rows and " << pad.right
              << " columns (edge replicate)\n";
  }
  const FlowField flow = forward_flow(i1, i2, model.params, model.net);
  write_flo(a.out_flo, flow);
  if (!a.viz.empty()) write_png(a.viz, flow_to_color(flow));
  std::cout << "wrote " << a.out_flo << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const std::vector<LabeledPair> data = read_dataset(a.data);
  if (data.empty()) throw std::invalid_argument("dataset " + a.data + " is empty");
  Predictor predictor;
  std::optional<LoadedModel> model;
  if (a.oracle) {
    predictor = oracle_predictor();
  } else {
    if (a.ckpt.empty()) throw std::invalid_argument("eval needs --ckpt or --oracle");
    model = load_model(a.ckpt);
    predictor = [&m = *model](const LabeledPair& p) {
      auto [wf, wb] = forward_backward(p.i1, p.i2, m.params, m.net);
      OcclusionMap occ = estimate_occlusion(wf, wb);
      return std::pair{std::move(wf), std::move(occ)};
    };
  }
  EvalOptions options;
  options.viz_dir = a.viz_dir;
  std::ofstream per_pair;
  if (!a.per_pair.empty()) {
    per_pair.open(a.per_pair);
    if (!per_pair) throw std::runtime_error("cannot write " + a.per_pair);
    per_pair << "pair," << kReportHeader << "\n";
    options.per_pair = [&](std::size_t i, const EvalReport& r) { per_pair << i << "," << report_csv_row(r) << "\n"; };
  }
  const EvalReport report = evaluate(predictor, data, options);
  print_report(std::cout, report);
  write_report_csv(a.report, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised optical flow with teacher-student distillation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Render a labeled synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Number of pairs")->capture_default_str();
  g->add_option("--size", gen.size, "Frame extent HxW")->capture_default_str();
  g->add_option("--max-shift", gen.max_shift, "Largest integer displacement")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run the staged training schedule");
  t->add_option("--config", train.config, "key = value config file")->required();
  t->add_option("--resume", train.resume, "Checkpoint to continue from");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--set", train.overrides, "Override a config key (key=value), repeatable");
  t->add_option("--log-every", train.log_every, "Print progress every N steps (0 = quiet)")->capture_default_str();
  t->add_option("--max-steps", train.max_steps, "Stop after this many steps (resume later)");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Predict the flow of one frame pair");
  i->add_option("--ckpt", infer.ckpt, "Checkpoint")->required();
  i->add_option("--frame1", infer.frame1, "First frame (PNG or PPM)")->required();
  i->add_option("--frame2", infer.frame2, "Second frame (PNG or PPM)")->required();
  i->add_option("--out-flo", infer.out_flo, "Output .flo file")->required();
  i->add_option("--viz", infer.viz, "Colour-coded flow PNG");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a labeled dataset");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint (the student is evaluated when present)");
  e->add_flag("--oracle", eval.oracle, "Replay the ground truth instead of a model");
  e->add_option("--data", eval.data, "Dataset directory written by gen-data")->required();
  e->add_option("--report", eval.report, "Report CSV")->required();
  e->add_option("--viz-dir", eval.viz_dir, "Write one panel PNG per pair here");
  e->add_option("--per-pair", eval.per_pair, "Per-pair metrics CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitData;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(train);
    if (i->parsed()) return cmd_infer(infer);
    if (e->parsed()) return cmd_eval(eval);
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitData;
}
