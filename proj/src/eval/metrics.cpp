#include "ddflow/eval/metrics.hpp"

#include "ddflow/image/color.hpp"
#include "ddflow/image/ops.hpp"
#include "ddflow/io/png.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace ddflow {
namespace {

void check_extent(Index h1, Index w1, Index h2, Index w2, const char* what) {
  if (h1 != h2 || w1 != w2) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double endpoint_error(float pu, float pv, float gu, float gv) {
  const double du = double(pu) - double(gu), dv = double(pv) - double(gv);
  return std::sqrt(du * du + dv * dv);
}

std::optional<double> ratio(double num, Index den) {
  if (den == 0) return std::nullopt;
  return num / double(den);
}

FMeasure f_from_counts(Index tp, Index fp, Index fn) {
  FMeasure m;
  if (tp + fp > 0) m.precision = double(tp) / double(tp + fp);
  if (tp + fn == 0) return m;
  m.recall = double(tp) / double(tp + fn);
  if (tp == 0) {
    m.f = 0.0;
  } else {
    m.f = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

Image occlusion_rgb(const OcclusionMap& occ) {
  Image img(3, occ.height(), occ.width());
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < occ.height(); ++y)
      for (Index x = 0; x < occ.width(); ++x) img.at(c, y, x) = occ(y, x) ? 1.0f : 0.0f;
  return img;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

PixelSelector select_all(const FlowValidity& valid) {
  PixelSelector s(valid.height(), valid.width());
  for (Index i = 0; i < s.size(); ++i) s.set(i, valid[i]);
  return s;
}

PixelSelector select_noc(const OcclusionMap& gt_occ, const FlowValidity& valid) {
  check_extent(gt_occ.height(), gt_occ.width(), valid.height(), valid.width(), "select_noc");
  PixelSelector s(valid.height(), valid.width());
  for (Index i = 0; i < s.size(); ++i) s.set(i, valid[i] && !gt_occ[i]);
  return s;
}

PixelSelector select_occ(const OcclusionMap& gt_occ, const FlowValidity& valid) {
  check_extent(gt_occ.height(), gt_occ.width(), valid.height(), valid.width(), "select_occ");
  PixelSelector s(valid.height(), valid.width());
  for (Index i = 0; i < s.size(); ++i) s.set(i, valid[i] && gt_occ[i]);
  return s;
}

std::optional<double> epe(const FlowField& pred, const FlowField& gt, const PixelSelector& selector) {
  check_extent(pred.height(), pred.width(), gt.height(), gt.width(), "epe");
  check_extent(pred.height(), pred.width(), selector.height(), selector.width(), "epe");
  double sum = 0.0;
  Index n = 0;
  for (Index y = 0; y < gt.height(); ++y)
    for (Index x = 0; x < gt.width(); ++x) {
      if (!selector(y, x)) continue;
      sum += endpoint_error(pred.u(y, x), pred.v(y, x), gt.u(y, x), gt.v(y, x));
      ++n;
    }
  return ratio(sum, n);
}

bool fl_erroneous(float pu, float pv, float gu, float gv) {
  const double err = endpoint_error(pu, pv, gu, gv);
  const double mag = std::sqrt(double(gu) * gu + double(gv) * gv);
  return err > 3.0 && err > 0.05 * mag;
}

std::optional<double> fl_percent(const FlowField& pred, const FlowField& gt, const FlowValidity& valid) {
  check_extent(pred.height(), pred.width(), gt.height(), gt.width(), "fl_percent");
  check_extent(pred.height(), pred.width(), valid.height(), valid.width(), "fl_percent");
  Index bad = 0, n = 0;
  for (Index y = 0; y < gt.height(); ++y)
    for (Index x = 0; x < gt.width(); ++x) {
      if (!valid(y, x)) continue;
      ++n;
      if (fl_erroneous(pred.u(y, x), pred.v(y, x), gt.u(y, x), gt.v(y, x))) ++bad;
    }
  return ratio(100.0 * double(bad), n);
}

FMeasure occlusion_f_measure(const OcclusionMap& pred, const OcclusionMap& gt, const FlowValidity& valid) {
  check_extent(pred.height(), pred.width(), gt.height(), gt.width(), "occlusion_f_measure");
  check_extent(pred.height(), pred.width(), valid.height(), valid.width(), "occlusion_f_measure");
  Index tp = 0, fp = 0, fn = 0;
  for (Index i = 0; i < gt.size(); ++i) {
    if (!valid[i]) continue;
    tp += pred[i] && gt[i];
    fp += pred[i] && !gt[i];
    fn += !pred[i] && gt[i];
  }
  return f_from_counts(tp, fp, fn);
}

void MetricAccumulator::add(const FlowField& pred, const OcclusionMap& pred_occ, const LabeledPair& gt) {
  const FlowField& g = gt.flow_f;
  check_extent(pred.height(), pred.width(), g.height(), g.width(), "MetricAccumulator");
  check_extent(pred_occ.height(), pred_occ.width(), g.height(), g.width(), "MetricAccumulator");
  for (Index y = 0; y < g.height(); ++y)
    for (Index x = 0; x < g.width(); ++x) {
      if (!gt.valid(y, x)) continue;
      const double e = endpoint_error(pred.u(y, x), pred.v(y, x), g.u(y, x), g.v(y, x));
      if (gt.occ_f(y, x)) {
        sum_occ_ += e;
        ++n_occ_;
      } else {
        sum_noc_ += e;
        ++n_noc_;
      }
      ++fl_count_;
      if (fl_erroneous(pred.u(y, x), pred.v(y, x), g.u(y, x), g.v(y, x))) ++fl_bad_;
      const bool p = pred_occ(y, x), t = gt.occ_f(y, x);
      tp_ += p && t;
      fp_ += p && !t;
      fn_ += !p && t;
    }
}

void MetricAccumulator::merge(const MetricAccumulator& o) {
  sum_noc_ += o.sum_noc_;
  sum_occ_ += o.sum_occ_;
  n_noc_ += o.n_noc_;
  n_occ_ += o.n_occ_;
  fl_bad_ += o.fl_bad_;
  fl_count_ += o.fl_count_;
  tp_ += o.tp_;
  fp_ += o.fp_;
  fn_ += o.fn_;
}

EvalReport MetricAccumulator::report() const {
  EvalReport r;
  r.n_noc = n_noc_;
  r.n_occ = n_occ_;
  r.n_all = n_noc_ + n_occ_;
  r.epe_all = ratio(sum_noc_ + sum_occ_, r.n_all);
  r.epe_noc = ratio(sum_noc_, n_noc_);
  r.epe_occ = ratio(sum_occ_, n_occ_);
  r.fl_percent = ratio(100.0 * double(fl_bad_), fl_count_);
  const FMeasure f = f_from_counts(tp_, fp_, fn_);
  r.occ_precision = f.precision;
  r.occ_recall = f.recall;
  r.occ_f = f.f;
  return r;
}

EvalReport evaluate(const Predictor& predictor, const std::vector<LabeledPair>& data, const EvalOptions& options) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (!options.viz_dir.empty()) std::filesystem::create_directories(options.viz_dir);
  MetricAccumulator total;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [pred, pred_occ] = predictor(data[i]);
    if (pred.height() != data[i].flow_f.height() || pred.width() != data[i].flow_f.width()) {
      throw std::invalid_argument("evaluate: prediction for pair " + std::to_string(i) + " has the wrong extent");
    }
    MetricAccumulator one;
    one.add(pred, pred_occ, data[i]);
    if (options.per_pair) options.per_pair(i, one.report());
    total.merge(one);
    if (!options.viz_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "panel_%05zu.png", i);
      write_png((std::filesystem::path(options.viz_dir) / name).string(), eval_panel(data[i], pred, pred_occ));
    }
  }
  return total.report();
}

Predictor oracle_predictor() {
  return [](const LabeledPair& p) { return std::make_pair(p.flow_f, p.occ_f); };
}

std::string report_csv_row(const EvalReport& r) {
  return fmt(r.epe_all) + "," + fmt(r.epe_noc) + "," + fmt(r.epe_occ) + "," + fmt(r.fl_percent) + "," +
         fmt(r.occ_precision) + "," + fmt(r.occ_recall) + "," + fmt(r.occ_f);
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kReportHeader << "\n" << report_csv_row(report) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

void print_report(std::ostream& out, const EvalReport& r) {
  auto line = [&](const char* name, const std::optional<double>& v, const char* unit) {
    out << "  " << std::left << std::setw(14) << name << std::right << std::setw(12) << fmt(v) << " " << unit << "\n";
  };
  out << "pixels: all " << r.n_all << ", noc " << r.n_noc << ", occ " << r.n_occ << "\n";
  line("epe_all", r.epe_all, "px");
  line("epe_noc", r.epe_noc, "px");
  line("epe_occ", r.epe_occ, "px");
  line("fl", r.fl_percent, "%");
  line("occ_precision", r.occ_precision, "");
  line("occ_recall", r.occ_recall, "");
  line("occ_f", r.occ_f, "");
}

Image eval_panel(const LabeledPair& pair, const FlowField& pred, const OcclusionMap& pred_occ) {
  // One shared scale so predicted and reference colors are comparable.
  const double norm = std::max(magnitude_percentile(pair.flow_f), 1e-6);
  const std::vector<Image> tiles{to_rgb(pair.i1), flow_to_color(pred, norm), flow_to_color(pair.flow_f, norm),
                                 occlusion_rgb(pred_occ), occlusion_rgb(pair.occ_f)};
  const Index h = pair.i1.height(), w = pair.i1.width();
  Image panel(3, h, w * Index(tiles.size()));
  for (std::size_t t = 0; t < tiles.size(); ++t)
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) panel.at(c, y, Index(t) * w + x) = tiles[t].at(c, y, x);
  return panel;
}

}  // namespace ddflow
