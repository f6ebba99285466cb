#ifndef DDFLOW_EVAL_METRICS_HPP_
#define DDFLOW_EVAL_METRICS_HPP_

#include "ddflow/data/synthetic.hpp"
#include "ddflow/flow/types.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ddflow {

/// Pixels taking part in a metric.
using PixelSelector = BinaryMap<struct PixelSelectorTag>;

PixelSelector select_all(const FlowValidity& valid);
PixelSelector select_noc(const OcclusionMap& gt_occ, const FlowValidity& valid);
PixelSelector select_occ(const OcclusionMap& gt_occ, const FlowValidity& valid);

/// Mean endpoint error over selected pixels; empty selection is absent.
std::optional<double> epe(const FlowField& pred, const FlowField& gt, const PixelSelector& selector);

/// Endpoint error above 3 px and above 5% of the ground-truth magnitude.
bool fl_erroneous(float pu, float pv, float gu, float gv);

/// Percentage of Fl-erroneous pixels among valid ones; empty set is absent.
std::optional<double> fl_percent(const FlowField& pred, const FlowField& gt, const FlowValidity& valid);

struct FMeasure {
  std::optional<double> precision, recall, f;
};

/// Occluded pixels are the positive class.
FMeasure occlusion_f_measure(const OcclusionMap& pred, const OcclusionMap& gt, const FlowValidity& valid);

struct EvalReport {
  std::optional<double> epe_all, epe_noc, epe_occ, fl_percent;
  std::optional<double> occ_precision, occ_recall, occ_f;
  Index n_all = 0, n_noc = 0, n_occ = 0;
};

/// Pixel-weighted accumulation over pairs.
class MetricAccumulator {
 public:
  void add(const FlowField& pred, const OcclusionMap& pred_occ, const LabeledPair& gt);
  void merge(const MetricAccumulator& other);
  EvalReport report() const;

 private:
  double sum_noc_ = 0.0, sum_occ_ = 0.0;
  Index n_noc_ = 0, n_occ_ = 0;
  Index fl_bad_ = 0, fl_count_ = 0;
  Index tp_ = 0, fp_ = 0, fn_ = 0;
};

/// Forward flow and forward occlusion predicted for a pair.
using Predictor = std::function<std::pair<FlowField, OcclusionMap>(const LabeledPair&)>;

struct EvalOptions {
  /// When set, one panel PNG per pair is written here.
  std::string viz_dir;
  /// Called with each pair's own metrics, in dataset order.
  std::function<void(std::size_t, const EvalReport&)> per_pair;
};

EvalReport evaluate(const Predictor& predictor, const std::vector<LabeledPair>& data, const EvalOptions& options = {});

/// Predictor replaying the ground truth.
Predictor oracle_predictor();

/// Header of the report CSV.
inline constexpr const char* kReportHeader = "epe_all,epe_noc,epe_occ,fl,occ_precision,occ_recall,occ_f";

/// Header line plus one value row; absent values are written as NA.
void write_report_csv(const std::string& path, const EvalReport& report);
std::string report_csv_row(const EvalReport& report);
void print_report(std::ostream& out, const EvalReport& report);

/// Frame 1 | predicted flow | gt flow | predicted occlusion | gt occlusion.
Image eval_panel(const LabeledPair& pair, const FlowField& pred, const OcclusionMap& pred_occ);

}  // namespace ddflow

#endif  // DDFLOW_EVAL_METRICS_HPP_
