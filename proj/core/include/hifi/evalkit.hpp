#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hifi/detect.hpp"

namespace hifi::eval {

/// Everything evaluation needs from one scene.
struct EvalScene {
  std::vector<det::Detection> dets;
  std::vector<std::pair<int, det::Box>> gts;  // (class_id, box)
  double snr_db = 0.0;
};

struct ScoredDet {
  int scene = 0;
  double score = 0;
  det::Box box;
};
struct GtRef {
  int scene = 0;
  det::Box box;
};

/// 101-point interpolated AP for one class: greedy highest-score-first
/// matching at iou_thresh, each gt used once, matching within scenes.
/// No gts and no dets -> NaN (the class is excluded from means);
/// no gts with dets -> 0.
double average_precision(std::vector<ScoredDet> dets, const std::vector<GtRef>& gts,
                         double iou_thresh);

struct SnrRow {
  double snr_db = 0;
  double map_50_95 = 0, map_50 = 0, f1 = 0;
  int n_scenes = 0;
};

struct ClassAp {
  int class_id = 0;
  double ap_50 = 0, ap_50_95 = 0;  // percent
  int n_gt = 0;
};

struct EvalReport {
  double map_50_95 = 0, map_50 = 0;  // percent
  double f1 = 0;        // micro F1 at the best global operating point (IoU 0.5)
  double f1_macro = 0;  // per-class mean at the same operating point
  double f1_conf = 0;   // operating-point confidence threshold
  long tp = 0, fp = 0, fn = 0;
  std::vector<ClassAp> per_class;
  std::vector<SnrRow> per_snr;
};

/// Full report: mAP50:95 averages AP over IoU 0.50:0.05:0.95 and classes,
/// F1 picks the confidence maximizing global (micro) F1 at IoU 0.5, and
/// scenes are stratified by snr_db for the per-SNR rows.
EvalReport map_metrics(const std::vector<EvalScene>& scenes, int num_classes);

/// Micro F1 at a fixed confidence threshold (IoU 0.5).
double f1_at_confidence(const std::vector<EvalScene>& scenes, int num_classes,
                        double conf_thresh);

std::string report_table(const EvalReport& r);
std::string report_kv(const EvalReport& r);
std::string per_snr_csv(const EvalReport& r);

}  // namespace hifi::eval
