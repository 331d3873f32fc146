#include "hifi/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace hifi::eval {

namespace {

constexpr int kApPoints = 101;

/// Greedy matching at one IoU threshold; returns per-detection TP flags in
/// score order plus the matched-det scores, for PR and F1 sweeps.
struct MatchResult {
  // (score, is_tp) sorted by score descending (ties: input order)
  std::vector<std::pair<double, bool>> ranked;
  int n_gt = 0;
};

MatchResult greedy_match(std::vector<ScoredDet> dets, const std::vector<GtRef>& gts,
                         double iou_thresh) {
  MatchResult res;
  res.n_gt = static_cast<int>(gts.size());
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<bool> gt_used(gts.size(), false);
  res.ranked.reserve(dets.size());
  for (std::size_t oi : order) {
    const auto& d = dets[oi];
    int best_gt = -1;
    double best_iou = iou_thresh;  // must reach the threshold
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].scene != d.scene) continue;
      double v = det::iou(d.box, gts[g].box);
      if (v >= best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      gt_used[static_cast<std::size_t>(best_gt)] = true;
      res.ranked.emplace_back(d.score, true);
    } else {
      res.ranked.emplace_back(d.score, false);
    }
  }
  return res;
}

double ap_from_ranked(const MatchResult& m) {
  if (m.n_gt == 0 && m.ranked.empty()) return std::nan("");
  if (m.n_gt == 0) return 0.0;
  // PR points along the ranking
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : m.ranked) {
    (void)score;
    is_tp ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / m.n_gt);
  }
  // precision envelope from the right
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)], precision[static_cast<std::size_t>(i) + 1]);
  // 101-point interpolation
  double acc = 0;
  std::size_t idx = 0;
  for (int p = 0; p < kApPoints; ++p) {
    double r = static_cast<double>(p) / (kApPoints - 1);
    while (idx < recall.size() && recall[idx] < r - 1e-12) ++idx;
    if (idx < recall.size()) acc += precision[idx];
  }
  return acc / kApPoints;
}

struct SubsetMetrics {
  double map_50_95 = 0, map_50 = 0;
  double f1 = 0, f1_macro = 0, f1_conf = 0;
  long tp = 0, fp = 0, fn = 0;
  std::vector<ClassAp> per_class;
};

/// Collects per-class det/gt views for a scene subset.
struct ClassViews {
  std::vector<std::vector<ScoredDet>> dets;
  std::vector<std::vector<GtRef>> gts;
};

ClassViews build_views(const std::vector<EvalScene>& scenes, int num_classes) {
  ClassViews v;
  v.dets.resize(static_cast<std::size_t>(num_classes));
  v.gts.resize(static_cast<std::size_t>(num_classes));
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (const auto& d : scenes[si].dets) {
      if (d.class_id < 0 || d.class_id >= num_classes) continue;
      v.dets[static_cast<std::size_t>(d.class_id)].push_back(
          {static_cast<int>(si), d.score, d.box});
    }
    for (const auto& [cls, box] : scenes[si].gts) {
      if (cls < 0 || cls >= num_classes) continue;
      v.gts[static_cast<std::size_t>(cls)].push_back({static_cast<int>(si), box});
    }
  }
  return v;
}

SubsetMetrics compute_subset(const std::vector<EvalScene>& scenes, int num_classes) {
  SubsetMetrics out;
  auto views = build_views(scenes, num_classes);

  // AP per class per IoU threshold
  int n_valid = 0;
  double sum50 = 0, sum5095 = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto& cd = views.dets[static_cast<std::size_t>(c)];
    const auto& cg = views.gts[static_cast<std::size_t>(c)];
    if (cd.empty() && cg.empty()) continue;  // AP undefined, excluded
    double acc = 0;
    double ap50 = 0;
    for (int t = 0; t < 10; ++t) {
      double thresh = 0.5 + 0.05 * t;
      double ap = average_precision(cd, cg, thresh);
      if (std::isnan(ap)) ap = 0.0;
      acc += ap;
      if (t == 0) ap50 = ap;
    }
    acc /= 10.0;
    ++n_valid;
    sum50 += ap50;
    sum5095 += acc;
    out.per_class.push_back({c, ap50 * 100.0, acc * 100.0, static_cast<int>(cg.size())});
  }
  if (n_valid > 0) {
    out.map_50 = sum50 / n_valid * 100.0;
    out.map_50_95 = sum5095 / n_valid * 100.0;
  }

  // F1 sweep at IoU 0.5: per-class greedy matching, merged score list
  struct Entry {
    double score;
    bool tp;
    int cls;
  };
  std::vector<Entry> merged;
  long total_gt = 0;
  std::vector<long> gt_per_class(static_cast<std::size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) {
    auto m = greedy_match(views.dets[static_cast<std::size_t>(c)],
                          views.gts[static_cast<std::size_t>(c)], 0.5);
    total_gt += m.n_gt;
    gt_per_class[static_cast<std::size_t>(c)] = m.n_gt;
    for (const auto& [score, is_tp] : m.ranked) merged.push_back({score, is_tp, c});
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });

  auto micro_f1 = [&](long tp, long fp, long fn) {
    double denom = 2.0 * tp + fp + fn;
    return denom > 0 ? 2.0 * tp / denom : 0.0;
  };

  double best_f1 = 0, best_conf = 1.0;
  long best_tp = 0, best_fp = 0, best_fn = total_gt;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    merged[i].tp ? ++tp : ++fp;
    // evaluate at thresholds equal to each distinct score
    if (i + 1 < merged.size() && merged[i + 1].score == merged[i].score) continue;
    double f1v = micro_f1(tp, fp, total_gt - tp);
    if (f1v > best_f1) {
      best_f1 = f1v;
      best_conf = merged[i].score;
      best_tp = tp;
      best_fp = fp;
      best_fn = total_gt - tp;
    }
  }
  out.f1 = best_f1;
  out.f1_conf = best_conf;
  out.tp = best_tp;
  out.fp = best_fp;
  out.fn = best_fn;

  // macro F1 at the chosen operating point
  if (num_classes > 0) {
    double acc = 0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
      long ctp = 0, cfp = 0;
      for (const auto& e : merged)
        if (e.cls == c && e.score >= best_conf) e.tp ? ++ctp : ++cfp;
      long cgt = gt_per_class[static_cast<std::size_t>(c)];
      if (cgt == 0 && ctp + cfp == 0) continue;
      acc += micro_f1(ctp, cfp, cgt - ctp);
      ++counted;
    }
    out.f1_macro = counted > 0 ? acc / counted : 0.0;
  }
  return out;
}

}  // namespace

double average_precision(std::vector<ScoredDet> dets, const std::vector<GtRef>& gts,
                         double iou_thresh) {
  return ap_from_ranked(greedy_match(std::move(dets), gts, iou_thresh));
}

double f1_at_confidence(const std::vector<EvalScene>& scenes, int num_classes,
                        double conf_thresh) {
  auto views = build_views(scenes, num_classes);
  long tp = 0, fp = 0, total_gt = 0;
  for (int c = 0; c < num_classes; ++c) {
    auto cd = views.dets[static_cast<std::size_t>(c)];
    cd.erase(std::remove_if(cd.begin(), cd.end(),
                            [&](const ScoredDet& d) { return d.score < conf_thresh; }),
             cd.end());
    auto m = greedy_match(cd, views.gts[static_cast<std::size_t>(c)], 0.5);
    total_gt += m.n_gt;
    for (const auto& [score, is_tp] : m.ranked) {
      (void)score;
      is_tp ? ++tp : ++fp;
    }
  }
  double denom = 2.0 * tp + fp + (total_gt - tp);
  return denom > 0 ? 2.0 * tp / denom : 0.0;
}

EvalReport map_metrics(const std::vector<EvalScene>& scenes, int num_classes) {
  EvalReport rep;
  auto all = compute_subset(scenes, num_classes);
  rep.map_50_95 = all.map_50_95;
  rep.map_50 = all.map_50;
  rep.f1 = all.f1;
  rep.f1_macro = all.f1_macro;
  rep.f1_conf = all.f1_conf;
  rep.tp = all.tp;
  rep.fp = all.fp;
  rep.fn = all.fn;
  rep.per_class = all.per_class;

  // SNR strata (keyed on 0.01 dB resolution)
  std::map<long, std::vector<EvalScene>> strata;
  for (const auto& s : scenes)
    strata[static_cast<long>(std::llround(s.snr_db * 100))].push_back(s);
  if (strata.size() > 1) {
    for (const auto& [key, subset] : strata) {
      auto m = compute_subset(subset, num_classes);
      rep.per_snr.push_back({key / 100.0, m.map_50_95, m.map_50, m.f1,
                             static_cast<int>(subset.size())});
    }
  }
  return rep;
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os.precision(4);
  os << "metric          value\n";
  os << "mAP50:95 (%)    " << r.map_50_95 << "\n";
  os << "mAP50 (%)       " << r.map_50 << "\n";
  os << "F1 (micro)      " << r.f1 << "  @conf=" << r.f1_conf << "\n";
  os << "F1 (macro)      " << r.f1_macro << "\n";
  os << "TP/FP/FN        " << r.tp << "/" << r.fp << "/" << r.fn << "\n";
  if (!r.per_class.empty()) {
    os << "\nclass  AP50(%)  AP50:95(%)  n_gt\n";
    for (const auto& c : r.per_class)
      os << c.class_id << "      " << c.ap_50 << "   " << c.ap_50_95 << "   " << c.n_gt
         << "\n";
  }
  if (!r.per_snr.empty()) {
    os << "\nsnr_db  mAP50(%)  mAP50:95(%)  F1  scenes\n";
    for (const auto& s : r.per_snr)
      os << s.snr_db << "   " << s.map_50 << "   " << s.map_50_95 << "   " << s.f1 << "   "
         << s.n_scenes << "\n";
  }
  return os.str();
}

std::string report_kv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "map_50_95=" << r.map_50_95 << "\n";
  os << "map_50=" << r.map_50 << "\n";
  os << "f1=" << r.f1 << "\n";
  os << "f1_macro=" << r.f1_macro << "\n";
  os << "f1_conf=" << r.f1_conf << "\n";
  os << "tp=" << r.tp << "\nfp=" << r.fp << "\nfn=" << r.fn << "\n";
  for (const auto& c : r.per_class)
    os << "ap50_class_" << c.class_id << "=" << c.ap_50 << "\n";
  return os.str();
}

std::string per_snr_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "snr_db,map_50,map_50_95,f1,n_scenes\n";
  for (const auto& s : r.per_snr)
    os << s.snr_db << "," << s.map_50 << "," << s.map_50_95 << "," << s.f1 << ","
       << s.n_scenes << "\n";
  return os.str();
}

}  // namespace hifi::eval
