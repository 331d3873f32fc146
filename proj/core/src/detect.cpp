#include "hifi/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hifi::det {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

double iou_wh(double w1, double h1, double w2, double h2) {
  double inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

}  // namespace

double iou(const Box& a, const Box& b) {
  double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
  double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
  double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  double inter = iw * ih;
  double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

std::vector<Anchor> default_anchors(int count) {
  // log-spaced square ladder between 0.06 and 0.5 of the image
  std::vector<Anchor> out;
  for (int i = 0; i < count; ++i) {
    double f = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
    double s = 0.06 * std::pow(0.5 / 0.06, f);
    out.push_back({s, s});
  }
  return out;
}

std::vector<Anchor> fit_anchors(const std::vector<Box>& boxes, int count, std::uint64_t seed) {
  if (static_cast<int>(boxes.size()) < count) return default_anchors(count);
  Rng rng(seed);
  // init with random distinct boxes
  std::vector<Anchor> centers;
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::size_t pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(boxes.size()) - 1));
    centers.push_back({std::max(1e-4, boxes[pick].w), std::max(1e-4, boxes[pick].h)});
  }
  std::vector<int> assign(boxes.size(), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      int best = 0;
      double best_d = 2.0;
      for (int c = 0; c < count; ++c) {
        double d = 1.0 - iou_wh(boxes[i].w, boxes[i].h, centers[static_cast<std::size_t>(c)].w,
                                centers[static_cast<std::size_t>(c)].h);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    for (int c = 0; c < count; ++c) {
      double sw = 0, sh = 0;
      int n = 0;
      for (std::size_t i = 0; i < boxes.size(); ++i)
        if (assign[i] == c) {
          sw += boxes[i].w;
          sh += boxes[i].h;
          ++n;
        }
      if (n > 0) centers[static_cast<std::size_t>(c)] = {sw / n, sh / n};
    }
    if (!changed && iter > 0) break;
  }
  std::sort(centers.begin(), centers.end(),
            [](const Anchor& a, const Anchor& b) { return a.w * a.h < b.w * b.h; });
  return centers;
}

Targets assign_targets(const std::vector<std::pair<int, Box>>& gt,
                       const std::vector<std::vector<Anchor>>& anchors,
                       const std::vector<GridSpec>& grids, double ratio_gate) {
  if (anchors.size() != grids.size())
    throw ShapeError("assign_targets: anchors/grids scale count mismatch");
  Targets t;
  t.per_scale.resize(grids.size());
  for (const auto& [cls, box] : gt) {
    if (box.w <= 1e-6 || box.h <= 1e-6) {
      ++t.skipped_degenerate;
      continue;
    }
    bool matched_any = false;
    for (std::size_t s = 0; s < grids.size(); ++s) {
      const auto& grid = grids[s];
      double gx = box.cx * grid.w;
      double gy = box.cy * grid.h;
      int cx = std::min(static_cast<int>(gx), grid.w - 1);
      int cy = std::min(static_cast<int>(gy), grid.h - 1);
      // the two nearest neighbor cells, by fractional offset (ties go right/down)
      int nx = (gx - cx >= 0.5) ? cx + 1 : cx - 1;
      int ny = (gy - cy >= 0.5) ? cy + 1 : cy - 1;
      for (std::size_t a = 0; a < anchors[s].size(); ++a) {
        const Anchor& an = anchors[s][a];
        double rw = box.w / an.w;
        double rh = box.h / an.h;
        double ratio = std::max({rw, 1.0 / rw, rh, 1.0 / rh});
        if (ratio >= ratio_gate) continue;
        matched_any = true;
        auto push = [&](int py, int px) {
          if (px < 0 || px >= grid.w || py < 0 || py >= grid.h) return;
          t.per_scale[s].push_back(
              {static_cast<int>(a), py, px, box, cls});
        };
        push(cy, cx);
        push(cy, nx);
        push(ny, cx);
      }
    }
    if (!matched_any) ++t.skipped_unmatched;
  }
  return t;
}

std::array<double, 4> encode_box(const Box& gt, const Anchor& anchor, int gy, int gx,
                                 const GridSpec& grid) {
  double ox = gt.cx * grid.w - gx;  // in [-0.5, 1.5] for assigned cells
  double oy = gt.cy * grid.h - gy;
  double px = (ox + 0.5) / 2.0;
  double py = (oy + 0.5) / 2.0;
  double pw = std::sqrt(gt.w / anchor.w) / 2.0;
  double ph = std::sqrt(gt.h / anchor.h) / 2.0;
  auto safe = [](double p) { return std::min(1.0 - 1e-7, std::max(1e-7, p)); };
  return {logit(safe(px)), logit(safe(py)), logit(safe(pw)), logit(safe(ph))};
}

Box decode_box(double tx, double ty, double tw, double th, const Anchor& anchor, int gy,
               int gx, const GridSpec& grid) {
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  Box b;
  b.cx = (2.0 * sig(tx) - 0.5 + gx) / grid.w;
  b.cy = (2.0 * sig(ty) - 0.5 + gy) / grid.h;
  double sw = 2.0 * sig(tw);
  double sh = 2.0 * sig(th);
  b.w = anchor.w * sw * sw;
  b.h = anchor.h * sh * sh;
  return b;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t oi : order) {
    const Detection& cand = dets[oi];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id != cand.class_id) continue;
      if (iou(k.box, cand.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

void write_detections(const std::string& path, const std::vector<Detection>& dets) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& d : dets)
    os << d.class_id << " " << d.score << " " << d.box.cx << " " << d.box.cy << " " << d.box.w
       << " " << d.box.h << "\n";
  write_file_text(path, os.str());
}

std::vector<Detection> read_detections(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::vector<Detection> dets;
  Detection d;
  while (in >> d.class_id >> d.score >> d.box.cx >> d.box.cy >> d.box.w >> d.box.h)
    dets.push_back(d);
  return dets;
}

}  // namespace hifi::det
