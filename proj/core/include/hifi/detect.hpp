#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hifi/common.hpp"

namespace hifi::det {

/// Axis-aligned box, center-size form, normalized image coordinates.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
};

double iou(const Box& a, const Box& b);

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0;
};

/// Prior box shape (normalized width/height).
struct Anchor {
  double w = 0, h = 0;
};

/// k-means over (w,h) with 1-IoU distance (boxes compared at a common
/// center). Returns `count` anchors sorted by area. Falls back to a fixed
/// spread when there are fewer boxes than clusters.
std::vector<Anchor> fit_anchors(const std::vector<Box>& boxes, int count, std::uint64_t seed);

/// Fixed log-spaced anchor ladder used before any dataset statistics exist.
std::vector<Anchor> default_anchors(int count);

struct GridSpec {
  int h = 0, w = 0;
};

/// One positive assignment: anchor a at cell (gy,gx) regresses `box`.
struct Positive {
  int anchor = 0;
  int gy = 0, gx = 0;
  Box box;
  int class_idx = 0;
};

struct Targets {
  std::vector<std::vector<Positive>> per_scale;
  int skipped_degenerate = 0;  // gt with non-positive size
  int skipped_unmatched = 0;   // gt that passed no anchor ratio gate
  int warning_count() const { return skipped_degenerate + skipped_unmatched; }
};

/// YOLOv5-style assignment: each gt matches anchors with max shape ratio
/// < ratio_gate at its own cell plus the two nearest neighbor cells
/// (horizontal and vertical, by the fractional cell offset).
Targets assign_targets(const std::vector<std::pair<int, Box>>& gt,
                       const std::vector<std::vector<Anchor>>& anchors,
                       const std::vector<GridSpec>& grids, double ratio_gate = 4.0);

/// Inverse of the cell decode for a gt assigned to (anchor, cell): returns
/// the (tx,ty,tw,th) logits that decode back to the gt box.
std::array<double, 4> encode_box(const Box& gt, const Anchor& anchor, int gy, int gx,
                                 const GridSpec& grid);
Box decode_box(double tx, double ty, double tw, double th, const Anchor& anchor, int gy,
               int gx, const GridSpec& grid);

/// Greedy per-class NMS. Candidates are ranked by score descending with
/// insertion order breaking ties, so results are deterministic.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

/// Detections export/import, one line per detection:
/// `class_id score cx cy w h`.
void write_detections(const std::string& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::string& path);

}  // namespace hifi::det
