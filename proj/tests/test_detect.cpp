#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hifi/detect.hpp"
#include "hifi/detect_loss.hpp"

using namespace hifi;
using namespace hifi::det;

namespace {

// O(n^2) brute-force greedy NMS oracle (score desc, insertion order ties).
std::vector<Detection> nms_oracle(const std::vector<Detection>& dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t oi : order) {
    bool ok = true;
    for (const auto& k : kept)
      if (k.class_id == dets[oi].class_id && iou(k.box, dets[oi].box) >= iou_thresh) ok = false;
    if (ok) kept.push_back(dets[oi]);
  }
  return kept;
}

bool same_dets(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].class_id != b[i].class_id || a[i].score != b[i].score) return false;
    if (a[i].box.cx != b[i].box.cx || a[i].box.w != b[i].box.w) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("iou: identical, disjoint, and the 1/7 corner case") {
  Box a{0.3, 0.3, 0.2, 0.2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  Box b{0.8, 0.8, 0.1, 0.1};
  CHECK(iou(a, b) == 0.0);
  // corners (0,0)-(2,2) and (1,1)-(3,3): intersection 1, union 7
  Box c{1.0, 1.0, 2.0, 2.0};
  Box d{2.0, 2.0, 2.0, 2.0};
  CHECK(iou(c, d) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou is symmetric and self-iou is 1 (randomized)") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Box a{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    Box b{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-12));
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
  }
}

TEST_CASE("assignment: centered gt with one matching anchor gives exactly 3 positive cells") {
  // Enumeration oracle: self cell + one horizontal + one vertical neighbor.
  std::vector<std::vector<Anchor>> anchors = {{{0.2, 0.2}}};
  std::vector<GridSpec> grids = {{8, 8}};
  Box gt{(4.0 + 0.5) / 8.0, (4.0 + 0.5) / 8.0, 0.2, 0.2};  // center of cell (4,4)
  auto t = assign_targets({{0, gt}}, anchors, grids);
  REQUIRE(t.per_scale.size() == 1);
  CHECK(t.per_scale[0].size() == 3);
  // all cells distinct, all within one step of (4,4)
  for (const auto& p : t.per_scale[0]) {
    CHECK(std::abs(p.gx - 4) <= 1);
    CHECK(std::abs(p.gy - 4) <= 1);
    CHECK(p.box.cx == doctest::Approx(gt.cx));
  }
  CHECK(t.warning_count() == 0);
}

TEST_CASE("assignment: empty gt list gives all-negative targets") {
  std::vector<std::vector<Anchor>> anchors = {{{0.1, 0.1}}, {{0.3, 0.3}}};
  std::vector<GridSpec> grids = {{8, 8}, {4, 4}};
  auto t = assign_targets({}, anchors, grids);
  CHECK(t.per_scale[0].empty());
  CHECK(t.per_scale[1].empty());
}

TEST_CASE("assignment: gt larger than 4x every anchor yields no positives and a warning") {
  std::vector<std::vector<Anchor>> anchors = {{{0.05, 0.05}}};
  std::vector<GridSpec> grids = {{8, 8}};
  Box gt{0.5, 0.5, 0.5, 0.5};  // ratio 10 > 4
  auto t = assign_targets({{0, gt}}, anchors, grids);
  CHECK(t.per_scale[0].empty());
  CHECK(t.skipped_unmatched == 1);
}

TEST_CASE("assignment: degenerate gt is skipped with a warning") {
  std::vector<std::vector<Anchor>> anchors = {{{0.1, 0.1}}};
  std::vector<GridSpec> grids = {{8, 8}};
  auto t = assign_targets({{0, Box{0.5, 0.5, 0.0, 0.1}}}, anchors, grids);
  CHECK(t.per_scale[0].empty());
  CHECK(t.skipped_degenerate == 1);
}

TEST_CASE("decode(encode(gt)) round-trips within 1e-5 for matching anchors") {
  Rng rng(17);
  GridSpec grid{16, 16};
  for (int i = 0; i < 200; ++i) {
    Anchor a{rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    // box with shape ratio < 4 to the anchor
    Box gt;
    gt.w = a.w * rng.uniform(0.3, 3.5);
    gt.h = a.h * rng.uniform(0.3, 3.5);
    gt.cx = rng.uniform(0.1, 0.9);
    gt.cy = rng.uniform(0.1, 0.9);
    int gx = std::min(static_cast<int>(gt.cx * grid.w), grid.w - 1);
    int gy = std::min(static_cast<int>(gt.cy * grid.h), grid.h - 1);
    auto t = encode_box(gt, a, gy, gx, grid);
    Box back = decode_box(t[0], t[1], t[2], t[3], a, gy, gx, grid);
    CHECK(back.cx == doctest::Approx(gt.cx).epsilon(1e-5));
    CHECK(back.cy == doctest::Approx(gt.cy).epsilon(1e-5));
    CHECK(back.w == doctest::Approx(gt.w).epsilon(1e-5));
    CHECK(back.h == doctest::Approx(gt.h).epsilon(1e-5));
  }
}

TEST_CASE("NMS: duplicate same-class boxes collapse to the higher score") {
  Box b{0.5, 0.5, 0.2, 0.2};
  std::vector<Detection> dets = {{b, 0, 0.9}, {b, 0, 0.8}};
  auto kept = nms(dets, 0.45);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("NMS: identical boxes of different classes both survive") {
  Box b{0.5, 0.5, 0.2, 0.2};
  std::vector<Detection> dets = {{b, 0, 0.9}, {b, 1, 0.8}};
  auto kept = nms(dets, 0.45);
  CHECK(kept.size() == 2);
}

TEST_CASE("NMS matches the O(n^2) oracle exactly on 200 random 50-box sets") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 50; ++i) {
      Detection d;
      d.box = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.3),
               rng.uniform(0.05, 0.3)};
      d.class_id = static_cast<int>(rng.uniform_int(0, 2));
      d.score = rng.uniform(0.01, 1.0);
      dets.push_back(d);
    }
    auto ours = nms(dets, 0.45);
    auto want = nms_oracle(dets, 0.45);
    CHECK(same_dets(ours, want));
    // output is a subset with pairwise same-class IoU below threshold
    for (std::size_t i = 0; i < ours.size(); ++i)
      for (std::size_t j = i + 1; j < ours.size(); ++j)
        if (ours[i].class_id == ours[j].class_id)
          CHECK(iou(ours[i].box, ours[j].box) < 0.45);
  }
}

TEST_CASE("anchor fitting covers the box population") {
  Rng rng(5);
  std::vector<Box> boxes;
  for (int i = 0; i < 200; ++i)
    boxes.push_back({0.5, 0.5, rng.log_uniform(0.05, 0.9), rng.log_uniform(0.05, 0.3)});
  auto anchors = fit_anchors(boxes, 9, 1);
  REQUIRE(anchors.size() == 9);
  // sorted by area, all positive
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    CHECK(anchors[i].w * anchors[i].h >= anchors[i - 1].w * anchors[i - 1].h);
    CHECK(anchors[i].w > 0);
  }
  // most boxes find an anchor within the ratio gate
  int matched = 0;
  for (const auto& b : boxes) {
    for (const auto& a : anchors) {
      double rw = b.w / a.w, rh = b.h / a.h;
      if (std::max({rw, 1 / rw, rh, 1 / rh}) < 4.0) {
        ++matched;
        break;
      }
    }
  }
  CHECK(matched >= 190);
}

TEST_CASE("detection_loss: perfect logit-saturated predictions give near-zero loss") {
  std::vector<std::vector<Anchor>> anchors = {{{0.25, 0.25}}};
  std::vector<GridSpec> grids = {{4, 4}};
  Box gt{0.55, 0.55, 0.3, 0.2};
  auto targets = assign_targets({{0, gt}}, anchors, grids);
  REQUIRE_FALSE(targets.per_scale[0].empty());

  int nc = 3;
  auto reg = nn::Tensor64::filled({5, 4, 4}, 0.0, true);
  auto cls = nn::Tensor64::filled({static_cast<int>(nc), 4, 4}, -12.0, true);
  // negatives: strongly off objectness
  for (int p = 0; p < 16; ++p) reg.data()[4 * 16 + p] = -12.0;
  for (const auto& pos : targets.per_scale[0]) {
    auto t = encode_box(pos.box, anchors[0][0], pos.gy, pos.gx, grids[0]);
    std::size_t at = static_cast<std::size_t>(pos.gy) * 4 + pos.gx;
    reg.data()[0 * 16 + at] = t[0];
    reg.data()[1 * 16 + at] = t[1];
    reg.data()[2 * 16 + at] = t[2];
    reg.data()[3 * 16 + at] = t[3];
    reg.data()[4 * 16 + at] = 12.0;  // objectness saturated on
    cls.data()[static_cast<std::size_t>(pos.class_idx) * 16 + at] = 12.0;
  }
  std::vector<ScalePred<double>> preds = {{reg, cls}};
  auto loss = detection_loss(preds, targets, anchors, nc);
  CHECK(loss.total.item() < 1e-3);
}

TEST_CASE("detection_loss: zero logits on an empty scene give obj = log(2) per cell") {
  std::vector<std::vector<Anchor>> anchors = {{{0.2, 0.2}}};
  std::vector<GridSpec> grids = {{4, 4}};
  auto targets = assign_targets({}, anchors, grids);
  auto reg = nn::Tensor64::zeros({5, 4, 4}, true);
  auto cls = nn::Tensor64::zeros({2, 4, 4}, true);
  std::vector<ScalePred<double>> preds = {{reg, cls}};
  LossWeights w;
  w.scale_balance = {1.0};  // isolate the per-cell BCE mean
  auto loss = detection_loss(preds, targets, anchors, 2, w);
  CHECK(loss.obj == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(loss.box == 0.0);
  CHECK(loss.cls == 0.0);
  // default balance scales the finest level by 4
  auto loss4 = detection_loss(preds, targets, anchors, 2);
  CHECK(loss4.obj == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("detection_loss gradcheck against finite differences") {
  std::vector<std::vector<Anchor>> anchors = {{{0.3, 0.3}, {0.15, 0.2}}};
  std::vector<GridSpec> grids = {{4, 4}};
  Rng rng(7);
  auto targets = assign_targets(
      {{1, Box{0.4, 0.6, 0.25, 0.3}}, {0, Box{0.7, 0.3, 0.12, 0.18}}}, anchors, grids);
  auto reg = nn::Tensor64::zeros({10, 4, 4}, true);
  auto cls = nn::Tensor64::zeros({2 * 2, 4, 4}, true);
  for (auto& v : reg.values()) v = rng.uniform(-1.5, 1.5);
  for (auto& v : cls.values()) v = rng.uniform(-1.5, 1.5);
  LossWeights w;
  w.exact_grad = true;
  auto res = nn::grad_check(
      [&](std::vector<nn::Tensor64>& in) {
        std::vector<ScalePred<double>> preds = {{in[0], in[1]}};
        return detection_loss(preds, targets, anchors, 2, w).total;
      },
      {reg, cls}, 1e-4);
  CAPTURE(res.worst);
  CHECK(res.pass);
}

TEST_CASE("detections file round trip") {
  std::vector<Detection> dets = {{{0.5, 0.5, 0.2, 0.1}, 3, 0.75}};
  write_detections("det_test.txt", dets);
  auto back = read_detections("det_test.txt");
  REQUIRE(back.size() == 1);
  CHECK(back[0].class_id == 3);
  CHECK(back[0].score == doctest::Approx(0.75));
  std::remove("det_test.txt");
}
