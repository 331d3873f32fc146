#pragma once

#include <cmath>

#include "hifi/detect.hpp"
#include "hifi/nn/nn.hpp"

namespace hifi::det {

/// Raw head outputs for one scale: reg is [A*5, H, W] with per-anchor
/// channels (tx,ty,tw,th,obj); cls is [A*nc, H, W].
template <typename T>
struct ScalePred {
  nn::Tensor<T> reg, cls;
};

struct LossWeights {
  double box = 0.05;
  double obj = 1.0;
  double cls = 0.5;
  // objectness balance across scales, finest first
  std::vector<double> scale_balance = {4.0, 1.0, 0.4};
  // Training uses detached CIoU objectness targets and a detached CIoU
  // alpha. Those stop-gradients make finite differences disagree with
  // reverse mode by construction, so gradient checking flips this on:
  // objectness targets become the constant positive mask and alpha stays
  // differentiable.
  bool exact_grad = false;
};

template <typename T>
struct LossOutput {
  nn::Tensor<T> total;           // scalar graph node
  double box = 0, obj = 0, cls = 0;  // unweighted component values for logs
};

namespace lossdetail {

template <typename T>
nn::Tensor<T> constant_map(int c, int h, int w, T fill) {
  return nn::Tensor<T>::filled({c, h, w}, fill);
}

/// Differentiable complete-IoU between the decoded map and constant targets.
/// Target maps must be finite everywhere (non-positive cells carry a dummy
/// unit box); alpha is detached as in the reference formulation.
template <typename T>
nn::Tensor<T> ciou_map(const nn::Tensor<T>& bx, const nn::Tensor<T>& by,
                       const nn::Tensor<T>& bw, const nn::Tensor<T>& bh,
                       const nn::Tensor<T>& tx, const nn::Tensor<T>& ty,
                       const nn::Tensor<T>& tw, const nn::Tensor<T>& th,
                       bool exact_grad) {
  using namespace hifi::nn;
  const T eps = T(1e-9);
  auto half = [](const Tensor<T>& v) { return mul_scalar(v, T(0.5)); };
  auto b1x1 = sub(bx, half(bw)), b1x2 = add(bx, half(bw));
  auto b1y1 = sub(by, half(bh)), b1y2 = add(by, half(bh));
  auto g1x1 = sub(tx, half(tw)), g1x2 = add(tx, half(tw));
  auto g1y1 = sub(ty, half(th)), g1y2 = add(ty, half(th));

  auto iw = clamp(sub(minimum(b1x2, g1x2), maximum(b1x1, g1x1)), T(0), T(1e9));
  auto ih = clamp(sub(minimum(b1y2, g1y2), maximum(b1y1, g1y1)), T(0), T(1e9));
  auto inter = mul(iw, ih);
  auto uni = add_scalar(sub(add(mul(bw, bh), mul(tw, th)), inter), eps);
  auto iou_v = div(inter, uni);

  auto cw = sub(maximum(b1x2, g1x2), minimum(b1x1, g1x1));
  auto ch = sub(maximum(b1y2, g1y2), minimum(b1y1, g1y1));
  auto c2 = add_scalar(add(square(cw), square(ch)), eps);
  auto rho2 = add(square(sub(bx, tx)), square(sub(by, ty)));

  auto ang = sub(atan_op(div(tw, add_scalar(th, eps))), atan_op(div(bw, add_scalar(bh, eps))));
  auto v = mul_scalar(square(ang), T(4.0 / (M_PI * M_PI)));
  auto alpha = div(v, add_scalar(sub(v, iou_v), T(1) + eps));
  if (!exact_grad) alpha = detach(alpha);
  return sub(iou_v, add(div(rho2, c2), mul(v, alpha)));
}

}  // namespace lossdetail

/// Composite detection loss: CIoU on positives + BCE objectness over all
/// cells + BCE classes on positives, weighted per LossWeights; the
/// objectness target at a positive cell is the detached CIoU clamped to
/// [0,1]. Throws DiagnosticError naming the first non-finite component.
template <typename T>
LossOutput<T> detection_loss(const std::vector<ScalePred<T>>& preds,
                             const Targets& targets,
                             const std::vector<std::vector<Anchor>>& anchors,
                             int num_classes, const LossWeights& weights = {}) {
  using namespace hifi::nn;
  if (preds.size() != targets.per_scale.size() || preds.size() != anchors.size())
    throw ShapeError("detection_loss: scale count mismatch");

  Tensor<T> box_acc, obj_acc, cls_acc;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& reg = preds[s].reg;
    const auto& cls = preds[s].cls;
    int a_count = static_cast<int>(anchors[s].size());
    int H = reg.dim(1), W = reg.dim(2);
    if (reg.dim(0) != a_count * 5) throw ShapeError("detection_loss: reg channels mismatch");
    if (cls.dim(0) != a_count * num_classes)
      throw ShapeError("detection_loss: cls channels mismatch");

    // cell-center offsets as constants
    auto gx = Tensor<T>::zeros({1, H, W});
    auto gy = Tensor<T>::zeros({1, H, W});
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        gx.data()[y * W + x] = static_cast<T>(x);
        gy.data()[y * W + x] = static_cast<T>(y);
      }

    // per-anchor target maps
    struct AnchorMaps {
      std::vector<T> mask, tx, ty, tw, th;
      std::vector<T> onehot;
      int npos = 0;
    };
    std::vector<AnchorMaps> maps(static_cast<std::size_t>(a_count));
    std::size_t plane = static_cast<std::size_t>(H) * W;
    for (auto& m : maps) {
      m.mask.assign(plane, T(0));
      m.tx.assign(plane, T(0.5));
      m.ty.assign(plane, T(0.5));
      m.tw.assign(plane, T(1));  // dummy unit box keeps the CIoU map finite
      m.th.assign(plane, T(1));
      m.onehot.assign(plane * static_cast<std::size_t>(num_classes), T(0));
    }
    for (const auto& pos : targets.per_scale[s]) {
      auto& m = maps[static_cast<std::size_t>(pos.anchor)];
      std::size_t at = static_cast<std::size_t>(pos.gy) * W + pos.gx;
      if (m.mask[at] == T(0)) ++m.npos;
      m.mask[at] = T(1);
      m.tx[at] = static_cast<T>(pos.box.cx);
      m.ty[at] = static_cast<T>(pos.box.cy);
      m.tw[at] = static_cast<T>(pos.box.w);
      m.th[at] = static_cast<T>(pos.box.h);
      for (int c = 0; c < num_classes; ++c)
        m.onehot[static_cast<std::size_t>(c) * plane + at] =
            (c == pos.class_idx) ? T(1) : T(0);
    }

    int npos_scale = 0;
    for (const auto& m : maps) npos_scale += m.npos;

    Tensor<T> scale_obj;
    for (int a = 0; a < a_count; ++a) {
      const auto& m = maps[static_cast<std::size_t>(a)];
      auto t_mask = Tensor<T>::from({1, H, W}, m.mask);
      auto t_cx = Tensor<T>::from({1, H, W}, m.tx);
      auto t_cy = Tensor<T>::from({1, H, W}, m.ty);
      auto t_w = Tensor<T>::from({1, H, W}, m.tw);
      auto t_h = Tensor<T>::from({1, H, W}, m.th);

      auto tx = slice_d0(reg, a * 5 + 0, a * 5 + 1);
      auto ty = slice_d0(reg, a * 5 + 1, a * 5 + 2);
      auto tw = slice_d0(reg, a * 5 + 2, a * 5 + 3);
      auto th = slice_d0(reg, a * 5 + 3, a * 5 + 4);
      auto tobj = slice_d0(reg, a * 5 + 4, a * 5 + 5);

      // decode against this anchor
      auto bx = mul_scalar(add(add_scalar(mul_scalar(sigmoid(tx), T(2)), T(-0.5)), gx),
                           T(1) / static_cast<T>(W));
      auto by = mul_scalar(add(add_scalar(mul_scalar(sigmoid(ty), T(2)), T(-0.5)), gy),
                           T(1) / static_cast<T>(H));
      auto sw = mul_scalar(sigmoid(tw), T(2));
      auto sh = mul_scalar(sigmoid(th), T(2));
      auto bw = mul_scalar(square(sw), static_cast<T>(anchors[s][static_cast<std::size_t>(a)].w));
      auto bh = mul_scalar(square(sh), static_cast<T>(anchors[s][static_cast<std::size_t>(a)].h));

      auto ciou = lossdetail::ciou_map(bx, by, bw, bh, t_cx, t_cy, t_w, t_h,
                                       weights.exact_grad);

      // objectness target: detached CIoU at positives, 0 elsewhere
      auto tobj_target = weights.exact_grad
                             ? t_mask
                             : mul(clamp(detach(ciou), T(0), T(1)), t_mask);
      auto obj_term = sum_all(bce_with_logits(tobj, tobj_target));
      scale_obj = scale_obj.defined() ? add(scale_obj, obj_term) : obj_term;

      if (m.npos > 0) {
        auto one = Tensor<T>::filled({1, H, W}, T(1));
        auto box_term = sum_all(mul(sub(one, ciou), t_mask));
        box_acc = box_acc.defined()
                      ? add(box_acc, mul_scalar(box_term, T(1) / static_cast<T>(npos_scale)))
                      : mul_scalar(box_term, T(1) / static_cast<T>(npos_scale));

        auto cls_slice = slice_d0(cls, a * num_classes, (a + 1) * num_classes);
        auto t_onehot = Tensor<T>::from({num_classes, H, W}, m.onehot);
        std::vector<T> mask_rep(plane * static_cast<std::size_t>(num_classes));
        for (int c = 0; c < num_classes; ++c)
          std::copy(m.mask.begin(), m.mask.end(),
                    mask_rep.begin() + static_cast<std::size_t>(c) * plane);
        auto t_mask_rep = Tensor<T>::from({num_classes, H, W}, std::move(mask_rep));
        auto cls_term = sum_all(mul(bce_with_logits(cls_slice, t_onehot), t_mask_rep));
        T denom = static_cast<T>(npos_scale) * static_cast<T>(num_classes);
        cls_acc = cls_acc.defined() ? add(cls_acc, mul_scalar(cls_term, T(1) / denom))
                                    : mul_scalar(cls_term, T(1) / denom);
      }
    }
    double balance = s < weights.scale_balance.size() ? weights.scale_balance[s]
                                                      : weights.scale_balance.back();
    T obj_norm = static_cast<T>(balance) /
                 (static_cast<T>(a_count) * static_cast<T>(H) * static_cast<T>(W));
    auto obj_scaled = mul_scalar(scale_obj, obj_norm);
    obj_acc = obj_acc.defined() ? add(obj_acc, obj_scaled) : obj_scaled;
  }

  using namespace hifi::nn;
  auto zero = Tensor<T>::zeros({1});
  if (!box_acc.defined()) box_acc = zero;
  if (!cls_acc.defined()) cls_acc = zero;
  if (!obj_acc.defined()) obj_acc = zero;

  LossOutput<T> out;
  out.box = static_cast<double>(box_acc.item());
  out.obj = static_cast<double>(obj_acc.item());
  out.cls = static_cast<double>(cls_acc.item());
  if (!std::isfinite(out.box)) throw DiagnosticError("detection_loss: non-finite box component");
  if (!std::isfinite(out.obj)) throw DiagnosticError("detection_loss: non-finite obj component");
  if (!std::isfinite(out.cls)) throw DiagnosticError("detection_loss: non-finite cls component");

  out.total = add(add(mul_scalar(box_acc, static_cast<T>(weights.box)),
                      mul_scalar(obj_acc, static_cast<T>(weights.obj))),
                  mul_scalar(cls_acc, static_cast<T>(weights.cls)));
  return out;
}

/// Sigmoid-decodes the per-cell predictions, keeps the best class per
/// anchor-cell with score = objectness * class probability above
/// conf_thresh, then applies greedy per-class NMS.
template <typename T>
std::vector<Detection> decode_predictions(const std::vector<ScalePred<T>>& preds,
                                          const std::vector<std::vector<Anchor>>& anchors,
                                          int num_classes, double conf_thresh,
                                          int max_candidates = 3000) {
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  std::vector<Detection> dets;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& reg = preds[s].reg;
    const auto& cls = preds[s].cls;
    int H = reg.dim(1), W = reg.dim(2);
    GridSpec grid{H, W};
    std::size_t plane = static_cast<std::size_t>(H) * W;
    int a_count = static_cast<int>(anchors[s].size());
    const T* rv = reg.data();
    const T* cv = cls.data();
    for (int a = 0; a < a_count; ++a)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          std::size_t at = static_cast<std::size_t>(y) * W + x;
          double obj = sig(rv[(a * 5 + 4) * plane + at]);
          if (obj < conf_thresh) continue;  // obj alone already bounds the score
          int best_c = 0;
          double best_p = -1;
          for (int c = 0; c < num_classes; ++c) {
            double p = sig(cv[(a * num_classes + c) * plane + at]);
            if (p > best_p) {
              best_p = p;
              best_c = c;
            }
          }
          double score = obj * best_p;
          if (score < conf_thresh) continue;
          Detection d;
          d.box = decode_box(rv[(a * 5 + 0) * plane + at], rv[(a * 5 + 1) * plane + at],
                             rv[(a * 5 + 2) * plane + at], rv[(a * 5 + 3) * plane + at],
                             anchors[s][static_cast<std::size_t>(a)], y, x, grid);
          d.class_id = best_c;
          d.score = score;
          dets.push_back(d);
        }
  }
  if (static_cast<int>(dets.size()) > max_candidates) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    dets.resize(static_cast<std::size_t>(max_candidates));
  }
  return dets;
}

template <typename T>
std::vector<Detection> decode_and_nms(const std::vector<ScalePred<T>>& preds,
                                      const std::vector<std::vector<Anchor>>& anchors,
                                      int num_classes, double conf_thresh, double iou_thresh,
                                      int max_det = 300) {
  if (conf_thresh <= 0 || conf_thresh >= 1 || iou_thresh <= 0 || iou_thresh >= 1)
    throw ConfigError("decode_and_nms: thresholds must lie in (0,1)");
  auto dets = decode_predictions(preds, anchors, num_classes, conf_thresh);
  auto kept = nms(std::move(dets), iou_thresh);
  if (static_cast<int>(kept.size()) > max_det) kept.resize(static_cast<std::size_t>(max_det));
  return kept;
}

}  // namespace hifi::det
