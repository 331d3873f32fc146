#pragma once

#include "hifi/nn/ops.hpp"

namespace hifi::nn {

/// 2-D cross-correlation. x: [Ci,H,W], w: [Co,Ci,k,k], b: [Co] (pass an
/// undefined tensor for no bias). Odd k, stride 1 or 2.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
  if (x.rank() != 3 || w.rank() != 4) throw ShapeError("conv2d: expected CHW input, OIkk kernel");
  int Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  int Co = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Ci)
    throw ShapeError("conv2d: channel mismatch, input " + x.shape_str() + " kernel " +
                     w.shape_str());
  if (w.dim(3) != k || k % 2 == 0) throw ConfigError("conv2d: kernel must be square and odd");
  if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != Co))
    throw ShapeError("conv2d: bias shape mismatch");
  int Ho = (H + 2 * pad - k) / stride + 1;
  int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

  // Valid output ranges per kernel tap, so inner loops run branch-free.
  // Captures by value: this closure is retained by the backward pass.
  auto tap_range = [pad, stride](int kk, int in_dim, int out_dim, int& lo, int& hi) {
    int off = kk - pad;  // in = out*stride + off
    lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    hi = std::min(out_dim - 1, (in_dim - 1 - off) / stride);
  };

  std::vector<Tensor<T>> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);

  return make_op_result<T>(
      {Co, Ho, Wo}, inputs,
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        const T* wv = w.data();
        for (int co = 0; co < Co; ++co) {
          T* oplane = out.value.data() + static_cast<std::size_t>(co) * Ho * Wo;
          for (int ci = 0; ci < Ci; ++ci) {
            const T* iplane = xv + static_cast<std::size_t>(ci) * H * W;
            for (int ky = 0; ky < k; ++ky) {
              int ylo, yhi;
              tap_range(ky, H, Ho, ylo, yhi);
              for (int kx = 0; kx < k; ++kx) {
                int xlo, xhi;
                tap_range(kx, W, Wo, xlo, xhi);
                T wt = wv[((static_cast<std::size_t>(co) * Ci + ci) * k + ky) * k + kx];
                for (int oy = ylo; oy <= yhi; ++oy) {
                  int iy = oy * stride + ky - pad;
                  const T* irow = iplane + static_cast<std::size_t>(iy) * W;
                  T* orow = oplane + static_cast<std::size_t>(oy) * Wo;
                  int ibase = kx - pad;
                  for (int ox = xlo; ox <= xhi; ++ox)
                    orow[ox] += wt * irow[ox * stride + ibase];
                }
              }
            }
          }
          if (b.defined()) {
            T bv = b.data()[co];
            for (int p = 0; p < Ho * Wo; ++p) oplane[p] += bv;
          }
        }
      },
      [xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr, Ci, H, W, Co, k,
       Ho, Wo, stride, pad, tap_range](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [=]() {
          const T* g = o->grad.data();
          if (xn->requires_grad) xn->ensure_grad();
          if (wn->requires_grad) wn->ensure_grad();
          for (int co = 0; co < Co; ++co) {
            const T* gplane = g + static_cast<std::size_t>(co) * Ho * Wo;
            for (int ci = 0; ci < Ci; ++ci) {
              const T* iplane = xn->value.data() + static_cast<std::size_t>(ci) * H * W;
              T* giplane =
                  xn->requires_grad ? xn->grad.data() + static_cast<std::size_t>(ci) * H * W
                                    : nullptr;
              for (int ky = 0; ky < k; ++ky) {
                int ylo, yhi;
                tap_range(ky, H, Ho, ylo, yhi);
                for (int kx = 0; kx < k; ++kx) {
                  int xlo, xhi;
                  tap_range(kx, W, Wo, xlo, xhi);
                  std::size_t widx =
                      ((static_cast<std::size_t>(co) * Ci + ci) * k + ky) * k + kx;
                  T wt = wn->value[widx];
                  T wacc = T(0);
                  for (int oy = ylo; oy <= yhi; ++oy) {
                    int iy = oy * stride + ky - pad;
                    const T* grow = gplane + static_cast<std::size_t>(oy) * Wo;
                    const T* irow = iplane + static_cast<std::size_t>(iy) * W;
                    int ibase = kx - pad;
                    if (giplane) {
                      T* girow = giplane + static_cast<std::size_t>(iy) * W;
                      for (int ox = xlo; ox <= xhi; ++ox)
                        girow[ox * stride + ibase] += wt * grow[ox];
                    }
                    if (wn->requires_grad) {
                      for (int ox = xlo; ox <= xhi; ++ox)
                        wacc += irow[ox * stride + ibase] * grow[ox];
                    }
                  }
                  if (wn->requires_grad) wn->grad[widx] += wacc;
                }
              }
            }
            if (bn && bn->requires_grad) {
              bn->ensure_grad();
              T acc = T(0);
              for (int p = 0; p < Ho * Wo; ++p) acc += gplane[p];
              bn->grad[co] += acc;
            }
          }
        };
      });
}

/// Max pooling with square window k, stride k. Ties pick the first element
/// in scan order so backward is deterministic.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k) {
  if (x.rank() != 3) throw ShapeError("maxpool2d: expected CHW");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % k != 0 || W % k != 0) throw ShapeError("maxpool2d: dims not divisible by window");
  int Ho = H / k, Wo = W / k;
  auto argmax = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(C) * Ho * Wo);
  return make_op_result<T>(
      {C, Ho, Wo}, {x},
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        for (int c = 0; c < C; ++c)
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              T best = xv[(static_cast<std::size_t>(c) * H + oy * k) * W + ox * k];
              int besti = (oy * k) * W + ox * k;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                  int idx = (oy * k + dy) * W + ox * k + dx;
                  T v = xv[static_cast<std::size_t>(c) * H * W + idx];
                  if (v > best) {
                    best = v;
                    besti = idx;
                  }
                }
              std::size_t op = (static_cast<std::size_t>(c) * Ho + oy) * Wo + ox;
              out.value[op] = best;
              (*argmax)[op] = besti;
            }
      },
      [xn = x.node(), argmax, C, H, W, Ho, Wo](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, argmax, o, C, H, W, Ho, Wo]() {
          xn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int p = 0; p < Ho * Wo; ++p) {
              std::size_t op = static_cast<std::size_t>(c) * Ho * Wo + p;
              xn->grad[static_cast<std::size_t>(c) * H * W + (*argmax)[op]] += o->grad[op];
            }
        };
      });
}

/// Average pooling with square window k, stride k.
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, int k) {
  if (x.rank() != 3) throw ShapeError("avgpool2d: expected CHW");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % k != 0 || W % k != 0) throw ShapeError("avgpool2d: dims not divisible by window");
  int Ho = H / k, Wo = W / k;
  T inv = T(1) / static_cast<T>(k * k);
  return make_op_result<T>(
      {C, Ho, Wo}, {x},
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        for (int c = 0; c < C; ++c)
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              T acc = T(0);
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  acc += xv[(static_cast<std::size_t>(c) * H + oy * k + dy) * W + ox * k + dx];
              out.value[(static_cast<std::size_t>(c) * Ho + oy) * Wo + ox] = acc * inv;
            }
      },
      [xn = x.node(), C, H, W, Ho, Wo, k, inv](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, C, H, W, Ho, Wo, k, inv]() {
          xn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy)
              for (int ox = 0; ox < Wo; ++ox) {
                T g = o->grad[(static_cast<std::size_t>(c) * Ho + oy) * Wo + ox] * inv;
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx)
                    xn->grad[(static_cast<std::size_t>(c) * H + oy * k + dy) * W + ox * k +
                             dx] += g;
              }
        };
      });
}

}  // namespace hifi::nn
