#pragma once

#include "hifi/nn/ops.hpp"

namespace hifi::nn {

/// Canonical sampling grid for scale-factor resizing, normalized to [-1,1]
/// (align-corners-false). Output pixel (oy,ox) maps to input position
/// u = (ox+0.5)*W_in/W_out - 0.5. Layout [Ho,Wo,2], pairs (gx, gy).
/// Both bilinear resize and the content-adaptive resampler build their grids
/// here, which is what makes the zero-offset reduction bitwise exact.
template <typename T>
Tensor<T> bilinear_grid(int h_in, int w_in, int h_out, int w_out) {
  auto g = Tensor<T>::zeros({h_out, w_out, 2});
  T* gv = g.data();
  for (int oy = 0; oy < h_out; ++oy) {
    T v = (static_cast<T>(oy) + T(0.5)) * static_cast<T>(h_in) / static_cast<T>(h_out) -
          T(0.5);
    T gy = (T(2) * v + T(1)) / static_cast<T>(h_in) - T(1);
    for (int ox = 0; ox < w_out; ++ox) {
      T u = (static_cast<T>(ox) + T(0.5)) * static_cast<T>(w_in) / static_cast<T>(w_out) -
            T(0.5);
      T gx = (T(2) * u + T(1)) / static_cast<T>(w_in) - T(1);
      gv[(static_cast<std::size_t>(oy) * w_out + ox) * 2 + 0] = gx;
      gv[(static_cast<std::size_t>(oy) * w_out + ox) * 2 + 1] = gy;
    }
  }
  return g;
}

/// Bilinear sampling of x [C,H,W] at coords [Ho,Wo,2] in normalized [-1,1]
/// (align-corners-false). Out-of-range coordinates clamp to the border, and
/// the coordinate gradient is zero there. Gradients flow to x and coords.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& x, const Tensor<T>& coords) {
  if (x.rank() != 3) throw ShapeError("grid_sample: expected CHW input");
  if (coords.rank() != 3 || coords.dim(2) != 2)
    throw ShapeError("grid_sample: expected [H',W',2] coords");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  int Ho = coords.dim(0), Wo = coords.dim(1);
  int NP = Ho * Wo;

  struct Samp {
    int x0, x1, y0, y1;
    T fx, fy;
    bool clx, cly;  // coordinate was clamped: no gradient to coords
  };
  auto samps = std::make_shared<std::vector<Samp>>(static_cast<std::size_t>(NP));

  auto resolve = [](T g, int size, Samp& s, bool horiz) {
    T i = ((g + T(1)) * static_cast<T>(size) - T(1)) / T(2);
    bool cl = false;
    if (i < T(0)) {
      i = T(0);
      cl = true;
    } else if (i > static_cast<T>(size - 1)) {
      i = static_cast<T>(size - 1);
      cl = true;
    }
    int lo = static_cast<int>(std::floor(i));
    if (lo > size - 1) lo = size - 1;
    int hi = std::min(lo + 1, size - 1);
    T f = i - static_cast<T>(lo);
    if (horiz) {
      s.x0 = lo;
      s.x1 = hi;
      s.fx = f;
      s.clx = cl;
    } else {
      s.y0 = lo;
      s.y1 = hi;
      s.fy = f;
      s.cly = cl;
    }
  };

  return make_op_result<T>(
      {C, Ho, Wo}, {x, coords},
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        const T* cv = coords.data();
        for (int p = 0; p < NP; ++p) {
          Samp& s = (*samps)[static_cast<std::size_t>(p)];
          resolve(cv[static_cast<std::size_t>(p) * 2 + 0], W, s, true);
          resolve(cv[static_cast<std::size_t>(p) * 2 + 1], H, s, false);
          T w00 = (T(1) - s.fy) * (T(1) - s.fx);
          T w01 = (T(1) - s.fy) * s.fx;
          T w10 = s.fy * (T(1) - s.fx);
          T w11 = s.fy * s.fx;
          for (int c = 0; c < C; ++c) {
            const T* plane = xv + static_cast<std::size_t>(c) * H * W;
            out.value[static_cast<std::size_t>(c) * NP + p] =
                w00 * plane[s.y0 * W + s.x0] + w01 * plane[s.y0 * W + s.x1] +
                w10 * plane[s.y1 * W + s.x0] + w11 * plane[s.y1 * W + s.x1];
          }
        }
      },
      [xn = x.node(), cn = coords.node(), samps, C, H, W, NP](
          std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, cn, samps, o, C, H, W, NP]() {
          if (xn->requires_grad) xn->ensure_grad();
          if (cn->requires_grad) cn->ensure_grad();
          for (int p = 0; p < NP; ++p) {
            const Samp& s = (*samps)[static_cast<std::size_t>(p)];
            T w00 = (T(1) - s.fy) * (T(1) - s.fx);
            T w01 = (T(1) - s.fy) * s.fx;
            T w10 = s.fy * (T(1) - s.fx);
            T w11 = s.fy * s.fx;
            T dix = T(0), diy = T(0);
            for (int c = 0; c < C; ++c) {
              T g = o->grad[static_cast<std::size_t>(c) * NP + p];
              const T* plane = xn->value.data() + static_cast<std::size_t>(c) * H * W;
              if (xn->requires_grad) {
                T* gp = xn->grad.data() + static_cast<std::size_t>(c) * H * W;
                gp[s.y0 * W + s.x0] += g * w00;
                gp[s.y0 * W + s.x1] += g * w01;
                gp[s.y1 * W + s.x0] += g * w10;
                gp[s.y1 * W + s.x1] += g * w11;
              }
              if (cn->requires_grad) {
                T v00 = plane[s.y0 * W + s.x0], v01 = plane[s.y0 * W + s.x1];
                T v10 = plane[s.y1 * W + s.x0], v11 = plane[s.y1 * W + s.x1];
                dix += g * ((T(1) - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
                diy += g * ((T(1) - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
              }
            }
            if (cn->requires_grad) {
              // d(pixel coord)/d(normalized coord) = size/2; zero when clamped.
              if (!s.clx)
                cn->grad[static_cast<std::size_t>(p) * 2 + 0] +=
                    dix * static_cast<T>(W) / T(2);
              if (!s.cly)
                cn->grad[static_cast<std::size_t>(p) * 2 + 1] +=
                    diy * static_cast<T>(H) / T(2);
            }
          }
        };
      });
}

enum class ResizeMode { kNearest, kBilinear };

/// Scale-factor resize, scale in {2, 0.5}, align-corners-false. Nearest uses
/// source index floor(dst/scale); bilinear routes through grid_sample on the
/// canonical grid.
template <typename T>
Tensor<T> resize(const Tensor<T>& x, double scale, ResizeMode mode) {
  if (x.rank() != 3) throw ShapeError("resize: expected CHW input");
  if (scale != 2.0 && scale != 0.5)
    throw ConfigError("resize: scale must be 2 or 0.5");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (scale == 0.5 && (H % 2 != 0 || W % 2 != 0))
    throw ShapeError("resize: dims must be divisible by 2 for downscale");
  int Ho = scale == 2.0 ? H * 2 : H / 2;
  int Wo = scale == 2.0 ? W * 2 : W / 2;

  if (mode == ResizeMode::kBilinear) {
    return grid_sample(x, bilinear_grid<T>(H, W, Ho, Wo));
  }

  // Nearest: src = floor(dst * in/out).
  return make_op_result<T>(
      {C, Ho, Wo}, {x},
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        for (int c = 0; c < C; ++c)
          for (int oy = 0; oy < Ho; ++oy) {
            int iy = oy * H / Ho;
            for (int ox = 0; ox < Wo; ++ox) {
              int ix = ox * W / Wo;
              out.value[(static_cast<std::size_t>(c) * Ho + oy) * Wo + ox] =
                  xv[(static_cast<std::size_t>(c) * H + iy) * W + ix];
            }
          }
      },
      [xn = x.node(), C, H, W, Ho, Wo](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, C, H, W, Ho, Wo]() {
          xn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy) {
              int iy = oy * H / Ho;
              for (int ox = 0; ox < Wo; ++ox) {
                int ix = ox * W / Wo;
                xn->grad[(static_cast<std::size_t>(c) * H + iy) * W + ix] +=
                    o->grad[(static_cast<std::size_t>(c) * Ho + oy) * Wo + ox];
              }
            }
        };
      });
}

}  // namespace hifi::nn
