#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "hifi/nn/tensor.hpp"

namespace hifi::nn {

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

/// Elementwise unary: y = f(x), dx += dy * dfdx(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& x, F f, DF dfdx) {
  return make_op_result<T>(
      x.shape(), {x},
      [&](TensorNode<T>& out) {
        const T* xv = x.data();
        for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = f(xv[i]);
      },
      [xn = x.node(), dfdx](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, dfdx]() {
          xn->ensure_grad();
          for (std::size_t i = 0; i < o->value.size(); ++i)
            xn->grad[i] += o->grad[i] * dfdx(xn->value[i], o->value[i]);
        };
      });
}

/// Elementwise binary on same-shape tensors.
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f, DA dfda,
                    DB dfdb) {
  check_same_shape(a, b, name);
  return make_op_result<T>(
      a.shape(), {a, b},
      [&](TensorNode<T>& out) {
        const T* av = a.data();
        const T* bv = b.data();
        for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = f(av[i], bv[i]);
      },
      [an = a.node(), bn = b.node(), dfda, dfdb](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [an, bn, o, dfda, dfdb]() {
          if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o->value.size(); ++i)
              an->grad[i] += o->grad[i] * dfda(an->value[i], bn->value[i]);
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o->value.size(); ++i)
              bn->grad[i] += o->grad[i] * dfdb(an->value[i], bn->value[i]);
          }
        };
      });
}

}  // namespace detail

// --- elementwise ------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

/// max(a, b); ties route the gradient to a.
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y) { return x >= y ? T(1) : T(0); },
      [](T x, T y) { return x >= y ? T(0) : T(1); });
}

/// min(a, b); ties route the gradient to a.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      "minimum", a, b, [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y) { return x <= y ? T(1) : T(0); },
      [](T x, T y) { return x <= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return mul_scalar(x, T(-1));
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(1) / (T(2) * y); });
}

template <typename T>
Tensor<T> atan_op(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::atan(v); }, [](T v, T) { return T(1) / (T(1) + v * v); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                         : std::exp(v) / (T(1) + std::exp(v));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) {
        T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        return v * s;
      },
      [](T v, T) {
        T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        return s * (T(1) + v * (T(1) - s));
      });
}

/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary_op(
      x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

/// Copies values into a fresh constant leaf; no gradient flows back.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from(x.shape(), x.values());
}

// --- reductions ---------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  return make_op_result<T>(
      {1}, {x},
      [&](TensorNode<T>& out) {
        T acc = T(0);
        for (T v : x.values()) acc += v;
        out.value[0] = acc;
      },
      [xn = x.node()](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o]() {
          xn->ensure_grad();
          T g = o->grad[0];
          for (auto& gv : xn->grad) gv += g;
        };
      });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// --- shape -----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  if (count != x.numel()) throw ShapeError("reshape: element count mismatch");
  return make_op_result<T>(
      std::move(shape), {x},
      [&](TensorNode<T>& out) { out.value = x.values(); },
      [xn = x.node()](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o]() {
          xn->ensure_grad();
          for (std::size_t i = 0; i < o->value.size(); ++i) xn->grad[i] += o->grad[i];
        };
      });
}

/// Concatenates along dim 0; trailing dims must agree.
template <typename T>
Tensor<T> concat_d0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_d0: empty input list");
  std::vector<int> shape = parts[0].shape();
  std::size_t inner = parts[0].numel() / static_cast<std::size_t>(shape[0]);
  int d0 = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(shape.size()))
      throw ShapeError("concat_d0: rank mismatch");
    for (std::size_t i = 1; i < shape.size(); ++i)
      if (p.shape()[i] != shape[i]) throw ShapeError("concat_d0: trailing dim mismatch");
    d0 += p.shape()[0];
  }
  shape[0] = d0;
  return make_op_result<T>(
      shape, parts,
      [&](TensorNode<T>& out) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          std::copy(p.values().begin(), p.values().end(), out.value.begin() + off);
          off += p.numel();
        }
      },
      [parts, inner](std::shared_ptr<TensorNode<T>> out) {
        (void)inner;
        TensorNode<T>* o = out.get();
        std::vector<std::shared_ptr<TensorNode<T>>> ins;
        for (const auto& p : parts) ins.push_back(p.node());
        return [ins, o]() {
          std::size_t off = 0;
          for (auto& in : ins) {
            if (in->requires_grad) {
              in->ensure_grad();
              for (std::size_t i = 0; i < in->value.size(); ++i)
                in->grad[i] += o->grad[off + i];
            }
            off += in->value.size();
          }
        };
      });
}

/// Contiguous slice [from, to) along dim 0.
template <typename T>
Tensor<T> slice_d0(const Tensor<T>& x, int from, int to) {
  if (from < 0 || to > x.dim(0) || from >= to) throw ShapeError("slice_d0: bad range");
  std::vector<int> shape = x.shape();
  shape[0] = to - from;
  std::size_t inner = x.numel() / static_cast<std::size_t>(x.dim(0));
  std::size_t off = static_cast<std::size_t>(from) * inner;
  std::size_t len = static_cast<std::size_t>(to - from) * inner;
  return make_op_result<T>(
      shape, {x},
      [&](TensorNode<T>& out) {
        std::copy(x.values().begin() + off, x.values().begin() + off + len,
                  out.value.begin());
      },
      [xn = x.node(), off](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, off]() {
          xn->ensure_grad();
          for (std::size_t i = 0; i < o->value.size(); ++i) xn->grad[off + i] += o->grad[i];
        };
      });
}

/// [C,H,W] -> [H*W, C] (row n = spatial position, fastest over W).
template <typename T>
Tensor<T> chw_to_nc(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("chw_to_nc: expected rank 3");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  return make_op_result<T>(
      {H * W, C}, {x},
      [&](TensorNode<T>& out) {
        const T* in = x.data();
        for (int c = 0; c < C; ++c)
          for (int p = 0; p < H * W; ++p) out.value[p * C + c] = in[c * H * W + p];
      },
      [xn = x.node(), C, H, W](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, C, H, W]() {
          xn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int p = 0; p < H * W; ++p) xn->grad[c * H * W + p] += o->grad[p * C + c];
        };
      });
}

/// [H*W, C] -> [C,H,W].
template <typename T>
Tensor<T> nc_to_chw(const Tensor<T>& x, int H, int W) {
  if (x.rank() != 2 || x.dim(0) != H * W) throw ShapeError("nc_to_chw: bad shape");
  int C = x.dim(1);
  return make_op_result<T>(
      {C, H, W}, {x},
      [&](TensorNode<T>& out) {
        const T* in = x.data();
        for (int c = 0; c < C; ++c)
          for (int p = 0; p < H * W; ++p) out.value[c * H * W + p] = in[p * C + c];
      },
      [xn = x.node(), C, H, W](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, C, H, W]() {
          xn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int p = 0; p < H * W; ++p) xn->grad[p * C + c] += o->grad[c * H * W + p];
        };
      });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose2d: expected rank 2");
  int M = x.dim(0), N = x.dim(1);
  return make_op_result<T>(
      {N, M}, {x},
      [&](TensorNode<T>& out) {
        const T* in = x.data();
        for (int i = 0; i < M; ++i)
          for (int j = 0; j < N; ++j) out.value[j * M + i] = in[i * N + j];
      },
      [xn = x.node(), M, N](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, M, N]() {
          xn->ensure_grad();
          for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) xn->grad[i * N + j] += o->grad[j * M + i];
        };
      });
}

// --- linear algebra ----------------------------------------------------------

/// [M,K] x [K,N] -> [M,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  return make_op_result<T>(
      {M, N}, {a, b},
      [&](TensorNode<T>& out) {
        const T* av = a.data();
        const T* bv = b.data();
        for (int i = 0; i < M; ++i) {
          T* orow = out.value.data() + static_cast<std::size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            T aik = av[static_cast<std::size_t>(i) * K + k];
            const T* brow = bv + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) orow[j] += aik * brow[j];
          }
        }
      },
      [an = a.node(), bn = b.node(), M, K, N](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [an, bn, o, M, K, N]() {
          const T* g = o->grad.data();
          if (an->requires_grad) {
            an->ensure_grad();  // dA = dC * B^T
            for (int i = 0; i < M; ++i)
              for (int k = 0; k < K; ++k) {
                T acc = T(0);
                const T* grow = g + static_cast<std::size_t>(i) * N;
                const T* brow = bn->value.data() + static_cast<std::size_t>(k) * N;
                for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
                an->grad[static_cast<std::size_t>(i) * K + k] += acc;
              }
          }
          if (bn->requires_grad) {
            bn->ensure_grad();  // dB = A^T * dC
            for (int k = 0; k < K; ++k) {
              T* brow = bn->grad.data() + static_cast<std::size_t>(k) * N;
              for (int i = 0; i < M; ++i) {
                T aik = an->value[static_cast<std::size_t>(i) * K + k];
                const T* grow = g + static_cast<std::size_t>(i) * N;
                for (int j = 0; j < N; ++j) brow[j] += aik * grow[j];
              }
            }
          }
        };
      });
}

/// Row-wise softmax of [N,M]: each output row is a probability simplex.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: expected rank 2");
  int N = x.dim(0), M = x.dim(1);
  return make_op_result<T>(
      x.shape(), {x},
      [&](TensorNode<T>& out) {
        const T* in = x.data();
        for (int i = 0; i < N; ++i) {
          const T* row = in + static_cast<std::size_t>(i) * M;
          T* orow = out.value.data() + static_cast<std::size_t>(i) * M;
          T mx = row[0];
          for (int j = 1; j < M; ++j) mx = std::max(mx, row[j]);
          T z = T(0);
          for (int j = 0; j < M; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
          }
          T inv = T(1) / z;
          for (int j = 0; j < M; ++j) orow[j] *= inv;
        }
      },
      [xn = x.node(), N, M](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [xn, o, N, M]() {
          xn->ensure_grad();
          for (int i = 0; i < N; ++i) {
            const T* y = o->value.data() + static_cast<std::size_t>(i) * M;
            const T* gy = o->grad.data() + static_cast<std::size_t>(i) * M;
            T dot = T(0);
            for (int j = 0; j < M; ++j) dot += gy[j] * y[j];
            T* gx = xn->grad.data() + static_cast<std::size_t>(i) * M;
            for (int j = 0; j < M; ++j) gx[j] += y[j] * (gy[j] - dot);
          }
        };
      });
}

// --- losses -------------------------------------------------------------------

/// Elementwise binary cross entropy with logits; targets are treated as
/// constants (no gradient to them). Stable form: max(z,0) - z*t + log1p(exp(-|z|)).
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::check_same_shape(logits, targets, "bce_with_logits");
  return make_op_result<T>(
      logits.shape(), {logits},
      [&](TensorNode<T>& out) {
        const T* z = logits.data();
        const T* t = targets.data();
        for (std::size_t i = 0; i < out.value.size(); ++i) {
          T zi = z[i];
          out.value[i] = std::max(zi, T(0)) - zi * t[i] + std::log1p(std::exp(-std::abs(zi)));
        }
      },
      [zn = logits.node(), tn = targets.node()](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [zn, tn, o]() {
          zn->ensure_grad();
          for (std::size_t i = 0; i < o->value.size(); ++i) {
            T zi = zn->value[i];
            T s = zi >= T(0) ? T(1) / (T(1) + std::exp(-zi))
                             : std::exp(zi) / (T(1) + std::exp(zi));
            zn->grad[i] += o->grad[i] * (s - tn->value[i]);
          }
        };
      });
}

}  // namespace hifi::nn
