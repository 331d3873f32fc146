#pragma once

#include <limits>

#include "hifi/nn/ops.hpp"

namespace hifi::nn {

/// Softmax(Q K^T / sqrt(d)) V. Q: [Nq,d], K: [Nk,d], V: [Nk,dv].
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("scaled_dot_attention: expected rank-2 inputs");
  if (q.dim(1) != k.dim(1)) throw ShapeError("scaled_dot_attention: Q/K inner dim mismatch");
  if (k.dim(0) != v.dim(0)) throw ShapeError("scaled_dot_attention: K/V row mismatch");
  T scale = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  auto scores = mul_scalar(matmul(q, transpose2d(k)), scale);
  return matmul(softmax_rows(scores), v);
}

/// Sparse attention pattern: query i attends to keys idx[ptr[i] .. ptr[i+1]).
struct AttentionWindows {
  std::vector<int> ptr;  // size Nq+1
  std::vector<int> idx;
};

/// Builds the per-query key windows for resampling: each output (guide) pixel
/// attends to the (2r+1)^2 neighborhood of its projected position in the
/// h_in x w_in key grid, clamped at the borders.
inline std::shared_ptr<AttentionWindows> make_resample_windows(int h_in, int w_in, int h_out,
                                                               int w_out, int radius) {
  auto win = std::make_shared<AttentionWindows>();
  win->ptr.reserve(static_cast<std::size_t>(h_out) * w_out + 1);
  win->ptr.push_back(0);
  for (int oy = 0; oy < h_out; ++oy) {
    int cy = static_cast<int>((oy + 0.5) * h_in / h_out);
    cy = std::min(std::max(cy, 0), h_in - 1);
    int y0 = std::max(0, cy - radius), y1 = std::min(h_in - 1, cy + radius);
    for (int ox = 0; ox < w_out; ++ox) {
      int cx = static_cast<int>((ox + 0.5) * w_in / w_out);
      cx = std::min(std::max(cx, 0), w_in - 1);
      int x0 = std::max(0, cx - radius), x1 = std::min(w_in - 1, cx + radius);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) win->idx.push_back(y * w_in + x);
      win->ptr.push_back(static_cast<int>(win->idx.size()));
    }
  }
  return win;
}

/// Windowed scaled-dot attention: out[i] = sum_j a_ij V[idx_j] with the
/// softmax restricted to each query's window. Same math as the dense form
/// but O(Nq * window) instead of O(Nq * Nk).
template <typename T>
Tensor<T> local_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          std::shared_ptr<AttentionWindows> win) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("local_attention: expected rank-2 inputs");
  if (q.dim(1) != k.dim(1)) throw ShapeError("local_attention: Q/K inner dim mismatch");
  if (k.dim(0) != v.dim(0)) throw ShapeError("local_attention: K/V row mismatch");
  int Nq = q.dim(0), C = q.dim(1), Dv = v.dim(1);
  if (static_cast<int>(win->ptr.size()) != Nq + 1)
    throw ShapeError("local_attention: window table does not match query count");
  T scale = T(1) / std::sqrt(static_cast<T>(C));
  // Probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(win->idx.size());

  return make_op_result<T>(
      {Nq, Dv}, {q, k, v},
      [&](TensorNode<T>& out) {
        const T* qv = q.data();
        const T* kv = k.data();
        const T* vv = v.data();
        for (int i = 0; i < Nq; ++i) {
          int lo = win->ptr[i], hi = win->ptr[i + 1];
          const T* qrow = qv + static_cast<std::size_t>(i) * C;
          T mx = -std::numeric_limits<T>::infinity();
          for (int j = lo; j < hi; ++j) {
            const T* krow = kv + static_cast<std::size_t>(win->idx[j]) * C;
            T dot = T(0);
            for (int c = 0; c < C; ++c) dot += qrow[c] * krow[c];
            (*probs)[j] = dot * scale;
            mx = std::max(mx, (*probs)[j]);
          }
          T z = T(0);
          for (int j = lo; j < hi; ++j) {
            (*probs)[j] = std::exp((*probs)[j] - mx);
            z += (*probs)[j];
          }
          T inv = T(1) / z;
          T* orow = out.value.data() + static_cast<std::size_t>(i) * Dv;
          for (int j = lo; j < hi; ++j) {
            (*probs)[j] *= inv;
            const T* vrow = vv + static_cast<std::size_t>(win->idx[j]) * Dv;
            T a = (*probs)[j];
            for (int d = 0; d < Dv; ++d) orow[d] += a * vrow[d];
          }
        }
      },
      [qn = q.node(), kn = k.node(), vn = v.node(), win, probs, Nq, C, Dv,
       scale](std::shared_ptr<TensorNode<T>> out) {
        TensorNode<T>* o = out.get();
        return [qn, kn, vn, win, probs, o, Nq, C, Dv, scale]() {
          if (qn->requires_grad) qn->ensure_grad();
          if (kn->requires_grad) kn->ensure_grad();
          if (vn->requires_grad) vn->ensure_grad();
          std::vector<T> da;  // d(loss)/d(prob j) per window
          for (int i = 0; i < Nq; ++i) {
            int lo = win->ptr[i], hi = win->ptr[i + 1];
            const T* go = o->grad.data() + static_cast<std::size_t>(i) * Dv;
            da.assign(static_cast<std::size_t>(hi - lo), T(0));
            T dot_ada = T(0);
            for (int j = lo; j < hi; ++j) {
              const T* vrow = vn->value.data() + static_cast<std::size_t>(win->idx[j]) * Dv;
              T acc = T(0);
              for (int d = 0; d < Dv; ++d) acc += go[d] * vrow[d];
              da[static_cast<std::size_t>(j - lo)] = acc;
              dot_ada += (*probs)[j] * acc;
              if (vn->requires_grad) {
                T* gv = vn->grad.data() + static_cast<std::size_t>(win->idx[j]) * Dv;
                T a = (*probs)[j];
                for (int d = 0; d < Dv; ++d) gv[d] += a * go[d];
              }
            }
            if (!qn->requires_grad && !kn->requires_grad) continue;
            const T* qrow = qn->value.data() + static_cast<std::size_t>(i) * C;
            T* gq = qn->requires_grad ? qn->grad.data() + static_cast<std::size_t>(i) * C
                                      : nullptr;
            for (int j = lo; j < hi; ++j) {
              T dlogit =
                  (*probs)[j] * (da[static_cast<std::size_t>(j - lo)] - dot_ada) * scale;
              const T* krow = kn->value.data() + static_cast<std::size_t>(win->idx[j]) * C;
              if (gq)
                for (int c = 0; c < C; ++c) gq[c] += dlogit * krow[c];
              if (kn->requires_grad) {
                T* gk = kn->grad.data() + static_cast<std::size_t>(win->idx[j]) * C;
                for (int c = 0; c < C; ++c) gk[c] += dlogit * qrow[c];
              }
            }
          }
        };
      });
}

}  // namespace hifi::nn
