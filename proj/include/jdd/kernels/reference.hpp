#pragma once

// Serial reference kernels. Straightforward loops kept as the ground truth
// for the OpenMP versions in parallel.hpp; not used on the hot path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "jdd/kernels/layout.hpp"

namespace jdd::kernels {

// Strided views of the query/key/value blocks for one attention call. Key
// and value rows come from an optional cache followed by the local rows.
template <class T>
struct AttentionArgs {
  const T* q = nullptr;
  std::size_t q_stride = 0;
  const T* k_cache = nullptr;
  const T* v_cache = nullptr;
  std::size_t cache_stride = 0;
  const T* k_local = nullptr;
  const T* v_local = nullptr;
  std::size_t local_stride = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 0;
};

template <class T>
struct AttentionGrads {
  T* dq = nullptr;
  T* dk = nullptr;
  T* dv = nullptr;
  std::size_t stride = 0;
};

namespace reference {

// y[n x out] = x[n x in] * w[in x out] + b.
template <class T>
void linear_forward(const T* x, const T* w, const T* b, T* y, std::size_t n, std::size_t in,
                    std::size_t out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      T acc = b ? b[o] : T(0);
      for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[k * out + o];
      y[i * out + o] = acc;
    }
  }
}

// Accumulates dx += dy w^T, dw += x^T dy, db += colsum(dy). Any of dx, dw,
// db may be null.
template <class T>
void linear_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, std::size_t n,
                     std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < in; ++k) {
      T gx = 0;
      for (std::size_t o = 0; o < out; ++o) {
        const T g = dy[i * out + o];
        if (dw) dw[k * out + o] += x[i * in + k] * g;
        gx += g * w[k * out + o];
      }
      if (dx) dx[i * in + k] += gx;
    }
    if (db) {
      for (std::size_t o = 0; o < out; ++o) db[o] += dy[i * out + o];
    }
  }
}

template <class T>
void layernorm_forward(const T* x, const T* g, const T* b, T* y, T* mean, T* rstd, std::size_t n,
                       std::size_t d, T eps) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x + i * d;
    T m = 0;
    for (std::size_t j = 0; j < d; ++j) m += xi[j];
    m /= static_cast<T>(d);
    T v = 0;
    for (std::size_t j = 0; j < d; ++j) v += (xi[j] - m) * (xi[j] - m);
    v /= static_cast<T>(d);
    const T r = T(1) / std::sqrt(v + eps);
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = (xi[j] - m) * r * g[j] + b[j];
    if (mean) mean[i] = m;
    if (rstd) rstd[i] = r;
  }
}

// Accumulates dx, dg, db.
template <class T>
void layernorm_backward(const T* x, const T* g, const T* mean, const T* rstd, const T* dy, T* dx,
                        T* dg, T* db, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    T sum_dyg = 0;
    T sum_dyg_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (x[i * d + j] - mean[i]) * rstd[i];
      const T dyg = dy[i * d + j] * g[j];
      sum_dyg += dyg;
      sum_dyg_xhat += dyg * xhat;
      dg[j] += dy[i * d + j] * xhat;
      db[j] += dy[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (x[i * d + j] - mean[i]) * rstd[i];
      const T dyg = dy[i * d + j] * g[j];
      dx[i * d + j] +=
          rstd[i] * (dyg - sum_dyg / static_cast<T>(d) - xhat * sum_dyg_xhat / static_cast<T>(d));
    }
  }
}

template <class T>
T gelu(T x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  const T c = static_cast<T>(0.7978845608028654);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

template <class T>
void gelu_forward(const T* x, T* y, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) y[i] = gelu(x[i]);
}

// Accumulates dx += dy * gelu'(x).
template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) dx[i] += dy[i] * gelu_grad(x[i]);
}

// Masked multi-head attention. Writes out[rows x heads*head_dim] and, when
// probs is non-null, the attention weights laid out as
// probs[h * prob_total + prob_offsets[row] + key].
template <class T>
void attention_forward(const AttentionArgs<T>& a, const AttentionLayout& layout, T* out,
                       std::size_t out_stride, T* probs) {
  const std::size_t rows = layout.rows();
  const std::vector<std::size_t> offs = layout.prob_offsets();
  const std::size_t total = offs.back();
  const T scale = T(1) / std::sqrt(static_cast<T>(a.head_dim));
  std::vector<T> w;
  for (std::size_t h = 0; h < a.heads; ++h) {
    const std::size_t c0 = h * a.head_dim;
    for (std::size_t i = 0; i < rows; ++i) {
      const T* qi = a.q + i * a.q_stride + c0;
      const std::size_t nc = layout.sees_cache[i] ? layout.cache_len : 0;
      const std::size_t nk = layout.num_keys(i);
      w.assign(nk, T(0));
      auto key_row = [&](std::size_t j, bool value) -> const T* {
        if (j < nc) return (value ? a.v_cache : a.k_cache) + j * a.cache_stride + c0;
        const std::size_t local = layout.keys[layout.key_offsets[i] + (j - nc)];
        return (value ? a.v_local : a.k_local) + local * a.local_stride + c0;
      };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        const T* kj = key_row(j, false);
        T s = 0;
        for (std::size_t c = 0; c < a.head_dim; ++c) s += qi[c] * kj[c];
        w[j] = s * scale;
        mx = std::max(mx, w[j]);
      }
      T sum = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        w[j] = std::exp(w[j] - mx);
        sum += w[j];
      }
      T* oi = out + i * out_stride + c0;
      for (std::size_t c = 0; c < a.head_dim; ++c) oi[c] = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        w[j] /= sum;
        const T* vj = key_row(j, true);
        for (std::size_t c = 0; c < a.head_dim; ++c) oi[c] += w[j] * vj[c];
        if (probs) probs[h * total + offs[i] + j] = w[j];
      }
    }
  }
}

// Gradient of attention_forward for calls without a cache. Accumulates
// into dq, dk, dv.
template <class T>
void attention_backward(const AttentionArgs<T>& a, const AttentionLayout& layout, const T* probs,
                        const T* dout, std::size_t dout_stride, const AttentionGrads<T>& g) {
  const std::size_t rows = layout.rows();
  const std::vector<std::size_t> offs = layout.prob_offsets();
  const std::size_t total = offs.back();
  const T scale = T(1) / std::sqrt(static_cast<T>(a.head_dim));
  std::vector<T> dp;
  for (std::size_t h = 0; h < a.heads; ++h) {
    const std::size_t c0 = h * a.head_dim;
    for (std::size_t i = 0; i < rows; ++i) {
      const std::uint32_t b = layout.key_offsets[i];
      const std::size_t nk = layout.key_offsets[i + 1] - b;
      const T* p = probs + h * total + offs[i];
      const T* doi = dout + i * dout_stride + c0;
      dp.assign(nk, T(0));
      T dot = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        const std::size_t key = layout.keys[b + j];
        const T* vj = a.v_local + key * a.local_stride + c0;
        for (std::size_t c = 0; c < a.head_dim; ++c) dp[j] += doi[c] * vj[c];
        dot += p[j] * dp[j];
      }
      const T* qi = a.q + i * a.q_stride + c0;
      for (std::size_t j = 0; j < nk; ++j) {
        const std::size_t key = layout.keys[b + j];
        const T ds = p[j] * (dp[j] - dot) * scale;
        const T* kj = a.k_local + key * a.local_stride + c0;
        for (std::size_t c = 0; c < a.head_dim; ++c) {
          g.dq[i * g.stride + c0 + c] += ds * kj[c];
          g.dk[key * g.stride + c0 + c] += ds * qi[c];
          g.dv[key * g.stride + c0 + c] += p[j] * doi[c];
        }
      }
    }
  }
}

}  // namespace reference
}  // namespace jdd::kernels
