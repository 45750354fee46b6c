#pragma once

// OpenMP kernels. Work is split only across independent outputs (rows,
// heads, weight rows, columns), so every output element is computed by one
// thread in a fixed order and results do not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "jdd/kernels/layout.hpp"
#include "jdd/kernels/reference.hpp"

namespace jdd::kernels::parallel {

using std::ptrdiff_t;

template <class T>
void linear_forward(const T* x, const T* w, const T* b, T* y, std::size_t n, std::size_t in,
                    std::size_t out) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t si = 0; si < static_cast<ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    T* yi = y + i * out;
    if (b) {
      std::copy(b, b + out, yi);
    } else {
      std::fill(yi, yi + out, T(0));
    }
    const T* xi = x + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const T xk = xi[k];
      const T* wk = w + k * out;
      for (std::size_t o = 0; o < out; ++o) yi[o] += xk * wk[o];
    }
  }
}

template <class T>
void linear_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, std::size_t n,
                     std::size_t in, std::size_t out) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (ptrdiff_t si = 0; si < static_cast<ptrdiff_t>(n); ++si) {
      const auto i = static_cast<std::size_t>(si);
      const T* dyi = dy + i * out;
      for (std::size_t k = 0; k < in; ++k) {
        const T* wk = w + k * out;
        T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
        std::size_t o = 0;
        for (; o + 4 <= out; o += 4) {
          acc0 += dyi[o] * wk[o];
          acc1 += dyi[o + 1] * wk[o + 1];
          acc2 += dyi[o + 2] * wk[o + 2];
          acc3 += dyi[o + 3] * wk[o + 3];
        }
        for (; o < out; ++o) acc0 += dyi[o] * wk[o];
        dx[i * in + k] += (acc0 + acc1) + (acc2 + acc3);
      }
    }
  }
  if (dw) {
#pragma omp parallel for schedule(static)
    for (ptrdiff_t sk = 0; sk < static_cast<ptrdiff_t>(in); ++sk) {
      const auto k = static_cast<std::size_t>(sk);
      T* dwk = dw + k * out;
      for (std::size_t i = 0; i < n; ++i) {
        const T xik = x[i * in + k];
        const T* dyi = dy + i * out;
        for (std::size_t o = 0; o < out; ++o) dwk[o] += xik * dyi[o];
      }
    }
  }
  if (db) {
    for (std::size_t i = 0; i < n; ++i) {
      const T* dyi = dy + i * out;
      for (std::size_t o = 0; o < out; ++o) db[o] += dyi[o];
    }
  }
}

template <class T>
void layernorm_forward(const T* x, const T* g, const T* b, T* y, T* mean, T* rstd, std::size_t n,
                       std::size_t d, T eps) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t si = 0; si < static_cast<ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    const T* xi = x + i * d;
    T m = 0;
    for (std::size_t j = 0; j < d; ++j) m += xi[j];
    m /= static_cast<T>(d);
    T v = 0;
    for (std::size_t j = 0; j < d; ++j) v += (xi[j] - m) * (xi[j] - m);
    v /= static_cast<T>(d);
    const T r = T(1) / std::sqrt(v + eps);
    T* yi = y + i * d;
    for (std::size_t j = 0; j < d; ++j) yi[j] = (xi[j] - m) * r * g[j] + b[j];
    if (mean) mean[i] = m;
    if (rstd) rstd[i] = r;
  }
}

template <class T>
void layernorm_backward(const T* x, const T* g, const T* mean, const T* rstd, const T* dy, T* dx,
                        T* dg, T* db, std::size_t n, std::size_t d) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t si = 0; si < static_cast<ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    const T* xi = x + i * d;
    const T* dyi = dy + i * d;
    T sum_dyg = 0;
    T sum_dyg_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T dyg = dyi[j] * g[j];
      sum_dyg += dyg;
      sum_dyg_xhat += dyg * ((xi[j] - mean[i]) * rstd[i]);
    }
    const T inv_d = T(1) / static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (xi[j] - mean[i]) * rstd[i];
      dx[i * d + j] += rstd[i] * (dyi[j] * g[j] - sum_dyg * inv_d - xhat * sum_dyg_xhat * inv_d);
    }
  }
#pragma omp parallel for schedule(static)
  for (ptrdiff_t sj = 0; sj < static_cast<ptrdiff_t>(d); ++sj) {
    const auto j = static_cast<std::size_t>(sj);
    T sg = 0;
    T sb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T v = dy[i * d + j];
      sg += v * ((x[i * d + j] - mean[i]) * rstd[i]);
      sb += v;
    }
    dg[j] += sg;
    db[j] += sb;
  }
}

template <class T>
void gelu_forward(const T* x, T* y, std::size_t count) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(count); ++i) y[i] = reference::gelu(x[i]);
}

template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t count) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(count); ++i) {
    dx[i] += dy[i] * reference::gelu_grad(x[i]);
  }
}

template <class T>
void attention_forward(const AttentionArgs<T>& a, const AttentionLayout& layout, T* out,
                       std::size_t out_stride, T* probs) {
  const std::size_t rows = layout.rows();
  const std::vector<std::size_t> offs = layout.prob_offsets();
  const std::size_t total = offs.back();
  const T scale = T(1) / std::sqrt(static_cast<T>(a.head_dim));
  const std::size_t hd = a.head_dim;
#pragma omp parallel
  {
    std::vector<T> w;
#pragma omp for schedule(dynamic, 4)
    for (ptrdiff_t si = 0; si < static_cast<ptrdiff_t>(rows); ++si) {
      const auto i = static_cast<std::size_t>(si);
      const std::size_t nc = layout.sees_cache[i] ? layout.cache_len : 0;
      const std::uint32_t kb = layout.key_offsets[i];
      const std::size_t nl = layout.key_offsets[i + 1] - kb;
      w.resize(nc + nl);
      for (std::size_t h = 0; h < a.heads; ++h) {
        const std::size_t c0 = h * hd;
        const T* qi = a.q + i * a.q_stride + c0;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < nc + nl; ++j) {
          const T* kj = j < nc ? a.k_cache + j * a.cache_stride + c0
                               : a.k_local + layout.keys[kb + (j - nc)] * a.local_stride + c0;
          T s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          w[j] = s * scale;
          mx = std::max(mx, w[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < nc + nl; ++j) {
          w[j] = std::exp(w[j] - mx);
          sum += w[j];
        }
        T* oi = out + i * out_stride + c0;
        std::fill(oi, oi + hd, T(0));
        for (std::size_t j = 0; j < nc + nl; ++j) {
          w[j] /= sum;
          const T* vj = j < nc ? a.v_cache + j * a.cache_stride + c0
                               : a.v_local + layout.keys[kb + (j - nc)] * a.local_stride + c0;
          const T wj = w[j];
          for (std::size_t c = 0; c < hd; ++c) oi[c] += wj * vj[c];
        }
        if (probs) std::copy(w.begin(), w.end(), probs + h * total + offs[i]);
      }
    }
  }
}

template <class T>
void attention_backward(const AttentionArgs<T>& a, const AttentionLayout& layout, const T* probs,
                        const T* dout, std::size_t dout_stride, const AttentionGrads<T>& g) {
  const std::size_t rows = layout.rows();
  const std::vector<std::size_t> offs = layout.prob_offsets();
  const std::size_t total = offs.back();
  const T scale = T(1) / std::sqrt(static_cast<T>(a.head_dim));
  const std::size_t hd = a.head_dim;
#pragma omp parallel
  {
    std::vector<T> dp;
#pragma omp for schedule(static)
    for (ptrdiff_t sh = 0; sh < static_cast<ptrdiff_t>(a.heads); ++sh) {
      const std::size_t c0 = static_cast<std::size_t>(sh) * hd;
      for (std::size_t i = 0; i < rows; ++i) {
        const std::uint32_t kb = layout.key_offsets[i];
        const std::size_t nk = layout.key_offsets[i + 1] - kb;
        const T* p = probs + static_cast<std::size_t>(sh) * total + offs[i];
        const T* doi = dout + i * dout_stride + c0;
        const T* qi = a.q + i * a.q_stride + c0;
        T* dqi = g.dq + i * g.stride + c0;
        dp.resize(nk);
        T dot = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          const T* vj = a.v_local + layout.keys[kb + j] * a.local_stride + c0;
          T s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += doi[c] * vj[c];
          dp[j] = s;
          dot += p[j] * s;
        }
        for (std::size_t j = 0; j < nk; ++j) {
          const std::size_t key = layout.keys[kb + j];
          const T ds = p[j] * (dp[j] - dot) * scale;
          const T pj = p[j];
          const T* kj = a.k_local + key * a.local_stride + c0;
          T* dkj = g.dk + key * g.stride + c0;
          T* dvj = g.dv + key * g.stride + c0;
          for (std::size_t c = 0; c < hd; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
            dvj[c] += pj * doi[c];
          }
        }
      }
    }
  }
}

}  // namespace jdd::kernels::parallel
