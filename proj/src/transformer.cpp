#include "jdd/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jdd/error.hpp"
#include "jdd/kernels/parallel.hpp"
#include "jdd/kernels/reference.hpp"

namespace jdd {
namespace {

constexpr double kLayerNormEps = 1e-5;

template <class T>
struct Ops {
  void (*linear_forward)(const T*, const T*, const T*, T*, std::size_t, std::size_t, std::size_t);
  void (*linear_backward)(const T*, const T*, const T*, T*, T*, T*, std::size_t, std::size_t,
                          std::size_t);
  void (*layernorm_forward)(const T*, const T*, const T*, T*, T*, T*, std::size_t, std::size_t, T);
  void (*layernorm_backward)(const T*, const T*, const T*, const T*, const T*, T*, T*, T*,
                             std::size_t, std::size_t);
  void (*gelu_forward)(const T*, T*, std::size_t);
  void (*gelu_backward)(const T*, const T*, T*, std::size_t);
  void (*attention_forward)(const kernels::AttentionArgs<T>&, const kernels::AttentionLayout&, T*,
                            std::size_t, T*);
  void (*attention_backward)(const kernels::AttentionArgs<T>&, const kernels::AttentionLayout&,
                             const T*, const T*, std::size_t, const kernels::AttentionGrads<T>&);
};

template <class T>
Ops<T> ops_for(Backend backend) {
  namespace r = kernels::reference;
  namespace p = kernels::parallel;
  if (backend == Backend::kReference) {
    return {r::linear_forward<T>,    r::linear_backward<T>, r::layernorm_forward<T>,
            r::layernorm_backward<T>, r::gelu_forward<T>,    r::gelu_backward<T>,
            r::attention_forward<T>, r::attention_backward<T>};
  }
  return {p::linear_forward<T>,    p::linear_backward<T>, p::layernorm_forward<T>,
          p::layernorm_backward<T>, p::gelu_forward<T>,    p::gelu_backward<T>,
          p::attention_forward<T>, p::attention_backward<T>};
}

}  // namespace

template <class T>
Transformer<T>::Transformer(const TransformerShape& shape) : shape_(shape) {
  const std::size_t d = shape.dim;
  if (d == 0 || shape.heads == 0 || d % shape.heads != 0) {
    throw ConfigError("model.num_heads", "embed_dim must be a positive multiple of num_heads");
  }
  if (shape.layers == 0) throw ConfigError("model.num_layers", "must be >= 1");
  if (shape.context == 0) throw ConfigError("model.context_len", "must be >= 1");
  if (shape.vocab < 2 || shape.outputs < 1) {
    throw ConfigError("model.vocab_size", "vocabulary too small");
  }
  wte_ = add_tensor("wte", {shape.vocab, d}, true);
  wpe_ = add_tensor("wpe", {shape.context, d}, true);
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_g = add_tensor(p + "ln1.g", {d}, false);
    o.ln1_b = add_tensor(p + "ln1.b", {d}, false);
    o.w_qkv = add_tensor(p + "attn.w_qkv", {d, 3 * d}, true);
    o.b_qkv = add_tensor(p + "attn.b_qkv", {3 * d}, false);
    o.w_o = add_tensor(p + "attn.w_o", {d, d}, true);
    o.b_o = add_tensor(p + "attn.b_o", {d}, false);
    o.ln2_g = add_tensor(p + "ln2.g", {d}, false);
    o.ln2_b = add_tensor(p + "ln2.b", {d}, false);
    o.w_fc = add_tensor(p + "mlp.w_fc", {d, 4 * d}, true);
    o.b_fc = add_tensor(p + "mlp.b_fc", {4 * d}, false);
    o.w_proj = add_tensor(p + "mlp.w_proj", {4 * d, d}, true);
    o.b_proj = add_tensor(p + "mlp.b_proj", {d}, false);
    layer_offsets_.push_back(o);
  }
  lnf_g_ = add_tensor("lnf.g", {d}, false);
  lnf_b_ = add_tensor("lnf.b", {d}, false);
  w_head_ = add_tensor("head.w", {d, shape.outputs}, true);
  b_head_ = add_tensor("head.b", {shape.outputs}, false);
  params_.assign(tensors_.back().offset + tensors_.back().size, T(0));
}

template <class T>
std::size_t Transformer<T>::add_tensor(const std::string& name, std::vector<std::size_t> shape,
                                       bool decay) {
  TensorInfo t;
  t.name = name;
  t.size = 1;
  for (std::size_t s : shape) t.size *= s;
  t.shape = std::move(shape);
  t.offset = tensors_.empty() ? 0 : tensors_.back().offset + tensors_.back().size;
  t.decay = decay;
  tensors_.push_back(t);
  return t.offset;
}

template <class T>
const TensorInfo& Transformer<T>::tensor(const std::string& name) const {
  for (const TensorInfo& t : tensors_) {
    if (t.name == name) return t;
  }
  throw IndexError("no tensor named '" + name + "'");
}

template <class T>
void Transformer<T>::init(Rng& rng, double gain) {
  for (const TensorInfo& t : tensors_) {
    T* p = params_.data() + t.offset;
    const bool is_gain = t.name.size() >= 2 && t.name.compare(t.name.size() - 2, 2, ".g") == 0;
    for (std::size_t i = 0; i < t.size; ++i) {
      if (t.decay) {
        p[i] = static_cast<T>(gain * rng.normal());
      } else {
        p[i] = is_gain ? T(1) : T(0);
      }
    }
  }
}

template <class T>
typename Transformer<T>::Cache Transformer<T>::new_cache() const {
  Cache c;
  c.k.assign(shape_.layers, std::vector<T>(shape_.context * shape_.dim, T(0)));
  c.v.assign(shape_.layers, std::vector<T>(shape_.context * shape_.dim, T(0)));
  return c;
}

template <class T>
void Transformer<T>::check_inputs(const std::vector<int>& positions,
                                  const kernels::AttentionLayout& layout,
                                  const std::vector<std::size_t>& out_rows) const {
  if (positions.size() != layout.rows()) {
    throw ShapeError("transformer: " + std::to_string(positions.size()) + " positions for " +
                     std::to_string(layout.rows()) + " layout rows");
  }
  for (int p : positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= shape_.context) {
      throw CapacityError("position " + std::to_string(p) + " exceeds context length " +
                          std::to_string(shape_.context));
    }
  }
  for (std::size_t r : out_rows) {
    if (r >= positions.size()) throw IndexError("output row " + std::to_string(r) + " out of range");
  }
}

template <class T>
void Transformer<T>::forward(const T* x_in, const std::vector<int>& positions,
                             const kernels::AttentionLayout& layout, Cache* cache,
                             std::size_t commit, const std::vector<std::size_t>& out_rows,
                             std::vector<T>& logits, Backend backend) const {
  run(x_in, positions, layout, cache, commit, out_rows, logits, nullptr, backend);
}

template <class T>
void Transformer<T>::forward_train(const T* x_in, const std::vector<int>& positions,
                                   const kernels::AttentionLayout& layout,
                                   const std::vector<std::size_t>& out_rows,
                                   std::vector<T>& logits, Activations& acts,
                                   Backend backend) const {
  if (layout.cache_len != 0) throw ContractViolation("training forward cannot use a cache");
  run(x_in, positions, layout, nullptr, 0, out_rows, logits, &acts, backend);
}

template <class T>
void Transformer<T>::run(const T* x_in, const std::vector<int>& positions,
                         const kernels::AttentionLayout& layout, Cache* cache, std::size_t commit,
                         const std::vector<std::size_t>& out_rows, std::vector<T>& logits,
                         Activations* acts, Backend backend) const {
  check_inputs(positions, layout, out_rows);
  const std::size_t cache_len = cache ? cache->len : 0;
  if (layout.cache_len != cache_len) {
    throw ContractViolation("layout cache length " + std::to_string(layout.cache_len) +
                            " != cache length " + std::to_string(cache_len));
  }
  if (commit > positions.size()) throw ContractViolation("commit exceeds row count");
  if (cache && cache_len + commit > shape_.context) {
    throw CapacityError("key-value cache overflow: " + std::to_string(cache_len + commit) + " > " +
                        std::to_string(shape_.context));
  }
  const Ops<T> ops = ops_for<T>(backend);
  const std::size_t n = positions.size();
  const std::size_t d = shape_.dim;
  const std::size_t f = 4 * d;
  const T* P = params_.data();

  std::vector<T> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const T* pe = P + wpe_ + static_cast<std::size_t>(positions[i]) * d;
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = x_in[i * d + j] + pe[j];
  }
  if (acts) {
    acts->rows = n;
    acts->positions = positions;
    acts->layout = layout;
    acts->out_rows = out_rows;
    acts->layers.assign(shape_.layers, {});
  }

  LayerActs scratch;
  for (std::size_t l = 0; l < shape_.layers; ++l) {
    const LayerOffsets& o = layer_offsets_[l];
    LayerActs& a = acts ? acts->layers[l] : scratch;
    a.ln1.resize(n * d);
    a.mean1.resize(n);
    a.rstd1.resize(n);
    a.qkv.resize(n * 3 * d);
    a.att.resize(n * d);
    a.mid.resize(n * d);
    a.ln2.resize(n * d);
    a.mean2.resize(n);
    a.rstd2.resize(n);
    a.fc.resize(n * f);
    a.act.resize(n * f);
    if (acts) a.x = x;

    ops.layernorm_forward(x.data(), P + o.ln1_g, P + o.ln1_b, a.ln1.data(), a.mean1.data(),
                          a.rstd1.data(), n, d, static_cast<T>(kLayerNormEps));
    ops.linear_forward(a.ln1.data(), P + o.w_qkv, P + o.b_qkv, a.qkv.data(), n, d, 3 * d);

    kernels::AttentionArgs<T> args;
    args.q = a.qkv.data();
    args.q_stride = 3 * d;
    args.k_local = a.qkv.data() + d;
    args.v_local = a.qkv.data() + 2 * d;
    args.local_stride = 3 * d;
    if (cache) {
      args.k_cache = cache->k[l].data();
      args.v_cache = cache->v[l].data();
      args.cache_stride = d;
    }
    args.heads = shape_.heads;
    args.head_dim = d / shape_.heads;
    T* probs = nullptr;
    if (acts) {
      a.probs.assign(shape_.heads * layout.prob_offsets().back(), T(0));
      probs = a.probs.data();
    }
    ops.attention_forward(args, layout, a.att.data(), d, probs);

    if (cache) {
      for (std::size_t r = 0; r < commit; ++r) {
        const T* row = a.qkv.data() + r * 3 * d;
        std::copy(row + d, row + 2 * d, cache->k[l].data() + (cache_len + r) * d);
        std::copy(row + 2 * d, row + 3 * d, cache->v[l].data() + (cache_len + r) * d);
      }
    }

    ops.linear_forward(a.att.data(), P + o.w_o, P + o.b_o, a.mid.data(), n, d, d);
    for (std::size_t i = 0; i < n * d; ++i) a.mid[i] += x[i];
    ops.layernorm_forward(a.mid.data(), P + o.ln2_g, P + o.ln2_b, a.ln2.data(), a.mean2.data(),
                          a.rstd2.data(), n, d, static_cast<T>(kLayerNormEps));
    ops.linear_forward(a.ln2.data(), P + o.w_fc, P + o.b_fc, a.fc.data(), n, d, f);
    ops.gelu_forward(a.fc.data(), a.act.data(), n * f);
    ops.linear_forward(a.act.data(), P + o.w_proj, P + o.b_proj, x.data(), n, f, d);
    for (std::size_t i = 0; i < n * d; ++i) x[i] += a.mid[i];
  }
  if (cache) cache->len += commit;

  const std::size_t m = out_rows.size();
  std::vector<T> xo(m * d);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(out_rows[r] * d),
              x.begin() + static_cast<std::ptrdiff_t>((out_rows[r] + 1) * d), xo.begin() + r * d);
  }
  std::vector<T> lnf(m * d), meanf(m), rstdf(m);
  ops.layernorm_forward(xo.data(), P + lnf_g_, P + lnf_b_, lnf.data(), meanf.data(), rstdf.data(),
                        m, d, static_cast<T>(kLayerNormEps));
  logits.resize(m * shape_.outputs);
  ops.linear_forward(lnf.data(), P + w_head_, P + b_head_, logits.data(), m, d, shape_.outputs);
  if (acts) {
    acts->final_x = std::move(xo);
    acts->lnf = std::move(lnf);
    acts->meanf = std::move(meanf);
    acts->rstdf = std::move(rstdf);
  }
}

template <class T>
void Transformer<T>::backward(const Activations& acts, const std::vector<T>& dlogits,
                              std::vector<T>& grad, std::vector<T>* dx_in,
                              Backend backend) const {
  const Ops<T> ops = ops_for<T>(backend);
  const std::size_t n = acts.rows;
  const std::size_t d = shape_.dim;
  const std::size_t f = 4 * d;
  const std::size_t m = acts.out_rows.size();
  const T* P = params_.data();
  if (grad.size() != params_.size()) grad.assign(params_.size(), T(0));
  if (dlogits.size() != m * shape_.outputs) throw ShapeError("backward: dlogits size mismatch");
  T* G = grad.data();

  std::vector<T> dlnf(m * d, T(0));
  ops.linear_backward(acts.lnf.data(), P + w_head_, dlogits.data(), dlnf.data(), G + w_head_,
                      G + b_head_, m, d, shape_.outputs);
  std::vector<T> dxo(m * d, T(0));
  ops.layernorm_backward(acts.final_x.data(), P + lnf_g_, acts.meanf.data(), acts.rstdf.data(),
                         dlnf.data(), dxo.data(), G + lnf_g_, G + lnf_b_, m, d);
  std::vector<T> dx(n * d, T(0));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < d; ++j) dx[acts.out_rows[r] * d + j] += dxo[r * d + j];
  }

  std::vector<T> dact, dfc, dln2, dmid, datt, dqkv, dln1;
  for (std::size_t li = shape_.layers; li-- > 0;) {
    const LayerOffsets& o = layer_offsets_[li];
    const LayerActs& a = acts.layers[li];
    dact.assign(n * f, T(0));
    ops.linear_backward(a.act.data(), P + o.w_proj, dx.data(), dact.data(), G + o.w_proj,
                        G + o.b_proj, n, f, d);
    dfc.assign(n * f, T(0));
    ops.gelu_backward(a.fc.data(), dact.data(), dfc.data(), n * f);
    dln2.assign(n * d, T(0));
    ops.linear_backward(a.ln2.data(), P + o.w_fc, dfc.data(), dln2.data(), G + o.w_fc, G + o.b_fc,
                        n, d, f);
    dmid = dx;
    ops.layernorm_backward(a.mid.data(), P + o.ln2_g, a.mean2.data(), a.rstd2.data(), dln2.data(),
                           dmid.data(), G + o.ln2_g, G + o.ln2_b, n, d);
    datt.assign(n * d, T(0));
    ops.linear_backward(a.att.data(), P + o.w_o, dmid.data(), datt.data(), G + o.w_o, G + o.b_o, n,
                        d, d);
    dqkv.assign(n * 3 * d, T(0));
    kernels::AttentionArgs<T> args;
    args.q = a.qkv.data();
    args.q_stride = 3 * d;
    args.k_local = a.qkv.data() + d;
    args.v_local = a.qkv.data() + 2 * d;
    args.local_stride = 3 * d;
    args.heads = shape_.heads;
    args.head_dim = d / shape_.heads;
    kernels::AttentionGrads<T> g{dqkv.data(), dqkv.data() + d, dqkv.data() + 2 * d, 3 * d};
    ops.attention_backward(args, acts.layout, a.probs.data(), datt.data(), d, g);
    dln1.assign(n * d, T(0));
    ops.linear_backward(a.ln1.data(), P + o.w_qkv, dqkv.data(), dln1.data(), G + o.w_qkv,
                        G + o.b_qkv, n, d, 3 * d);
    dx = dmid;
    ops.layernorm_backward(a.x.data(), P + o.ln1_g, a.mean1.data(), a.rstd1.data(), dln1.data(),
                           dx.data(), G + o.ln1_g, G + o.ln1_b, n, d);
  }
  for (std::size_t i = 0; i < n; ++i) {
    T* gp = G + wpe_ + static_cast<std::size_t>(acts.positions[i]) * d;
    for (std::size_t j = 0; j < d; ++j) gp[j] += dx[i * d + j];
  }
  if (dx_in) *dx_in = std::move(dx);
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace jdd
