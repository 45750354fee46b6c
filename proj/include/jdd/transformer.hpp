#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "jdd/kernels/layout.hpp"
#include "jdd/rng.hpp"

namespace jdd {

enum class Backend { kReference, kParallel };

struct TransformerShape {
  std::size_t vocab = 0;  // rows of the token embedding table
  std::size_t outputs = 0;  // columns of the output head
  std::size_t dim = 0;
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t context = 0;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // weight decay applies (matrices only)
};

// Pre-LayerNorm causal transformer over caller-supplied input rows. The
// token embedding matrix "wte" is stored with the other parameters but the
// caller builds the input rows from it, so noisy and timestep rows can be
// fed directly. Positions are learned absolute embeddings added here.
template <class T>
class Transformer {
 public:
  struct Cache {
    std::vector<std::vector<T>> k;
    std::vector<std::vector<T>> v;
    std::size_t len = 0;
  };

  struct LayerActs {
    std::vector<T> x, ln1, mean1, rstd1, qkv, probs, att, mid, ln2, mean2, rstd2, fc, act;
  };

  struct Activations {
    std::size_t rows = 0;
    std::vector<int> positions;
    kernels::AttentionLayout layout;
    std::vector<std::size_t> out_rows;
    std::vector<LayerActs> layers;
    std::vector<T> final_x;  // residual stream after the last block
    std::vector<T> lnf, meanf, rstdf;  // gathered out rows
  };

  Transformer() = default;
  explicit Transformer(const TransformerShape& shape);

  const TransformerShape& shape() const { return shape_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& tensor(const std::string& name) const;
  T* data(const std::string& name) { return params_.data() + tensor(name).offset; }
  const T* data(const std::string& name) const { return params_.data() + tensor(name).offset; }

  // Scaled-normal weights, unit LayerNorm gains, zero biases.
  void init(Rng& rng, double gain = 0.02);

  Cache new_cache() const;

  // Inference forward. `x_in` holds rows x dim input embeddings. The layout's
  // cache_len must equal cache->len (0 without a cache). The first `commit`
  // rows are appended to the cache afterwards. Logits are produced for
  // `out_rows` only, row-major out_rows.size() x outputs.
  void forward(const T* x_in, const std::vector<int>& positions,
               const kernels::AttentionLayout& layout, Cache* cache, std::size_t commit,
               const std::vector<std::size_t>& out_rows, std::vector<T>& logits,
               Backend backend = Backend::kParallel) const;

  // Training forward without a cache; keeps what backward needs.
  void forward_train(const T* x_in, const std::vector<int>& positions,
                     const kernels::AttentionLayout& layout,
                     const std::vector<std::size_t>& out_rows, std::vector<T>& logits,
                     Activations& acts, Backend backend = Backend::kParallel) const;

  // Accumulates parameter gradients into `grad` (sized like params) and,
  // when dx_in is non-null, writes the gradient for the input rows.
  void backward(const Activations& acts, const std::vector<T>& dlogits, std::vector<T>& grad,
                std::vector<T>* dx_in, Backend backend = Backend::kParallel) const;

 private:
  struct LayerOffsets {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };

  std::size_t add_tensor(const std::string& name, std::vector<std::size_t> shape, bool decay);
  void check_inputs(const std::vector<int>& positions, const kernels::AttentionLayout& layout,
                    const std::vector<std::size_t>& out_rows) const;
  void run(const T* x_in, const std::vector<int>& positions, const kernels::AttentionLayout& layout,
           Cache* cache, std::size_t commit, const std::vector<std::size_t>& out_rows,
           std::vector<T>& logits, Activations* acts, Backend backend) const;

  TransformerShape shape_;
  std::vector<T> params_;
  std::vector<TensorInfo> tensors_;
  std::vector<LayerOffsets> layer_offsets_;
  std::size_t wte_ = 0, wpe_ = 0, lnf_g_ = 0, lnf_b_ = 0, w_head_ = 0, b_head_ = 0;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace jdd
