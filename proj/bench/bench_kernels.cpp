// Serial reference kernels against their OpenMP counterparts. Thread count
// follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <vector>

#include "jdd/attention_mask.hpp"
#include "jdd/kernels/parallel.hpp"
#include "jdd/kernels/reference.hpp"
#include "jdd/rng.hpp"
#include "jdd/transformer.hpp"

namespace jdd {
namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

kernels::AttentionLayout causal_layout(std::size_t rows) {
  kernels::AttentionLayout layout;
  std::vector<std::uint32_t> keys;
  for (std::size_t i = 0; i < rows; ++i) {
    keys.push_back(static_cast<std::uint32_t>(i));
    layout.add_row(false, keys);
  }
  return layout;
}

template <bool kParallel>
void BM_LinearForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 256;
  const auto x = random_floats(n * in, 1), w = random_floats(in * out, 2), b = random_floats(out, 3);
  std::vector<float> y(n * out);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::linear_forward(x.data(), w.data(), b.data(), y.data(), n, in, out);
    } else {
      kernels::reference::linear_forward(x.data(), w.data(), b.data(), y.data(), n, in, out);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * in * out));
}

template <bool kParallel>
void BM_AttentionForward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t heads = 4, head_dim = 16, dim = heads * head_dim;
  const auto qkv = random_floats(rows * 3 * dim, 4);
  kernels::AttentionArgs<float> a;
  a.q = qkv.data();
  a.q_stride = 3 * dim;
  a.k_local = qkv.data() + dim;
  a.v_local = qkv.data() + 2 * dim;
  a.local_stride = 3 * dim;
  a.heads = heads;
  a.head_dim = head_dim;
  const kernels::AttentionLayout layout = causal_layout(rows);
  std::vector<float> out(rows * dim), probs(heads * layout.prob_offsets().back());
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::attention_forward(a, layout, out.data(), dim, probs.data());
    } else {
      kernels::reference::attention_forward(a, layout, out.data(), dim, probs.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kParallel>
void BM_Gelu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_floats(n, 5);
  std::vector<float> y(n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::gelu_forward(x.data(), y.data(), n);
    } else {
      kernels::reference::gelu_forward(x.data(), y.data(), n);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

struct Net {
  explicit Net(std::size_t rows)
      : net(TransformerShape{18, 16, 32, 2, 2, 256}),
        x(random_floats(rows * 32, 6)),
        positions(rows),
        layout(causal_layout(rows)),
        out_rows(rows) {
    Rng rng(7);
    net.init(rng, 0.4);
    std::iota(positions.begin(), positions.end(), 0);
    std::iota(out_rows.begin(), out_rows.end(), std::size_t{0});
  }
  Transformer<float> net;
  std::vector<float> x;
  std::vector<int> positions;
  kernels::AttentionLayout layout;
  std::vector<std::size_t> out_rows;
};

void BM_TransformerForward(benchmark::State& state, Backend backend) {
  Net n(static_cast<std::size_t>(state.range(0)));
  std::vector<float> logits;
  for (auto _ : state) {
    n.net.forward(n.x.data(), n.positions, n.layout, nullptr, 0, n.out_rows, logits, backend);
    benchmark::DoNotOptimize(logits.data());
  }
}

void BM_TransformerTrainStep(benchmark::State& state, Backend backend) {
  Net n(static_cast<std::size_t>(state.range(0)));
  std::vector<float> logits, grad(n.net.params().size());
  Transformer<float>::Activations acts;
  for (auto _ : state) {
    n.net.forward_train(n.x.data(), n.positions, n.layout, n.out_rows, logits, acts, backend);
    const std::vector<float> dlogits(logits.size(), 1e-3f);
    n.net.backward(acts, dlogits, grad, nullptr, backend);
    benchmark::DoNotOptimize(grad.data());
  }
}

BENCHMARK(BM_LinearForward<false>)->Name("linear_forward/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_LinearForward<true>)->Name("linear_forward/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionForward<false>)->Name("attention_forward/reference")->Arg(64)->Arg(192);
BENCHMARK(BM_AttentionForward<true>)->Name("attention_forward/parallel")->Arg(64)->Arg(192);
BENCHMARK(BM_Gelu<false>)->Name("gelu_forward/reference")->Arg(1 << 16);
BENCHMARK(BM_Gelu<true>)->Name("gelu_forward/parallel")->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_TransformerForward, reference, Backend::kReference)->Arg(64)->Arg(192);
BENCHMARK_CAPTURE(BM_TransformerForward, parallel, Backend::kParallel)->Arg(64)->Arg(192);
BENCHMARK_CAPTURE(BM_TransformerTrainStep, reference, Backend::kReference)->Arg(64);
BENCHMARK_CAPTURE(BM_TransformerTrainStep, parallel, Backend::kParallel)->Arg(64);

}  // namespace
}  // namespace jdd

BENCHMARK_MAIN();
