#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jdd/attention_mask.hpp"
#include "jdd/embedding_space.hpp"
#include "jdd/json_util.hpp"
#include "jdd/rng.hpp"
#include "jdd/schedules.hpp"
#include "jdd/toy_model.hpp"
#include "jdd/transformer.hpp"
#include "jdd/types.hpp"

namespace jdd {

struct NoiseWindow {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t segment = 1;  // tokens per noise level
};

// Per-token noise levels. Tokens before the first window are CLEAN.
struct NoisePlan {
  std::vector<NoiseWindow> windows;
  std::vector<Level> levels;
};

struct NoisePlanOptions {
  std::size_t window_min = 16;
  std::size_t window_max = 96;
  std::size_t clean_prefix = 0;  // leading tokens left CLEAN
  bool free_levels = false;      // draw segment levels freely, then sort
};

NoisePlan sample_noise_plan(std::size_t seq_len, const TimestepGrid& grid, Rng& rng,
                            const NoisePlanOptions& options = {});
NoisePlan clean_plan(std::size_t seq_len);

// Windows tile the tokens after the CLEAN prefix; inside a window levels go
// from least to most noisy and tokens of one segment share a level.
bool plan_is_well_formed(const NoisePlan& plan, std::size_t seq_len, std::size_t grid_size);

// Noisy raw embeddings plus the decomposition raw = alpha * W_e[x] + offset
// used to backpropagate into the embedding table.
struct NoisyEmbeddings {
  std::vector<Vec> raw;
  std::vector<double> timesteps;  // 0 for CLEAN tokens
  std::vector<double> alpha;
  std::vector<Vec> offset;
};

// With normalize=false noise is added in raw embedding space instead.
NoisyEmbeddings apply_noise_plan(const std::vector<TokenId>& tokens, const NoisePlan& plan,
                                 const EmbeddingTable& table, const TimestepGrid& grid,
                                 const NoiseCoeffs& coeffs, Rng& rng, bool normalize = true);

// One training sequence laid out for the model: main rows (input tokens)
// interleaved with timestep rows for noisy tokens.
struct TrainExample {
  std::vector<TokenId> inputs;
  std::vector<TokenId> labels;  // per main row; -1 when unlabeled
  std::vector<double> alpha;
  std::vector<Vec> offset;
  std::vector<Vec> timestep_raw;  // per main row; empty when CLEAN
  AttentionMask mask;
};

// Builds the example for [BOS] + tokens with the given plan over the main
// rows (row 0 is BOS and must be CLEAN).
TrainExample make_example(const std::vector<TokenId>& tokens, TokenId bos, const NoisePlan& plan,
                          const EmbeddingTable& table, const TimestepGrid& grid,
                          const NoiseCoeffs& coeffs, Rng& rng, bool normalize = true);

// Sum of cross-entropy over labeled rows. When grad is non-null, adds
// weight * d(sum)/d(params).
template <class T>
double example_loss(const Transformer<T>& net, const TrainExample& ex, std::vector<T>* grad,
                    double weight, Backend backend = Backend::kParallel);

struct TrainConfig {
  int pretrain_steps = 300;
  int finetune_steps = 200;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  double min_lr_ratio = 0.1;
  int warmup_steps = 20;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  std::size_t window_min = 16;
  std::size_t window_max = 96;
  std::size_t clean_prefix_max = 32;  // fine-tuning keeps up to this many tokens clean
  bool free_levels = false;
  bool recompute_stats = true;
  bool normalize = true;
  std::size_t max_seq_len = 0;  // 0: use the model context
};

Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "training");
void validate(const TrainConfig& c);

struct AdamW {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;
};

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

// Cosine decay to min_lr_ratio * lr after a linear warmup.
double learning_rate(const TrainConfig& c, int step, int total_steps);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Mean loss over the batch, then one clipped AdamW update. Throws
// NumericError when the loss or gradient is not finite.
StepResult train_step(ToyModel& model, AdamW& opt, const std::vector<TrainExample>& batch,
                      const TrainConfig& cfg, double lr, std::int64_t step);

enum class TrainPhase { kClean, kNoisy };

// Runs `steps` optimizer steps of the phase, sampling sequences from the
// corpus. Each record is passed to `on_step` when set.
std::vector<LossRecord> train_phase(ToyModel& model, AdamW& opt,
                                    const std::vector<std::vector<TokenId>>& corpus,
                                    const Schedule& schedule, const TrainConfig& cfg,
                                    TrainPhase phase, int steps, std::int64_t step_offset,
                                    Rng& rng,
                                    const std::function<void(const LossRecord&)>& on_step = {});

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& records);

}  // namespace jdd
