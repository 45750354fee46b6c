#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jdd/embedding_space.hpp"
#include "jdd/json_util.hpp"
#include "jdd/schedules.hpp"
#include "jdd/transformer.hpp"
#include "jdd/types.hpp"

namespace jdd {

struct ModelConfig {
  std::size_t vocab_size = 64;  // data tokens; BOS and PAD are appended after them
  std::size_t embed_dim = 64;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t context_len = 640;
  double sigma_floor = kDefaultSigmaFloor;
  std::uint64_t seed = 0;

  std::size_t table_rows() const { return vocab_size + 2; }
  TokenId bos() const { return static_cast<TokenId>(vocab_size); }
  TokenId pad() const { return static_cast<TokenId>(vocab_size + 1); }
};

Json model_config_to_json(const ModelConfig& c);
// Rejects unknown keys; `path` prefixes field names in errors.
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
void validate(const ModelConfig& c);

// Sinusoidal features of t * 1000 standardized to zero mean and unit
// variance across the D components.
Vec standardized_timestep_features(double t, std::size_t dim);
// The standardized features mapped into raw embedding space with the
// table's statistics, so they look like token embeddings to the model.
Vec timestep_encoding(double t, const EmbeddingTable& table);

struct ForwardInput {
  std::vector<TokenId> prefix_tokens;   // new clean tokens; committed to the cache
  std::vector<Vec> window_embeddings;   // raw (denormalized), one per slot
  std::vector<Level> window_levels;     // kClean or grid index, one per slot
  const TimestepGrid* grid = nullptr;   // required when any level is noisy
};

// Next-token logits, one row per prefix token then one per window slot.
struct Logits {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

// True when levels are ordered from least to most noisy front to back.
bool levels_monotone(const std::vector<Level>& levels);

class ModelSession {
 public:
  virtual ~ModelSession() = default;
  virtual Logits forward(const ForwardInput& input) = 0;
  virtual std::size_t cached_tokens() const = 0;
};

// What the decoders need from a model. Sessions own their cache, so one
// model can serve many sessions concurrently.
class AutoregressiveModel {
 public:
  virtual ~AutoregressiveModel() = default;
  // Sampleable tokens are [0, vocab_size()).
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId bos_token() const = 0;
  virtual std::size_t context_len() const = 0;
  virtual const EmbeddingTable& embeddings() const = 0;
  virtual std::unique_ptr<ModelSession> new_session() const = 0;
};

class ToyModel : public AutoregressiveModel {
 public:
  ToyModel() = default;
  explicit ToyModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Transformer<float>& net() { return net_; }
  const Transformer<float>& net() const { return net_; }

  // Recomputes the embedding table and its statistics from "wte".
  void refresh_embeddings();
  // Installs given statistics instead of recomputing them.
  void set_embedding_stats(const EmbeddingStats& stats);

  void set_backend(Backend b) { backend_ = b; }
  Backend backend() const { return backend_; }

  std::size_t vocab_size() const override { return config_.vocab_size; }
  TokenId bos_token() const override { return config_.bos(); }
  std::size_t context_len() const override { return config_.context_len; }
  const EmbeddingTable& embeddings() const override { return table_; }
  std::unique_ptr<ModelSession> new_session() const override;

 private:
  ModelConfig config_;
  Transformer<float> net_;
  EmbeddingTable table_;
  Backend backend_ = Backend::kParallel;
};

struct CheckpointMeta {
  std::int64_t step = 0;
  std::string config_hash;
  std::string corpus_hash;
  Json run_config;  // producing run configuration; null when absent
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ToyModel& model, const CheckpointMeta& meta, const std::string& path);

struct LoadedCheckpoint {
  ToyModel model;
  CheckpointMeta meta;
};

// Throws FormatError on corrupt files and ConfigMismatchError when
// expected_vocab is non-zero and differs from the stored vocabulary.
LoadedCheckpoint load_checkpoint(const std::string& path, std::size_t expected_vocab = 0);

}  // namespace jdd
