#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jdd/types.hpp"

namespace jdd {

inline constexpr double kDefaultSigmaFloor = 1e-6;

struct EmbeddingStats {
  Vec mean;
  Vec stddev;
};

// Per-dimension population mean and floored standard deviation over the
// rows of a |V| x D matrix stored row-major.
EmbeddingStats compute_stats(std::span<const double> weights, std::size_t vocab, std::size_t dim,
                             double sigma_floor = kDefaultSigmaFloor);

// Vocabulary embedding matrix with its normalization statistics. Immutable
// after construction; build a new table when the weights change.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<double> weights, std::size_t vocab, std::size_t dim,
                 double sigma_floor = kDefaultSigmaFloor);
  // Uses the given statistics instead of recomputing them (frozen stats).
  EmbeddingTable(std::vector<double> weights, std::size_t vocab, std::size_t dim,
                 EmbeddingStats stats);

  std::size_t vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  const Vec& mean() const { return stats_.mean; }
  const Vec& stddev() const { return stats_.stddev; }
  const EmbeddingStats& stats() const { return stats_; }
  std::span<const double> row(TokenId id) const;
  const std::vector<double>& weights() const { return weights_; }

  Vec normalize(std::span<const double> raw) const;
  Vec denormalize(std::span<const double> normalized) const;
  Vec token_to_normalized_embedding(TokenId id) const;

  // Cosine-nearest token to `normalized` among ids [0, candidates), compared
  // against normalized rows. candidates = 0 means the whole vocabulary.
  TokenId nearest_token(std::span<const double> normalized, std::size_t candidates = 0) const;
  // Same search against raw rows, for the unnormalized ablation.
  TokenId nearest_token_raw(std::span<const double> raw, std::size_t candidates = 0) const;

 private:
  void check_dim(std::size_t n, const char* op) const;
  void precompute();
  TokenId nearest(std::span<const double> query, const std::vector<double>& rows,
                  const Vec& norms, std::size_t candidates) const;

  std::vector<double> weights_;
  std::size_t vocab_ = 0;
  std::size_t dim_ = 0;
  EmbeddingStats stats_;
  std::vector<double> normalized_rows_;
  Vec normalized_norms_;
  Vec raw_norms_;
};

}  // namespace jdd
