#include "jdd/embedding_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "jdd/error.hpp"

namespace jdd {

EmbeddingStats compute_stats(std::span<const double> weights, std::size_t vocab, std::size_t dim,
                             double sigma_floor) {
  if (vocab < 2) throw ConfigError("model.vocab_size", "embedding table needs |V| >= 2");
  if (dim < 1) throw ConfigError("model.embed_dim", "embedding table needs D >= 1");
  if (weights.size() != vocab * dim) {
    throw ShapeError("compute_stats: expected " + std::to_string(vocab * dim) + " weights, got " +
                     std::to_string(weights.size()));
  }
  EmbeddingStats s;
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 0.0);
  for (std::size_t v = 0; v < vocab; ++v) {
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += weights[v * dim + d];
  }
  for (double& m : s.mean) m /= static_cast<double>(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = weights[v * dim + d] - s.mean[d];
      s.stddev[d] += c * c;
    }
  }
  for (double& sd : s.stddev) sd = std::max(std::sqrt(sd / static_cast<double>(vocab)), sigma_floor);
  return s;
}

EmbeddingTable::EmbeddingTable(std::vector<double> weights, std::size_t vocab, std::size_t dim,
                               double sigma_floor)
    : weights_(std::move(weights)), vocab_(vocab), dim_(dim) {
  stats_ = compute_stats(weights_, vocab_, dim_, sigma_floor);
  precompute();
}

EmbeddingTable::EmbeddingTable(std::vector<double> weights, std::size_t vocab, std::size_t dim,
                               EmbeddingStats stats)
    : weights_(std::move(weights)), vocab_(vocab), dim_(dim), stats_(std::move(stats)) {
  if (vocab_ < 2) throw ConfigError("model.vocab_size", "embedding table needs |V| >= 2");
  if (weights_.size() != vocab_ * dim_ || stats_.mean.size() != dim_ ||
      stats_.stddev.size() != dim_) {
    throw ShapeError("EmbeddingTable: weights/statistics do not match |V| x D");
  }
  for (double s : stats_.stddev) {
    if (!(s > 0.0)) throw DomainError("EmbeddingTable: non-positive standard deviation");
  }
  precompute();
}

void EmbeddingTable::precompute() {
  normalized_rows_.resize(vocab_ * dim_);
  normalized_norms_.assign(vocab_, 0.0);
  raw_norms_.assign(vocab_, 0.0);
  for (std::size_t v = 0; v < vocab_; ++v) {
    double nn = 0.0;
    double rn = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double raw = weights_[v * dim_ + d];
      const double e = (raw - stats_.mean[d]) / stats_.stddev[d];
      normalized_rows_[v * dim_ + d] = e;
      nn += e * e;
      rn += raw * raw;
    }
    normalized_norms_[v] = std::sqrt(nn);
    raw_norms_[v] = std::sqrt(rn);
  }
}

void EmbeddingTable::check_dim(std::size_t n, const char* op) const {
  if (n != dim_) {
    throw ShapeError(std::string(op) + ": dimension " + std::to_string(n) + " != table D " +
                     std::to_string(dim_));
  }
}

std::span<const double> EmbeddingTable::row(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(vocab_));
  }
  return {weights_.data() + static_cast<std::size_t>(id) * dim_, dim_};
}

Vec EmbeddingTable::normalize(std::span<const double> raw) const {
  check_dim(raw.size(), "normalize");
  Vec out(dim_);
  for (std::size_t d = 0; d < dim_; ++d) out[d] = (raw[d] - stats_.mean[d]) / stats_.stddev[d];
  return out;
}

Vec EmbeddingTable::denormalize(std::span<const double> normalized) const {
  check_dim(normalized.size(), "denormalize");
  Vec out(dim_);
  for (std::size_t d = 0; d < dim_; ++d) out[d] = stats_.stddev[d] * normalized[d] + stats_.mean[d];
  return out;
}

Vec EmbeddingTable::token_to_normalized_embedding(TokenId id) const { return normalize(row(id)); }

TokenId EmbeddingTable::nearest(std::span<const double> query, const std::vector<double>& rows,
                                const Vec& norms, std::size_t candidates) const {
  check_dim(query.size(), "nearest_token");
  double qn = 0.0;
  for (double x : query) qn += x * x;
  if (!(qn > 0.0)) throw DomainError("nearest_token: zero query vector has no direction");
  qn = std::sqrt(qn);
  const std::size_t limit = candidates == 0 ? vocab_ : std::min(candidates, vocab_);
  TokenId best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < limit; ++v) {
    double dot = 0.0;
    const double* r = rows.data() + v * dim_;
    for (std::size_t d = 0; d < dim_; ++d) dot += query[d] * r[d];
    const double cos = norms[v] > 0.0 ? dot / (qn * norms[v]) : 0.0;
    if (cos > best_cos) {
      best_cos = cos;
      best = static_cast<TokenId>(v);
    }
  }
  return best;
}

TokenId EmbeddingTable::nearest_token(std::span<const double> normalized,
                                      std::size_t candidates) const {
  return nearest(normalized, normalized_rows_, normalized_norms_, candidates);
}

TokenId EmbeddingTable::nearest_token_raw(std::span<const double> raw,
                                          std::size_t candidates) const {
  return nearest(raw, weights_, raw_norms_, candidates);
}

}  // namespace jdd
