#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jdd/json_util.hpp"
#include "jdd/rng.hpp"
#include "jdd/types.hpp"

namespace jdd {

using Sequence = std::vector<TokenId>;

// Order-n Markov chain over [0, vocab). Row r of the transition matrix is
// the next-token distribution for the context whose base-vocab digits are
// the last `order` tokens (oldest first).
class MarkovSource {
 public:
  MarkovSource(std::size_t order, std::size_t vocab, std::vector<double> transitions);

  // Rows normalize(exp(sharpness * z)) with z standard normal.
  static MarkovSource random(std::size_t order, std::size_t vocab, double sharpness,
                             std::uint64_t seed);

  std::size_t order() const { return order_; }
  std::size_t vocab() const { return vocab_; }
  std::size_t num_contexts() const { return transitions_.size() / vocab_; }
  const std::vector<double>& transitions() const { return transitions_; }

  std::size_t context_index(std::span<const TokenId> context) const;
  // Exact next-token distribution given at least `order` preceding tokens.
  std::span<const double> next_distribution(std::span<const TokenId> history) const;

 private:
  std::size_t order_;
  std::size_t vocab_;
  std::vector<double> transitions_;
};

// The first `order` tokens of each sequence are uniform.
std::vector<Sequence> gen_markov(const MarkovSource& source, std::size_t num_sequences,
                                 std::size_t seq_len, Rng& rng);

enum class GridPattern { kStripes, kChecker, kBlobs };

GridPattern parse_grid_pattern(const std::string& name);
std::string grid_pattern_name(GridPattern p);

struct GridCorpusSpec {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t vocab = 16;
  std::vector<GridPattern> patterns{GridPattern::kStripes, GridPattern::kChecker,
                                    GridPattern::kBlobs};
};

inline constexpr std::size_t kBlobColors = 3;

// Raster-flattened H x W grids, one pattern per image.
std::vector<Sequence> gen_grid(const GridCorpusSpec& spec, std::size_t num_images, Rng& rng);
Sequence render_grid(GridPattern pattern, const GridCorpusSpec& spec, Rng& rng);

// Corpus generator settings as stored in run configurations.
struct CorpusSpec {
  std::string kind = "grid";  // markov | grid
  std::size_t vocab_size = 16;
  std::size_t num_sequences = 2000;
  // markov
  std::size_t order = 2;
  double sharpness = 2.0;
  std::size_t seq_len = 64;
  // grid
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<std::string> patterns{"stripes", "checker", "blobs"};
};

Json corpus_spec_to_json(const CorpusSpec& s);
CorpusSpec corpus_spec_from_json(const Json& j, const std::string& path = "corpus");
void validate(const CorpusSpec& s);

struct Corpus {
  std::string config_hash;
  std::string corpus_hash;  // identifies generator settings and seed
  Json generator;
  std::vector<Sequence> sequences;
};

// Generates from the spec; the Markov chain itself is drawn from `seed` too.
Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed, const std::string& config_hash);
// Markov chain used by a markov spec for a given seed.
MarkovSource markov_source_for(const CorpusSpec& spec, std::uint64_t seed);

// First line is a header record, then one {"tokens":[...]} per sequence.
void write_corpus_jsonl(const std::string& path, const Corpus& corpus);
Corpus read_corpus_jsonl(const std::string& path);

// Total tokens divided by the number of maximal constant runs in raster order.
double mean_run_length(const std::vector<Sequence>& sequences);

}  // namespace jdd
