#include "jdd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "jdd/error.hpp"
#include "jdd/hash.hpp"

namespace jdd {

MarkovSource::MarkovSource(std::size_t order, std::size_t vocab, std::vector<double> transitions)
    : order_(order), vocab_(vocab), transitions_(std::move(transitions)) {
  if (order_ < 1) throw ConfigError("corpus.order", "must be >= 1");
  if (vocab_ < 2) throw ConfigError("corpus.vocab_size", "must be >= 2");
  std::size_t rows = 1;
  for (std::size_t i = 0; i < order_; ++i) rows *= vocab_;
  if (transitions_.size() != rows * vocab_) {
    throw ConfigError("corpus.transitions", "expected " + std::to_string(rows) + " x " +
                                                std::to_string(vocab_) + " entries");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < vocab_; ++c) {
      const double p = transitions_[r * vocab_ + c];
      if (!(p >= 0.0)) throw ConfigError("corpus.transitions", "negative or NaN probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("corpus.transitions",
                        "row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

MarkovSource MarkovSource::random(std::size_t order, std::size_t vocab, double sharpness,
                                  std::uint64_t seed) {
  if (order < 1) throw ConfigError("corpus.order", "must be >= 1");
  if (vocab < 2) throw ConfigError("corpus.vocab_size", "must be >= 2");
  std::size_t rows = 1;
  for (std::size_t i = 0; i < order; ++i) rows *= vocab;
  Rng rng(seed);
  std::vector<double> t(rows * vocab);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      t[r * vocab + c] = std::exp(sharpness * rng.normal());
      sum += t[r * vocab + c];
    }
    for (std::size_t c = 0; c < vocab; ++c) t[r * vocab + c] /= sum;
  }
  return MarkovSource(order, vocab, std::move(t));
}

std::size_t MarkovSource::context_index(std::span<const TokenId> context) const {
  if (context.size() != order_) throw ShapeError("markov context must hold exactly `order` tokens");
  std::size_t idx = 0;
  for (TokenId t : context) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_) throw IndexError("token outside chain");
    idx = idx * vocab_ + static_cast<std::size_t>(t);
  }
  return idx;
}

std::span<const double> MarkovSource::next_distribution(std::span<const TokenId> history) const {
  if (history.size() < order_) throw ShapeError("markov history shorter than chain order");
  const std::size_t r = context_index(history.subspan(history.size() - order_));
  return {transitions_.data() + r * vocab_, vocab_};
}

std::vector<Sequence> gen_markov(const MarkovSource& source, std::size_t num_sequences,
                                 std::size_t seq_len, Rng& rng) {
  if (seq_len <= source.order()) {
    throw ConfigError("corpus.seq_len", "must exceed the chain order");
  }
  std::vector<Sequence> out(num_sequences);
  for (Sequence& s : out) {
    s.reserve(seq_len);
    for (std::size_t i = 0; i < source.order(); ++i) {
      s.push_back(static_cast<TokenId>(rng.uniform_int(source.vocab())));
    }
    while (s.size() < seq_len) {
      s.push_back(static_cast<TokenId>(rng.categorical(source.next_distribution(s))));
    }
  }
  return out;
}

GridPattern parse_grid_pattern(const std::string& name) {
  if (name == "stripes") return GridPattern::kStripes;
  if (name == "checker") return GridPattern::kChecker;
  if (name == "blobs") return GridPattern::kBlobs;
  throw ConfigError("corpus.patterns", "unknown pattern '" + name + "'");
}

std::string grid_pattern_name(GridPattern p) {
  switch (p) {
    case GridPattern::kStripes:
      return "stripes";
    case GridPattern::kChecker:
      return "checker";
    case GridPattern::kBlobs:
      return "blobs";
  }
  return "stripes";
}

namespace {

std::size_t colors_needed(const std::vector<GridPattern>& patterns) {
  std::size_t n = 0;
  for (GridPattern p : patterns) n = std::max(n, p == GridPattern::kBlobs ? kBlobColors : 2);
  return n;
}

// `count` distinct colors drawn uniformly from [0, vocab).
std::vector<TokenId> pick_colors(std::size_t count, std::size_t vocab, Rng& rng) {
  std::vector<TokenId> out;
  while (out.size() < count) {
    const auto c = static_cast<TokenId>(rng.uniform_int(vocab));
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

}  // namespace

Sequence render_grid(GridPattern pattern, const GridCorpusSpec& spec, Rng& rng) {
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  Sequence g(h * w);
  if (pattern == GridPattern::kStripes) {
    const auto colors = pick_colors(2, spec.vocab, rng);
    const bool vertical = rng.uniform_int(2) == 0;
    const std::size_t period = 2 + rng.uniform_int(7);
    const std::size_t band = (period + 1) / 2;
    const std::size_t phase = rng.uniform_int(period);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t u = ((vertical ? c : r) + phase) % period;
        g[r * w + c] = colors[u < band ? 0 : 1];
      }
    }
  } else if (pattern == GridPattern::kChecker) {
    const auto colors = pick_colors(2, spec.vocab, rng);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) g[r * w + c] = colors[(r + c) % 2];
    }
  } else {
    const auto colors = pick_colors(kBlobColors, spec.vocab, rng);
    std::vector<std::size_t> cell(h * w);
    for (auto& x : cell) x = rng.uniform_int(kBlobColors);
    // Majority smoothing over the 3x3 neighborhood; ties keep the cell.
    for (int iter = 0; iter < 4; ++iter) {
      std::vector<std::size_t> next = cell;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          std::size_t votes[kBlobColors] = {};
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
              const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
              if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) ||
                  cc >= static_cast<std::ptrdiff_t>(w)) {
                continue;
              }
              ++votes[cell[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)]];
            }
          }
          std::size_t best = cell[r * w + c];
          for (std::size_t k = 0; k < kBlobColors; ++k) {
            if (votes[k] > votes[best]) best = k;
          }
          next[r * w + c] = best;
        }
      }
      cell = std::move(next);
    }
    for (std::size_t i = 0; i < h * w; ++i) g[i] = colors[cell[i]];
  }
  return g;
}

std::vector<Sequence> gen_grid(const GridCorpusSpec& spec, std::size_t num_images, Rng& rng) {
  if (spec.height < 1 || spec.width < 1) throw ConfigError("corpus.height", "grid must be non-empty");
  if (spec.patterns.empty()) throw ConfigError("corpus.patterns", "at least one pattern required");
  if (spec.vocab < colors_needed(spec.patterns)) {
    throw ConfigError("corpus.vocab_size", "vocabulary smaller than the number of pattern colors (" +
                                               std::to_string(colors_needed(spec.patterns)) + ")");
  }
  std::vector<Sequence> out;
  out.reserve(num_images);
  for (std::size_t i = 0; i < num_images; ++i) {
    const GridPattern p = spec.patterns[rng.uniform_int(spec.patterns.size())];
    out.push_back(render_grid(p, spec, rng));
  }
  return out;
}

Json corpus_spec_to_json(const CorpusSpec& s) {
  return Json{{"kind", s.kind},          {"vocab_size", s.vocab_size},
              {"num_sequences", s.num_sequences}, {"order", s.order},
              {"sharpness", s.sharpness}, {"seq_len", s.seq_len},
              {"height", s.height},      {"width", s.width},
              {"patterns", s.patterns}};
}

CorpusSpec corpus_spec_from_json(const Json& j, const std::string& path) {
  CorpusSpec s;
  StrictObject o(j, path);
  o.read("kind", s.kind);
  o.read("vocab_size", s.vocab_size);
  o.read("num_sequences", s.num_sequences);
  o.read("order", s.order);
  o.read("sharpness", s.sharpness);
  o.read("seq_len", s.seq_len);
  o.read("height", s.height);
  o.read("width", s.width);
  o.read("patterns", s.patterns);
  o.finish();
  return s;
}

void validate(const CorpusSpec& s) {
  if (s.kind != "markov" && s.kind != "grid") {
    throw ConfigError("corpus.kind", "expected markov|grid, got '" + s.kind + "'");
  }
  if (s.vocab_size < 2) throw ConfigError("corpus.vocab_size", "must be >= 2");
  if (s.num_sequences < 1) throw ConfigError("corpus.num_sequences", "must be >= 1");
  if (s.kind == "markov") {
    if (s.order < 1) throw ConfigError("corpus.order", "must be >= 1");
    if (s.seq_len <= s.order) throw ConfigError("corpus.seq_len", "must exceed the chain order");
  } else {
    if (s.height < 1 || s.width < 1) throw ConfigError("corpus.height", "grid must be non-empty");
    std::vector<GridPattern> pats;
    for (const auto& p : s.patterns) pats.push_back(parse_grid_pattern(p));
    if (pats.empty()) throw ConfigError("corpus.patterns", "at least one pattern required");
    if (s.vocab_size < colors_needed(pats)) {
      throw ConfigError("corpus.vocab_size", "vocabulary smaller than the number of pattern colors");
    }
  }
}

MarkovSource markov_source_for(const CorpusSpec& spec, std::uint64_t seed) {
  return MarkovSource::random(spec.order, spec.vocab_size, spec.sharpness,
                              splitmix64(seed ^ 0x4d41524b4f56ull));
}

Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed, const std::string& config_hash) {
  validate(spec);
  Corpus c;
  c.config_hash = config_hash;
  c.generator = corpus_spec_to_json(spec);
  c.generator["seed"] = seed;
  c.corpus_hash = hex64(fnv1a64(c.generator.dump()));
  Rng rng = Rng::stream(seed, 0);
  if (spec.kind == "markov") {
    c.sequences = gen_markov(markov_source_for(spec, seed), spec.num_sequences, spec.seq_len, rng);
  } else {
    GridCorpusSpec g;
    g.height = spec.height;
    g.width = spec.width;
    g.vocab = spec.vocab_size;
    g.patterns.clear();
    for (const auto& p : spec.patterns) g.patterns.push_back(parse_grid_pattern(p));
    c.sequences = gen_grid(g, spec.num_sequences, rng);
  }
  return c;
}

void write_corpus_jsonl(const std::string& path, const Corpus& corpus) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open corpus for writing");
  const Json header{{"kind", "corpus_header"},
                    {"config_hash", corpus.config_hash},
                    {"corpus_hash", corpus.corpus_hash},
                    {"generator", corpus.generator}};
  f << header.dump() << '\n';
  for (const Sequence& s : corpus.sequences) f << Json{{"tokens", s}}.dump() << '\n';
  if (!f) throw IoError(path, "write failed");
}

Corpus read_corpus_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open corpus");
  Corpus c;
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t offset = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(at, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.is_object() && j.value("kind", "") == "corpus_header") {
      c.config_hash = j.value("config_hash", "");
      c.corpus_hash = j.value("corpus_hash", "");
      if (j.contains("generator")) c.generator = j["generator"];
      continue;
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
      throw FormatError(at, path + " line " + std::to_string(lineno) + ": expected {\"tokens\":[...]}");
    }
    try {
      c.sequences.push_back(j["tokens"].get<Sequence>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(at, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

double mean_run_length(const std::vector<Sequence>& sequences) {
  std::size_t tokens = 0;
  std::size_t runs = 0;
  for (const Sequence& s : sequences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++tokens;
      if (i == 0 || s[i] != s[i - 1]) ++runs;
    }
  }
  return runs == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(runs);
}

}  // namespace jdd
