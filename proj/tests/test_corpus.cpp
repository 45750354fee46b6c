#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "jdd/corpus.hpp"
#include "jdd/error.hpp"
#include "jdd/rng.hpp"

namespace jdd {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("jdd_corpus_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Smallest p with g[i] == g[i + p] along the line, or 0 when none in [1, n).
std::size_t line_period(const std::vector<TokenId>& line) {
  for (std::size_t p = 1; p < line.size(); ++p) {
    bool ok = true;
    for (std::size_t i = 0; i + p < line.size() && ok; ++i) ok = line[i] == line[i + p];
    if (ok) return p;
  }
  return 0;
}

TEST(MarkovSourceTest, CycleIsDeterministic) {
  std::vector<double> t(9, 0.0);
  for (std::size_t r = 0; r < 3; ++r) t[r * 3 + (r + 1) % 3] = 1.0;
  const MarkovSource src(1, 3, t);
  Rng rng(4);
  for (const Sequence& s : gen_markov(src, 20, 12, rng)) {
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_EQ(s[i], (s[i - 1] + 1) % 3);
  }
}

TEST(MarkovSourceTest, RejectsBadInputs) {
  EXPECT_THROW(MarkovSource(1, 2, {0.5, 0.4, 0.5, 0.5}), ConfigError);
  EXPECT_THROW(MarkovSource(1, 2, {0.5, 0.5}), ConfigError);
  EXPECT_THROW(MarkovSource(1, 2, {1.5, -0.5, 0.5, 0.5}), ConfigError);
  const MarkovSource src = MarkovSource::random(2, 3, 1.0, 1);
  Rng rng(1);
  EXPECT_THROW(gen_markov(src, 1, 2, rng), ConfigError);
  EXPECT_THROW(src.next_distribution(std::vector<TokenId>{1}), ShapeError);
  EXPECT_THROW(src.context_index(std::vector<TokenId>{1, 3}), IndexError);
}

TEST(MarkovSourceTest, RandomRowsNormalized) {
  const MarkovSource src = MarkovSource::random(2, 8, 2.0, 7);
  ASSERT_EQ(src.num_contexts(), 64u);
  for (std::size_t r = 0; r < 64; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(src.transitions()[r * 8 + c], 0.0);
      s += src.transitions()[r * 8 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(MarkovSourceTest, NextDistributionMatchesEnumeration) {
  const MarkovSource src = MarkovSource::random(2, 3, 1.5, 2);
  for (TokenId a = 0; a < 3; ++a) {
    for (TokenId b = 0; b < 3; ++b) {
      const std::size_t row = static_cast<std::size_t>(a) * 3 + static_cast<std::size_t>(b);
      const std::vector<TokenId> hist{2, 0, a, b};
      const auto d = src.next_distribution(hist);
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(d[c], src.transitions()[row * 3 + c]);
    }
  }
}

TEST(MarkovSourceTest, EmpiricalBigramsWithinThreeStandardErrors) {
  const MarkovSource src = MarkovSource::random(1, 4, 1.0, 3);
  Rng rng(10);
  const auto seqs = gen_markov(src, 1000, 1000, rng);
  std::vector<double> counts(16, 0.0), rows(4, 0.0);
  for (const Sequence& s : seqs) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      counts[static_cast<std::size_t>(s[i - 1]) * 4 + static_cast<std::size_t>(s[i])] += 1;
      rows[static_cast<std::size_t>(s[i - 1])] += 1;
    }
  }
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double p = src.transitions()[r * 4 + c];
      const double se = std::sqrt(p * (1 - p) / rows[r]);
      EXPECT_LE(std::abs(counts[r * 4 + c] / rows[r] - p), 3 * se + 1e-12) << r << "," << c;
    }
  }
}

TEST(GridTest, StripesArePeriodicAlongOneAxis) {
  GridCorpusSpec spec;
  spec.height = spec.width = 16;
  spec.patterns = {GridPattern::kStripes};
  Rng rng(5);
  bool saw_period_4 = false;
  for (int i = 0; i < 200; ++i) {
    const Sequence g = render_grid(GridPattern::kStripes, spec, rng);
    ASSERT_EQ(g.size(), 256u);
    std::vector<TokenId> row0(g.begin(), g.begin() + 16), col0;
    for (std::size_t r = 0; r < 16; ++r) col0.push_back(g[r * 16]);
    const bool horizontal_bands = line_period(row0) == 1;
    const std::vector<TokenId>& across = horizontal_bands ? col0 : row0;
    const std::size_t p = line_period(across);
    EXPECT_GE(p, 2u);
    EXPECT_LE(p, 8u);
    saw_period_4 |= p == 4;
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t c = 0; c < 16; ++c) {
        EXPECT_EQ(g[r * 16 + c], across[horizontal_bands ? r : c]);
      }
    }
    if (p == 4 && !horizontal_bands) {
      for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c + 4 < 16; ++c) EXPECT_EQ(g[r * 16 + c], g[r * 16 + c + 4]);
      }
    }
  }
  EXPECT_TRUE(saw_period_4);
}

TEST(GridTest, CheckerDependsOnParity) {
  GridCorpusSpec spec;
  spec.height = 6;
  spec.width = 9;
  Rng rng(2);
  const Sequence g = render_grid(GridPattern::kChecker, spec, rng);
  EXPECT_NE(g[0], g[1]);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(g[r * 9 + c], g[(r + c) % 2]);
  }
}

TEST(GridTest, BlobsUseAtMostThreeColors) {
  GridCorpusSpec spec;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Sequence g = render_grid(GridPattern::kBlobs, spec, rng);
    EXPECT_LE(std::set<TokenId>(g.begin(), g.end()).size(), kBlobColors);
    for (TokenId t : g) EXPECT_LT(t, 16);
  }
}

TEST(GridTest, StripesMeanRunLength) {
  GridCorpusSpec spec;
  spec.patterns = {GridPattern::kStripes};
  Rng rng(1);
  const auto seqs = gen_grid(spec, 500, rng);
  // Run-length oracle: tokens / number of value changes (+1 per sequence).
  std::size_t tokens = 0, runs = 0;
  for (const Sequence& s : seqs) {
    tokens += s.size();
    runs += 1;
    for (std::size_t i = 1; i < s.size(); ++i) runs += s[i] != s[i - 1];
  }
  EXPECT_DOUBLE_EQ(mean_run_length(seqs), double(tokens) / double(runs));
  EXPECT_GE(mean_run_length(seqs), 3.0);
}

TEST(GridTest, VocabTooSmall) {
  GridCorpusSpec spec;
  spec.vocab = 2;
  Rng rng(1);
  EXPECT_THROW(gen_grid(spec, 1, rng), ConfigError);
  spec.patterns = {GridPattern::kStripes, GridPattern::kChecker};
  EXPECT_NO_THROW(gen_grid(spec, 1, rng));
  EXPECT_THROW(parse_grid_pattern("waves"), ConfigError);
}

TEST(CorpusSpecTest, JsonAndValidation) {
  CorpusSpec s;
  s.kind = "markov";
  s.vocab_size = 8;
  const CorpusSpec back = corpus_spec_from_json(corpus_spec_to_json(s));
  EXPECT_EQ(corpus_spec_to_json(back), corpus_spec_to_json(s));
  Json bad = corpus_spec_to_json(s);
  bad["noise"] = 1;
  try {
    corpus_spec_from_json(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "corpus.noise");
  }
  s.kind = "text";
  EXPECT_THROW(validate(s), ConfigError);
  s.kind = "markov";
  s.seq_len = 2;
  EXPECT_THROW(validate(s), ConfigError);
}

TEST(CorpusFileTest, ByteIdenticalFromSpecAndSeed) {
  for (const std::string kind : {"markov", "grid"}) {
    CorpusSpec s;
    s.kind = kind;
    s.vocab_size = 8;
    s.num_sequences = 50;
    const std::string a = temp_path("a.jsonl"), b = temp_path("b.jsonl");
    write_corpus_jsonl(a, generate_corpus(s, 11, "h"));
    write_corpus_jsonl(b, generate_corpus(s, 11, "h"));
    EXPECT_EQ(slurp(a), slurp(b));
    write_corpus_jsonl(b, generate_corpus(s, 12, "h"));
    EXPECT_NE(slurp(a), slurp(b));
    const Corpus back = read_corpus_jsonl(a);
    const Corpus orig = generate_corpus(s, 11, "h");
    EXPECT_EQ(back.sequences, orig.sequences);
    EXPECT_EQ(back.corpus_hash, orig.corpus_hash);
    EXPECT_EQ(back.config_hash, "h");
    EXPECT_NE(generate_corpus(s, 12, "h").corpus_hash, orig.corpus_hash);
    fs::remove(a);
    fs::remove(b);
  }
}

TEST(CorpusFileTest, ReadErrors) {
  const std::string p = temp_path("bad.jsonl");
  EXPECT_THROW(read_corpus_jsonl(p), IoError);
  { std::ofstream(p) << "{\"tokens\":[1,2]}\n{\"toks\":[1]}\n"; }
  EXPECT_THROW(read_corpus_jsonl(p), FormatError);
  { std::ofstream(p) << "{\"tokens\":[1,2]}\n[1,2\n"; }
  try {
    read_corpus_jsonl(p);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 17u);
  }
  { std::ofstream(p) << "{\"tokens\":[1,\"x\"]}\n"; }
  EXPECT_THROW(read_corpus_jsonl(p), FormatError);
  fs::remove(p);
}

}  // namespace
}  // namespace jdd
