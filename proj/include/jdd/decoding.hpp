#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jdd/error.hpp"
#include "jdd/json_util.hpp"
#include "jdd/rng.hpp"
#include "jdd/schedules.hpp"
#include "jdd/toy_model.hpp"
#include "jdd/types.hpp"

namespace jdd {

enum class DecodeMode { kAr, kJacobi, kSjd, kSjd2 };
enum class AcceptanceMode { kStrict, kThreshold };

DecodeMode parse_decode_mode(const std::string& name);
std::string decode_mode_name(DecodeMode m);
AcceptanceMode parse_acceptance_mode(const std::string& name);
std::string acceptance_mode_name(AcceptanceMode m);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kSjd2;
  std::size_t window = 16;  // L
  int steps = 25;           // T; must match the schedule grid for sjd2
  double temperature = 1.0;  // 0 selects greedy decoding
  std::size_t top_k = 0;     // 0 keeps the whole vocabulary
  AcceptanceMode acceptance = AcceptanceMode::kStrict;
  bool require_clean = false;
  bool immediate_accept = false;
  bool normalize = true;
  std::size_t max_forwards = 0;  // 0 picks a generous cap from N, L and T
  std::uint64_t seed = 0;
};

Json decode_config_to_json(const DecodeConfig& c);
DecodeConfig decode_config_from_json(const Json& j, const std::string& path = "decode");
void validate(const DecodeConfig& c);

struct WindowSlot {
  Vec embedding;         // normalized (raw when normalization is disabled)
  Level k = 0;           // grid index or kClean
  TokenId draft = 0;
  double draft_prob = 0.0;
  Vec draft_dist;        // distribution the draft probability was read from
};

struct JacobiWindow {
  std::vector<WindowSlot> slots;
  std::size_t start = 0;  // generated-token offset of slot 0

  std::vector<Level> levels() const;
  bool monotone() const;
};

// Everything the window operations need besides the window itself.
struct WindowContext {
  const EmbeddingTable* table = nullptr;
  std::size_t vocab = 0;  // sampleable tokens
  const TimestepGrid* grid = nullptr;
  NoiseCoeffs coeffs;
  bool normalize = true;
};

JacobiWindow init_window(std::size_t length, const WindowContext& ctx, Rng& rng);
WindowSlot fresh_noise_slot(const WindowContext& ctx, Rng& rng);

// Next-token probabilities from logits; temperature 0 gives a one-hot
// argmax (lowest index on ties). top_k = 0 keeps every token.
Vec probabilities(std::span<const double> logits, double temperature, std::size_t top_k);

struct VerifyOptions {
  AcceptanceMode acceptance = AcceptanceMode::kStrict;
  bool require_clean = false;
  bool immediate_accept = false;
  std::size_t steps = 1;  // T, for the immediate-acceptance offset bound L/T
};

struct VerifyResult {
  std::size_t n_accept = 0;
  std::optional<TokenId> emitted;
};

// Speculative prefix verification; probs[i] is the current distribution for
// slot i.
VerifyResult verify_prefix(const std::vector<Vec>& probs, const JacobiWindow& window, Rng& rng,
                           const VerifyOptions& options);

struct SlotPrediction {
  Vec probs;
  TokenId sampled = 0;
};

// Denoises noisy slots one grid step toward the sampled tokens and applies
// the 0.5 resampling rule to CLEAN slots.
void refine(JacobiWindow& window, const std::vector<SlotPrediction>& predictions,
            const WindowContext& ctx);

void slide_and_refill(JacobiWindow& window, std::size_t n_accept, const WindowContext& ctx,
                      Rng& rng);

struct TraceRecord {
  std::size_t iter = 0;
  std::size_t start = 0;
  std::size_t n_accept = 0;
  std::optional<TokenId> emitted;
  std::vector<TokenId> tokens;  // slot drafts at verification time
  std::vector<Level> levels;    // -1 for CLEAN
};

struct DecodeTrace {
  std::string config_hash;
  std::string mode;
  std::vector<TokenId> prompt;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
};

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::size_t forwards = 0;
  std::vector<std::size_t> acceptance_lengths;  // tokens kept per iteration
  double wall_time_ms = 0.0;
  DecodeTrace trace;
};

class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, DecodeResult partial)
      : Error(ExitCode::kTruncated, "truncated", what), partial_(std::move(partial)) {}
  const DecodeResult& partial() const { return partial_; }

 private:
  DecodeResult partial_;
};

std::size_t effective_max_forwards(const DecodeConfig& c, std::size_t n);

DecodeResult decode_session(const AutoregressiveModel& model, const std::vector<TokenId>& prompt,
                            std::size_t n, const DecodeConfig& config, const Schedule& schedule,
                            Rng& rng);

// Committed tokens of every iteration, concatenated and cut to trace.n.
std::vector<TokenId> replay_trace(const DecodeTrace& trace);

void write_trace_jsonl(const std::string& path, const DecodeTrace& trace);
DecodeTrace read_trace_jsonl(const std::string& path);

}  // namespace jdd
