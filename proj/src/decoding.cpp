#include "jdd/decoding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "jdd/error.hpp"

namespace jdd {

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "ar") return DecodeMode::kAr;
  if (name == "jacobi") return DecodeMode::kJacobi;
  if (name == "sjd") return DecodeMode::kSjd;
  if (name == "sjd2") return DecodeMode::kSjd2;
  throw ConfigError("decode.mode", "unknown mode '" + name + "' (expected ar|jacobi|sjd|sjd2)");
}

std::string decode_mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::kAr:
      return "ar";
    case DecodeMode::kJacobi:
      return "jacobi";
    case DecodeMode::kSjd:
      return "sjd";
    case DecodeMode::kSjd2:
      return "sjd2";
  }
  return "sjd2";
}

AcceptanceMode parse_acceptance_mode(const std::string& name) {
  if (name == "strict" || name == "strict_speculative") return AcceptanceMode::kStrict;
  if (name == "threshold") return AcceptanceMode::kThreshold;
  throw ConfigError("decode.acceptance", "unknown acceptance mode '" + name +
                                             "' (expected strict|threshold)");
}

std::string acceptance_mode_name(AcceptanceMode m) {
  return m == AcceptanceMode::kStrict ? "strict" : "threshold";
}

Json decode_config_to_json(const DecodeConfig& c) {
  return Json{{"mode", decode_mode_name(c.mode)},
              {"window", c.window},
              {"steps", c.steps},
              {"temperature", c.temperature},
              {"top_k", c.top_k},
              {"acceptance", acceptance_mode_name(c.acceptance)},
              {"require_clean", c.require_clean},
              {"immediate_accept", c.immediate_accept},
              {"normalize", c.normalize},
              {"max_forwards", c.max_forwards},
              {"seed", c.seed}};
}

DecodeConfig decode_config_from_json(const Json& j, const std::string& path) {
  DecodeConfig c;
  StrictObject o(j, path);
  std::string mode = decode_mode_name(c.mode);
  std::string acceptance = acceptance_mode_name(c.acceptance);
  o.read("mode", mode);
  o.read("window", c.window);
  o.read("steps", c.steps);
  o.read("temperature", c.temperature);
  o.read("top_k", c.top_k);
  o.read("acceptance", acceptance);
  o.read("require_clean", c.require_clean);
  o.read("immediate_accept", c.immediate_accept);
  o.read("normalize", c.normalize);
  o.read("max_forwards", c.max_forwards);
  o.read("seed", c.seed);
  o.finish();
  c.mode = parse_decode_mode(mode);
  c.acceptance = parse_acceptance_mode(acceptance);
  return c;
}

void validate(const DecodeConfig& c) {
  if (c.window < 1) throw ConfigError("decode.window", "window length L must be >= 1");
  if (c.steps < 1) throw ConfigError("decode.steps", "denoising steps T must be >= 1");
  if (!(c.temperature >= 0.0) || !std::isfinite(c.temperature)) {
    throw ConfigError("decode.temperature", "must be finite and >= 0");
  }
  if (c.mode == DecodeMode::kJacobi && c.temperature > 0.0) {
    throw ConfigError("decode.temperature", "jacobi decoding is defined for greedy (temperature 0) only");
  }
}

std::vector<Level> JacobiWindow::levels() const {
  std::vector<Level> out;
  out.reserve(slots.size());
  for (const WindowSlot& s : slots) out.push_back(s.k);
  return out;
}

bool JacobiWindow::monotone() const { return levels_monotone(levels()); }

namespace {

Vec uniform_dist(std::size_t v) { return Vec(v, 1.0 / static_cast<double>(v)); }

TokenId project(const Vec& e, const WindowContext& ctx) {
  return ctx.normalize ? ctx.table->nearest_token(e, ctx.vocab)
                       : ctx.table->nearest_token_raw(e, ctx.vocab);
}

Vec clean_target(TokenId x, const WindowContext& ctx) {
  if (ctx.normalize) return ctx.table->token_to_normalized_embedding(x);
  const auto row = ctx.table->row(x);
  return Vec(row.begin(), row.end());
}

TokenId sample(const Vec& p, Rng& rng) { return static_cast<TokenId>(rng.categorical(p)); }

TokenId argmax(std::span<const double> v) {
  return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_normalized(const Vec& p) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ContractViolation("verify_prefix: negative or NaN probability");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw ContractViolation("verify_prefix: probabilities sum to " + std::to_string(s));
  }
}

}  // namespace

WindowSlot fresh_noise_slot(const WindowContext& ctx, Rng& rng) {
  WindowSlot s;
  s.embedding.resize(ctx.table->dim());
  for (double& x : s.embedding) x = rng.normal();
  s.k = 0;
  s.draft = project(s.embedding, ctx);
  s.draft_dist = uniform_dist(ctx.vocab);
  s.draft_prob = s.draft_dist[static_cast<std::size_t>(s.draft)];
  return s;
}

JacobiWindow init_window(std::size_t length, const WindowContext& ctx, Rng& rng) {
  if (length < 1) throw ContractViolation("init_window: L must be >= 1");
  JacobiWindow w;
  for (std::size_t i = 0; i < length; ++i) w.slots.push_back(fresh_noise_slot(ctx, rng));
  return w;
}

Vec probabilities(std::span<const double> logits, double temperature, std::size_t top_k) {
  const std::size_t v = logits.size();
  Vec p(v, 0.0);
  if (v == 0) return p;
  if (temperature == 0.0) {
    p[static_cast<std::size_t>(argmax(logits))] = 1.0;
    return p;
  }
  std::vector<std::size_t> keep(v);
  std::iota(keep.begin(), keep.end(), 0);
  if (top_k != 0 && top_k < v) {
    std::stable_sort(keep.begin(), keep.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    keep.resize(top_k);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i : keep) mx = std::max(mx, logits[i] / temperature);
  double sum = 0.0;
  for (std::size_t i : keep) {
    p[i] = std::exp(logits[i] / temperature - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

VerifyResult verify_prefix(const std::vector<Vec>& probs, const JacobiWindow& window, Rng& rng,
                           const VerifyOptions& opt) {
  if (probs.size() != window.slots.size()) {
    throw ContractViolation("verify_prefix: one distribution per slot required");
  }
  const std::size_t len = window.slots.size();
  VerifyResult res;
  for (std::size_t i = 0; i < len; ++i) {
    const WindowSlot& s = window.slots[i];
    const Vec& p = probs[i];
    check_normalized(p);
    if (opt.require_clean && s.k != kClean) break;
    if (opt.immediate_accept && s.k == kClean && i * opt.steps < len) {
      ++res.n_accept;
      continue;
    }
    const auto d = static_cast<std::size_t>(s.draft);
    const double q = s.draft_prob;
    const double ratio = q > 0.0 ? p[d] / q : (p[d] > 0.0 ? 1.0 : 0.0);
    const double r = rng.uniform();
    if (r < std::min(1.0, ratio)) {
      ++res.n_accept;
      continue;
    }
    if (opt.acceptance == AcceptanceMode::kStrict) {
      Vec residual(p.size(), 0.0);
      double mass = 0.0;
      for (std::size_t v = 0; v < p.size(); ++v) {
        const double qv = s.draft_dist.size() == p.size() ? s.draft_dist[v] : 0.0;
        residual[v] = std::max(0.0, p[v] - qv);
        mass += residual[v];
      }
      res.emitted = mass > 0.0 ? sample(residual, rng) : sample(p, rng);
    }
    break;
  }
  return res;
}

void refine(JacobiWindow& window, const std::vector<SlotPrediction>& predictions,
            const WindowContext& ctx) {
  if (predictions.size() != window.slots.size()) {
    throw ContractViolation("refine: one prediction per slot required");
  }
  for (std::size_t i = 0; i < window.slots.size(); ++i) {
    WindowSlot& s = window.slots[i];
    const SlotPrediction& pred = predictions[i];
    if (pred.probs.size() != ctx.vocab) throw ContractViolation("refine: prediction size mismatch");
    if (s.k != kClean) {
      const Vec target = clean_target(pred.sampled, ctx);
      const bool terminal = ctx.grid->is_terminal(s.k);
      s.embedding = denoise_step(s.embedding, target, s.k, *ctx.grid, ctx.coeffs);
      if (terminal) {
        s.k = kClean;
        s.draft = pred.sampled;
      } else {
        s.k += 1;
        s.draft = project(s.embedding, ctx);
      }
    } else {
      const auto d = static_cast<std::size_t>(s.draft);
      const double ratio = s.draft_prob > 0.0 ? pred.probs[d] / s.draft_prob : 1.0;
      if (std::min(1.0, ratio) < 0.5) {
        s.draft = pred.sampled;
        s.embedding = clean_target(pred.sampled, ctx);
      }
    }
    s.draft_dist = pred.probs;
    s.draft_prob = s.draft_dist[static_cast<std::size_t>(s.draft)];
  }
}

void slide_and_refill(JacobiWindow& window, std::size_t n_accept, const WindowContext& ctx,
                      Rng& rng) {
  if (n_accept > window.slots.size()) {
    throw ContractViolation("slide_and_refill: n_accept " + std::to_string(n_accept) +
                            " exceeds window length " + std::to_string(window.slots.size()));
  }
  window.slots.erase(window.slots.begin(),
                     window.slots.begin() + static_cast<std::ptrdiff_t>(n_accept));
  for (std::size_t i = 0; i < n_accept; ++i) window.slots.push_back(fresh_noise_slot(ctx, rng));
  window.start += n_accept;
}

std::size_t effective_max_forwards(const DecodeConfig& c, std::size_t n) {
  if (c.max_forwards != 0) return c.max_forwards;
  return 4 * (n + static_cast<std::size_t>(c.steps) + c.window) + 16;
}

namespace {

using Clock = std::chrono::steady_clock;

class Engine {
 public:
  Engine(const AutoregressiveModel& model, const std::vector<TokenId>& prompt, std::size_t n,
         const DecodeConfig& cfg, const Schedule& schedule, Rng& rng)
      : model_(model), n_(n), cfg_(cfg), schedule_(schedule), rng_(rng),
        session_(model.new_session()) {
    ctx_.table = &model.embeddings();
    ctx_.vocab = model.vocab_size();
    ctx_.grid = &schedule.grid;
    ctx_.coeffs = schedule.coeffs;
    ctx_.normalize = cfg.normalize;
    pending_.push_back(model.bos_token());
    for (TokenId t : prompt) {
      if (t < 0 || static_cast<std::size_t>(t) >= ctx_.vocab) {
        throw IndexError("prompt token " + std::to_string(t) + " outside vocabulary");
      }
      pending_.push_back(t);
    }
    result_.trace.mode = decode_mode_name(cfg.mode);
    result_.trace.prompt = prompt;
    result_.trace.n = n;
    result_.trace.seed = cfg.seed;
    max_forwards_ = effective_max_forwards(cfg, n);
  }

  DecodeResult run() {
    if (cfg_.mode == DecodeMode::kAr) {
      run_ar();
    } else {
      run_window();
    }
    return std::move(result_);
  }

 private:
  Logits forward(const ForwardInput& in) {
    if (result_.forwards >= max_forwards_) {
      throw TruncationError("decode stopped at max_forwards=" + std::to_string(max_forwards_) +
                                " with " + std::to_string(result_.tokens.size()) + "/" +
                                std::to_string(n_) + " tokens",
                            result_);
    }
    const auto t0 = Clock::now();
    Logits out = session_->forward(in);
    result_.wall_time_ms +=
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    ++result_.forwards;
    if (!in.prefix_tokens.empty()) {
      const auto row = out.row(in.prefix_tokens.size() - 1);
      last_prefix_row_.assign(row.begin(), row.end());
    }
    return out;
  }

  void commit(const std::vector<TokenId>& accepted, TraceRecord rec) {
    const std::size_t keep = std::min(accepted.size(), n_ - result_.tokens.size());
    result_.tokens.insert(result_.tokens.end(), accepted.begin(),
                          accepted.begin() + static_cast<std::ptrdiff_t>(keep));
    result_.acceptance_lengths.push_back(keep);
    result_.trace.records.push_back(std::move(rec));
    pending_ = accepted;
  }

  void run_ar() {
    while (result_.tokens.size() < n_) {
      ForwardInput in;
      in.prefix_tokens = pending_;
      forward(in);
      const Vec p = probabilities(last_prefix_row_, cfg_.temperature, cfg_.top_k);
      const TokenId x = sample(p, rng_);
      TraceRecord rec;
      rec.iter = result_.trace.records.size();
      rec.start = result_.tokens.size();
      rec.emitted = x;
      commit({x}, std::move(rec));
    }
  }

  WindowSlot clean_slot(TokenId x) const {
    WindowSlot s;
    s.k = kClean;
    s.draft = x;
    s.draft_dist = uniform_dist(ctx_.vocab);
    s.draft_prob = s.draft_dist[static_cast<std::size_t>(x)];
    return s;
  }

  JacobiWindow initial_window() {
    if (cfg_.mode == DecodeMode::kSjd2) return init_window(cfg_.window, ctx_, rng_);
    JacobiWindow w;
    for (std::size_t i = 0; i < cfg_.window; ++i) {
      w.slots.push_back(clean_slot(static_cast<TokenId>(rng_.uniform_int(ctx_.vocab))));
    }
    return w;
  }

  void refill(JacobiWindow& w, std::size_t count) {
    if (cfg_.mode == DecodeMode::kSjd2) {
      slide_and_refill(w, count, ctx_, rng_);
      return;
    }
    w.slots.erase(w.slots.begin(), w.slots.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
      w.slots.push_back(clean_slot(static_cast<TokenId>(rng_.uniform_int(ctx_.vocab))));
    }
    w.start += count;
  }

  ForwardInput window_input(const JacobiWindow& w) const {
    ForwardInput in;
    in.prefix_tokens = pending_;
    in.grid = &schedule_.grid;
    for (const WindowSlot& s : w.slots) {
      if (cfg_.mode != DecodeMode::kSjd2 || s.k == kClean) {
        // Clean slots carry exact table rows.
        const auto row = ctx_.table->row(s.draft);
        in.window_embeddings.emplace_back(row.begin(), row.end());
      } else if (cfg_.normalize) {
        in.window_embeddings.push_back(ctx_.table->denormalize(s.embedding));
      } else {
        in.window_embeddings.push_back(s.embedding);
      }
      in.window_levels.push_back(s.k);
    }
    return in;
  }

  void run_window() {
    JacobiWindow w = initial_window();
    VerifyOptions vopt;
    vopt.acceptance = cfg_.acceptance;
    vopt.require_clean = cfg_.require_clean;
    vopt.immediate_accept = cfg_.immediate_accept && cfg_.mode == DecodeMode::kSjd2;
    vopt.steps = static_cast<std::size_t>(cfg_.steps);
    const bool greedy = cfg_.mode == DecodeMode::kJacobi;

    while (result_.tokens.size() < n_) {
      const ForwardInput in = window_input(w);
      const Logits logits = forward(in);
      const std::size_t np = in.prefix_tokens.size();
      const std::size_t len = w.slots.size();

      std::vector<SlotPrediction> preds(len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::span<const double> row =
            i == 0 ? std::span<const double>(last_prefix_row_) : logits.row(np + i - 1);
        preds[i].probs = greedy ? probabilities(row, 0.0, 0)
                                : probabilities(row, cfg_.temperature, cfg_.top_k);
      }
      if (greedy) {
        for (auto& p : preds) p.sampled = argmax(p.probs);
      } else {
        for (auto& p : preds) p.sampled = sample(p.probs, rng_);
      }

      TraceRecord rec;
      rec.iter = result_.trace.records.size();
      rec.start = w.start;
      for (const WindowSlot& s : w.slots) {
        rec.tokens.push_back(s.draft);
        rec.levels.push_back(s.k);
      }

      VerifyResult vr;
      if (greedy) {
        while (vr.n_accept < len && w.slots[vr.n_accept].draft == preds[vr.n_accept].sampled) {
          ++vr.n_accept;
        }
        if (vr.n_accept < len) vr.emitted = preds[vr.n_accept].sampled;
      } else {
        std::vector<Vec> probs(len);
        for (std::size_t i = 0; i < len; ++i) probs[i] = preds[i].probs;
        vr = verify_prefix(probs, w, rng_, vopt);
      }
      rec.n_accept = vr.n_accept;
      rec.emitted = vr.emitted;

      std::vector<TokenId> accepted;
      for (std::size_t i = 0; i < vr.n_accept; ++i) accepted.push_back(w.slots[i].draft);
      if (vr.emitted) accepted.push_back(*vr.emitted);

      if (cfg_.mode == DecodeMode::kSjd2) {
        refine(w, preds, ctx_);
      } else {
        for (std::size_t i = vr.n_accept; i < len; ++i) {
          WindowSlot& s = w.slots[i];
          s.draft = preds[i].sampled;
          s.draft_dist = preds[i].probs;
          s.draft_prob = s.draft_dist[static_cast<std::size_t>(s.draft)];
        }
      }
      commit(accepted, std::move(rec));
      refill(w, accepted.size());
      if (!w.monotone() || w.slots.size() != cfg_.window) {
        throw ContractViolation("window invariant violated after slide");
      }
    }
  }

  const AutoregressiveModel& model_;
  std::size_t n_;
  const DecodeConfig& cfg_;
  const Schedule& schedule_;
  Rng& rng_;
  std::unique_ptr<ModelSession> session_;
  WindowContext ctx_;
  std::vector<TokenId> pending_;
  Vec last_prefix_row_;
  DecodeResult result_;
  std::size_t max_forwards_ = 0;
};

}  // namespace

DecodeResult decode_session(const AutoregressiveModel& model, const std::vector<TokenId>& prompt,
                            std::size_t n, const DecodeConfig& config, const Schedule& schedule,
                            Rng& rng) {
  validate(config);
  if (n < 1) throw ConfigError("decode.n", "must request at least one token");
  if (config.mode == DecodeMode::kSjd2 &&
      schedule.grid.size() != static_cast<std::size_t>(config.steps)) {
    throw ConfigError("decode.steps", "T=" + std::to_string(config.steps) +
                                          " does not match the schedule grid size " +
                                          std::to_string(schedule.grid.size()));
  }
  const std::size_t window = config.mode == DecodeMode::kAr ? 0 : config.window;
  const std::size_t need = 1 + prompt.size() + n + window;
  if (need > model.context_len()) {
    throw CapacityError("prompt + N + window needs " + std::to_string(need) +
                        " positions, context is " + std::to_string(model.context_len()));
  }
  Engine engine(model, prompt, n, config, schedule, rng);
  return engine.run();
}

std::vector<TokenId> replay_trace(const DecodeTrace& trace) {
  std::vector<TokenId> out;
  for (const TraceRecord& r : trace.records) {
    if (r.n_accept > r.tokens.size()) throw ContractViolation("trace record accepts past window");
    out.insert(out.end(), r.tokens.begin(), r.tokens.begin() + static_cast<std::ptrdiff_t>(r.n_accept));
    if (r.emitted) out.push_back(*r.emitted);
  }
  if (out.size() > trace.n) out.resize(trace.n);
  return out;
}

void write_trace_jsonl(const std::string& path, const DecodeTrace& trace) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open trace for writing");
  f << Json{{"kind", "trace_header"},
            {"config_hash", trace.config_hash},
            {"mode", trace.mode},
            {"prompt", trace.prompt},
            {"n", trace.n},
            {"seed", trace.seed}}
           .dump()
    << '\n';
  for (const TraceRecord& r : trace.records) {
    Json j{{"iter", r.iter}, {"start", r.start}, {"n_accept", r.n_accept}};
    j["emitted"] = r.emitted ? Json(*r.emitted) : Json(nullptr);
    j["tokens"] = r.tokens;
    j["levels"] = r.levels;
    f << j.dump() << '\n';
  }
  if (!f) throw IoError(path, "write failed");
}

DecodeTrace read_trace_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open trace");
  DecodeTrace t;
  std::string line;
  std::uint64_t offset = 0;
  bool header = false;
  while (std::getline(f, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      if (!header) {
        if (j.value("kind", "") != "trace_header") throw FormatError(at, "missing trace header");
        t.config_hash = j.at("config_hash").get<std::string>();
        t.mode = j.at("mode").get<std::string>();
        t.prompt = j.at("prompt").get<std::vector<TokenId>>();
        t.n = j.at("n").get<std::size_t>();
        t.seed = j.at("seed").get<std::uint64_t>();
        header = true;
        continue;
      }
      TraceRecord r;
      r.iter = j.at("iter").get<std::size_t>();
      r.start = j.at("start").get<std::size_t>();
      r.n_accept = j.at("n_accept").get<std::size_t>();
      if (!j.at("emitted").is_null()) r.emitted = j.at("emitted").get<TokenId>();
      r.tokens = j.at("tokens").get<std::vector<TokenId>>();
      r.levels = j.at("levels").get<std::vector<Level>>();
      t.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(at, path + ": " + e.what());
    }
  }
  if (!header) throw FormatError(0, path + ": empty trace");
  return t;
}

}  // namespace jdd
