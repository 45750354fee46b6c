#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>

#include <CLI11.hpp>

#include "jdd/bench_metrics.hpp"
#include "jdd/corpus.hpp"
#include "jdd/decoding.hpp"
#include "jdd/error.hpp"
#include "jdd/hash.hpp"
#include "jdd/run_config.hpp"
#include "jdd/toy_model.hpp"
#include "jdd/training.hpp"

namespace jdd::cli {

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  2  usage error (bad flags or subcommand)\n"
    "  3  invalid configuration value\n"
    "  4  missing or unwritable file\n"
    "  5  corrupt or malformed input file\n"
    "  6  config hash or vocabulary mismatch between inputs\n"
    "  7  decode stopped by the forward-pass cap (partial outputs written)\n"
    "  8  violated precondition or capacity limit\n"
    "  9  non-finite loss or gradient during training\n"
    " 10  internal error\n"
    "Errors are printed to stderr as one JSON line: {\"error\",\"exit_code\",\"message\"}.";

// Held-out prompts come from sequences generated after the training ones.
constexpr std::size_t kHeldOutSequences = 256;

ReportFormat format_for(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? ReportFormat::kCsv
                                                                     : ReportFormat::kJson;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& field) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(field, "not a non-negative integer: '" + s + "'");
  }
  if (pos != s.size() || s.front() == '-') {
    throw ConfigError(field, "not a non-negative integer: '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

// Runs body(i) for i in [0, count) on up to session_threads() threads. The
// exception of the lowest failing index is rethrown.
void parallel_sessions(std::size_t count, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(count);
  const int threads = static_cast<int>(std::min(session_threads(), std::max<std::size_t>(count, 1)));
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (std::size_t i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct DecodeFlags {
  std::string ckpt;
  std::vector<std::string> extra_ckpts;
  std::string config;
  std::string corpus;
  std::string mode;
  std::size_t prompt_len = 0;
  std::size_t n = 64;
  std::size_t window = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  bool no_normalize = false;
  bool immediate_accept = false;
  bool require_clean = false;
  std::string acceptance;
  double temperature = 1.0;
  std::size_t top_k = 0;
  std::size_t max_forwards = 0;

  CLI::Option* mode_opt = nullptr;
  CLI::Option* window_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* acceptance_opt = nullptr;
  CLI::Option* temperature_opt = nullptr;
  CLI::Option* top_k_opt = nullptr;
  CLI::Option* max_forwards_opt = nullptr;
};

void add_decode_flags(CLI::App* sub, DecodeFlags& f, bool with_mode, bool with_window_steps) {
  sub->add_option("--ckpt", f.ckpt, "Checkpoint file")->required();
  sub->add_option("--config", f.config,
                  "Run configuration; its hash must match the checkpoint (default: embedded)");
  sub->add_option("--corpus", f.corpus,
                  "Corpus JSONL to draw prompts from (default: held-out sequences of the "
                  "configured generator)");
  if (with_mode) f.mode_opt = sub->add_option("--mode", f.mode, "ar|jacobi|sjd|sjd2");
  sub->add_option("--prompt-len", f.prompt_len, "Prompt tokens taken from a corpus sequence");
  sub->add_option("--n", f.n, "Tokens to generate")->check(CLI::PositiveNumber);
  if (with_window_steps) {
    f.window_opt = sub->add_option("--window", f.window, "Jacobi window length L");
    f.steps_opt = sub->add_option("--steps", f.steps, "Denoising steps T");
  }
  f.seed_opt = sub->add_option("--seed", f.seed, "Decode seed (first seed for multi-run commands)");
  sub->add_flag("--no-normalize", f.no_normalize, "Add noise in raw embedding space");
  sub->add_flag("--immediate-accept", f.immediate_accept,
                "Accept fully denoised slots whose offset is below L/T");
  sub->add_flag("--require-clean", f.require_clean, "Only CLEAN slots may be accepted");
  f.acceptance_opt = sub->add_option("--acceptance", f.acceptance, "strict|threshold");
  f.temperature_opt = sub->add_option("--temperature", f.temperature, "0 selects greedy decoding");
  f.top_k_opt = sub->add_option("--top-k", f.top_k, "0 keeps the whole vocabulary");
  f.max_forwards_opt = sub->add_option("--max-forwards", f.max_forwards, "Forward-pass cap");
}

struct DecodeContext {
  LoadedCheckpoint ckpt;
  RunConfig run;
  std::string hash;
  Schedule schedule;
  std::vector<Sequence> prompts;
};

RunConfig config_for_checkpoint(const LoadedCheckpoint& ckpt, const std::string& config_path) {
  if (!config_path.empty()) {
    RunConfig run = load_run_config(config_path);
    const std::string h = config_hash(run);
    if (h != ckpt.meta.config_hash) {
      throw ConfigMismatchError("config " + config_path + " hashes to " + h +
                                " but the checkpoint was produced by " + ckpt.meta.config_hash);
    }
    return run;
  }
  if (ckpt.meta.run_config.is_null()) {
    throw ConfigError("config", "checkpoint has no embedded run configuration; pass --config");
  }
  return run_config_from_json(ckpt.meta.run_config);
}

void apply_overrides(RunConfig& run, const DecodeFlags& f) {
  DecodeConfig& d = run.decode;
  if (f.mode_opt && f.mode_opt->count()) d.mode = parse_decode_mode(f.mode);
  if (f.window_opt && f.window_opt->count()) d.window = f.window;
  if (f.steps_opt && f.steps_opt->count()) {
    d.steps = f.steps;
    run.schedule.steps = f.steps;
  }
  if (f.seed_opt->count()) d.seed = f.seed;
  if (f.no_normalize) d.normalize = false;
  if (f.immediate_accept) d.immediate_accept = true;
  if (f.require_clean) d.require_clean = true;
  if (f.acceptance_opt->count()) d.acceptance = parse_acceptance_mode(f.acceptance);
  if (f.temperature_opt->count()) d.temperature = f.temperature;
  if (f.top_k_opt->count()) d.top_k = f.top_k;
  if (f.max_forwards_opt->count()) d.max_forwards = f.max_forwards;
}

std::vector<Sequence> prompt_pool(const RunConfig& run, const std::string& corpus_path) {
  if (!corpus_path.empty()) return read_corpus_jsonl(corpus_path).sequences;
  CorpusSpec spec = run.corpus;
  const std::size_t train = spec.num_sequences;
  spec.num_sequences = train + kHeldOutSequences;
  Corpus c = generate_corpus(spec, run.seed, "");
  return {c.sequences.begin() + static_cast<std::ptrdiff_t>(train), c.sequences.end()};
}

DecodeContext open_decode(const DecodeFlags& f) {
  DecodeContext ctx;
  ctx.ckpt = load_checkpoint(f.ckpt);
  ctx.run = config_for_checkpoint(ctx.ckpt, f.config);
  ctx.hash = ctx.ckpt.meta.config_hash;
  apply_overrides(ctx.run, f);
  validate(ctx.run);
  ctx.schedule = build_schedule(ctx.run.schedule);
  if (f.prompt_len > 0) {
    ctx.prompts = prompt_pool(ctx.run, f.corpus);
    if (ctx.prompts.empty()) throw ConfigError("corpus", "no prompt sequences available");
  }
  return ctx;
}

std::vector<TokenId> prompt_for(const DecodeContext& ctx, std::size_t prompt_len,
                                std::uint64_t seed) {
  if (prompt_len == 0) return {};
  const Sequence& s = ctx.prompts[seed % ctx.prompts.size()];
  if (s.size() < prompt_len) {
    throw ConfigError("prompt-len", "corpus sequence has only " + std::to_string(s.size()) +
                                        " tokens, " + std::to_string(prompt_len) + " requested");
  }
  for (TokenId t : s) {
    if (t < 0 || static_cast<std::size_t>(t) >= ctx.ckpt.model.vocab_size()) {
      throw ConfigMismatchError("prompt token " + std::to_string(t) +
                                " is outside the checkpoint vocabulary");
    }
  }
  return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(prompt_len)};
}

DecodeResult run_session(const AutoregressiveModel& model, const DecodeContext& ctx,
                         DecodeConfig cfg, const Schedule& schedule, std::size_t prompt_len,
                         std::size_t n, std::uint64_t seed) {
  cfg.seed = seed;
  Rng rng = Rng::stream(seed, 0);
  DecodeResult r = decode_session(model, prompt_for(ctx, prompt_len, seed), n, cfg, schedule, rng);
  r.trace.config_hash = ctx.hash;
  return r;
}

std::string join_tokens(const std::vector<TokenId>& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(t[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenCorpusFlags {
  std::string kind;
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* kind_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

int cmd_gen_corpus(const GenCorpusFlags& f, std::ostream& out) {
  RunConfig run = load_run_config(f.spec);
  if (f.kind_opt->count()) run.corpus.kind = f.kind;
  if (f.seed_opt->count()) run.seed = f.seed;
  validate(run);
  const std::string hash = config_hash(run);
  const Corpus c = generate_corpus(run.corpus, run.seed, hash);
  write_corpus_jsonl(f.out, c);
  std::size_t tokens = 0;
  for (const Sequence& s : c.sequences) tokens += s.size();
  out << Json{{"command", "gen-corpus"},
              {"kind", run.corpus.kind},
              {"sequences", c.sequences.size()},
              {"tokens", tokens},
              {"mean_run_length", mean_run_length(c.sequences)},
              {"config_hash", hash},
              {"corpus_hash", c.corpus_hash}}
             .dump()
      << '\n';
  return 0;
}

struct TrainFlags {
  std::string corpus;
  std::string config;
  std::string out;
  std::string loss_csv;
  bool noise_augment = false;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const RunConfig run = load_run_config(f.config);
  const std::string hash = config_hash(run);
  const Corpus corpus = read_corpus_jsonl(f.corpus);
  for (const Sequence& s : corpus.sequences) {
    for (TokenId t : s) {
      if (t < 0 || static_cast<std::size_t>(t) >= run.model.vocab_size) {
        throw ConfigMismatchError("corpus token " + std::to_string(t) +
                                  " is outside model.vocab_size " +
                                  std::to_string(run.model.vocab_size));
      }
    }
  }
  const Schedule schedule = build_schedule(run.schedule);
  ToyModel model(run.model);
  AdamW opt;
  Rng rng = Rng::stream(run.seed, 1);
  std::vector<LossRecord> records = train_phase(model, opt, corpus.sequences, schedule,
                                                run.training, TrainPhase::kClean,
                                                run.training.pretrain_steps, 0, rng);
  if (f.noise_augment) {
    auto more = train_phase(model, opt, corpus.sequences, schedule, run.training,
                            TrainPhase::kNoisy, run.training.finetune_steps,
                            run.training.pretrain_steps, rng);
    records.insert(records.end(), more.begin(), more.end());
  }
  CheckpointMeta meta;
  meta.step = static_cast<std::int64_t>(records.size());
  meta.config_hash = hash;
  meta.corpus_hash = corpus.corpus_hash;
  meta.run_config = run_config_to_json(run);
  save_checkpoint(model, meta, f.out);
  const std::string loss_csv = !f.loss_csv.empty() ? f.loss_csv : run.outputs.loss_csv;
  if (!loss_csv.empty()) write_loss_csv(loss_csv, records);
  out << Json{{"command", "train"},
              {"steps", records.size()},
              {"noise_augment", f.noise_augment},
              {"final_loss", records.empty() ? 0.0 : records.back().loss},
              {"config_hash", hash},
              {"corpus_hash", corpus.corpus_hash}}
             .dump()
      << '\n';
  return 0;
}

struct DecodeCmdFlags {
  DecodeFlags d;
  std::string report;
  std::string trace;
};

int cmd_decode(const DecodeCmdFlags& f, std::ostream& out) {
  const DecodeContext ctx = open_decode(f.d);
  const std::uint64_t seed = ctx.run.decode.seed;
  const std::string report_path = !f.report.empty() ? f.report : ctx.run.outputs.report;
  const std::string trace_path = !f.trace.empty() ? f.trace : ctx.run.outputs.trace;
  auto write_outputs = [&](const DecodeResult& r) {
    if (!trace_path.empty()) write_trace_jsonl(trace_path, r.trace);
    const RunReport rep = make_report(r, ctx.hash, seed);
    if (!report_path.empty()) write_report(rep, format_for(report_path), report_path);
    return rep;
  };
  try {
    const DecodeResult r = run_session(ctx.ckpt.model, ctx, ctx.run.decode, ctx.schedule,
                                       f.d.prompt_len, f.d.n, seed);
    Json line = report_to_json(write_outputs(r));
    line["command"] = "decode";
    out << line.dump() << '\n';
  } catch (const TruncationError& e) {
    if (e.partial().forwards > 0) write_outputs(e.partial());
    throw;
  }
  return 0;
}

struct CompareFlags {
  DecodeFlags d;
  std::string modes = "ar,sjd2";
  std::size_t seeds = 8;
  std::string report;
  std::string tokens_out;
};

int cmd_compare(const CompareFlags& f, std::ostream& out) {
  const std::vector<std::string> mode_names = split(f.modes, ',');
  if (mode_names.empty()) throw ConfigError("modes", "no modes given");
  if (f.seeds == 0) throw ConfigError("seeds", "must be >= 1");
  std::vector<DecodeMode> modes;
  for (const auto& m : mode_names) modes.push_back(parse_decode_mode(m));

  // One shared checkpoint, or one per mode; every input must come from the
  // same configuration.
  std::vector<std::string> paths{f.d.ckpt};
  paths.insert(paths.end(), f.d.extra_ckpts.begin(), f.d.extra_ckpts.end());
  if (paths.size() != 1 && paths.size() != modes.size()) {
    throw ConfigError("ckpt", "give one checkpoint or one per mode");
  }
  std::vector<DecodeContext> ctxs;
  for (const auto& p : paths) {
    DecodeFlags d = f.d;
    d.ckpt = p;
    ctxs.push_back(open_decode(d));
    if (ctxs.back().hash != ctxs.front().hash) {
      throw ConfigMismatchError("checkpoints " + paths.front() + " and " + p +
                                " come from different configurations (" + ctxs.front().hash +
                                " vs " + ctxs.back().hash + ")");
    }
  }
  const std::uint64_t base = ctxs.front().run.decode.seed;
  const std::size_t total = modes.size() * f.seeds;
  std::vector<RunReport> reports(total);
  parallel_sessions(total, [&](std::size_t i) {
    const std::size_t m = i / f.seeds;
    const DecodeContext& ctx = ctxs[ctxs.size() == 1 ? 0 : m];
    DecodeConfig cfg = ctx.run.decode;
    cfg.mode = modes[m];
    validate(cfg);
    const std::uint64_t seed = base + i % f.seeds;
    const DecodeResult r =
        run_session(ctx.ckpt.model, ctx, cfg, ctx.schedule, f.d.prompt_len, f.d.n, seed);
    reports[i] = make_report(r, ctx.hash, seed);
  });
  if (!f.report.empty()) write_reports(reports, format_for(f.report), f.report);
  Json summary = Json::array();
  bool identical = true;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    double forwards = 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < f.seeds; ++k) {
      const RunReport& r = reports[m * f.seeds + k];
      forwards += static_cast<double>(r.forwards);
      s += r.step_compression;
      if (r.tokens != reports[k].tokens) identical = false;
    }
    summary.push_back({{"mode", mode_names[m]},
                       {"mean_forwards", forwards / static_cast<double>(f.seeds)},
                       {"mean_step_compression", s / static_cast<double>(f.seeds)}});
    if (!f.tokens_out.empty()) {
      const std::string path = f.tokens_out + "." + mode_names[m] + ".txt";
      std::ofstream tf(path, std::ios::binary | std::ios::trunc);
      if (!tf) throw IoError(path, "cannot open token file for writing");
      for (std::size_t k = 0; k < f.seeds; ++k) tf << join_tokens(reports[m * f.seeds + k].tokens) << '\n';
      if (!tf) throw IoError(path, "write failed");
    }
  }
  out << Json{{"command", "compare"},
              {"seeds", f.seeds},
              {"modes", summary},
              {"identical_tokens", identical},
              {"config_hash", ctxs.front().hash}}
             .dump()
      << '\n';
  return 0;
}

struct SweepFlags {
  DecodeFlags d;
  std::string window_grid = "1,2,4,8,16";
  std::string steps_grid = "20";
  std::size_t seeds = 4;
  std::string csv;
};

int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  if (f.seeds == 0) throw ConfigError("seeds", "must be >= 1");
  const DecodeContext ctx = open_decode(f.d);
  std::vector<std::size_t> windows;
  for (const auto& s : split(f.window_grid, ',')) windows.push_back(parse_size(s, "window-grid"));
  std::vector<int> steps;
  for (const auto& s : split(f.steps_grid, ',')) {
    steps.push_back(static_cast<int>(parse_size(s, "steps-grid")));
  }
  if (windows.empty()) throw ConfigError("window-grid", "empty grid");
  if (steps.empty()) throw ConfigError("steps-grid", "empty grid");
  std::vector<SweepRow> rows;
  for (std::size_t L : windows) {
    for (int T : steps) {
      RunConfig run = ctx.run;
      run.decode.window = L;
      run.decode.steps = T;
      run.schedule.steps = T;
      validate(run);
      const Schedule schedule = build_schedule(run.schedule);
      std::vector<DecodeResult> results(f.seeds);
      parallel_sessions(f.seeds, [&](std::size_t k) {
        results[k] = run_session(ctx.ckpt.model, ctx, run.decode, schedule, f.d.prompt_len, f.d.n,
                                 run.decode.seed + k);
      });
      SweepRow row;
      row.window = L;
      row.steps = T;
      double tokens = 0.0;
      for (const auto& r : results) {
        tokens += static_cast<double>(r.tokens.size());
        row.forwards += static_cast<double>(r.forwards);
        row.wall_time_ms += r.wall_time_ms;
      }
      row.step_compression = tokens / row.forwards;
      row.forwards /= static_cast<double>(f.seeds);
      row.wall_time_ms /= static_cast<double>(f.seeds);
      rows.push_back(row);
    }
  }
  write_sweep_csv(f.csv, rows);
  Json jr = Json::array();
  for (const auto& r : rows) {
    jr.push_back({{"L", r.window}, {"T", r.steps}, {"S", r.step_compression}, {"forwards", r.forwards}});
  }
  out << Json{{"command", "sweep"}, {"rows", jr}, {"config_hash", ctx.hash}}.dump() << '\n';
  return 0;
}

struct TrajectoryFlags {
  std::string trace;
  std::string slots = "0..4";
  std::string csv;
};

int cmd_analyze_trajectory(const TrajectoryFlags& f, std::ostream& out) {
  const DecodeTrace trace = read_trace_jsonl(f.trace);
  const TrajectoryResult t = token_change_trajectory(trace, parse_index_list(f.slots, "slots"));
  if (!f.csv.empty()) write_trajectory_csv(f.csv, t);
  out << Json{{"command", "analyze-trajectory"},
              {"mode", trace.mode},
              {"positions", t.positions},
              {"changes", t.changes},
              {"mean_changes", t.mean_changes},
              {"config_hash", trace.config_hash}}
             .dump()
      << '\n';
  return 0;
}

void print_error(std::ostream& err, const std::string& kind, int code, const std::string& msg) {
  err << Json{{"error", kind}, {"exit_code", code}, {"message", msg}}.dump() << '\n';
}

}  // namespace

std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& field) {
  std::vector<std::size_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::size_t lo = parse_size(text.substr(0, dots), field);
    const std::size_t hi = parse_size(text.substr(dots + 2), field);
    if (hi < lo) throw ConfigError(field, "empty range '" + text + "'");
    for (std::size_t i = lo; i <= hi; ++i) out.push_back(i);
    return out;
  }
  for (const auto& s : split(text, ',')) out.push_back(parse_size(s, field));
  if (out.empty()) throw ConfigError(field, "empty list");
  return out;
}

std::size_t session_threads() {
  const char* env = std::getenv("JDD2_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::size_t n = parse_size(env, "JDD2_THREADS");
  if (n == 0) throw ConfigError("JDD2_THREADS", "must be >= 1");
  return n;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative Jacobi-denoising decoding toolkit", "jdd2"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  GenCorpusFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen.kind_opt = gen_cmd->add_option("--kind", gen.kind, "markov|grid (overrides the spec)");
  gen_cmd->add_option("--spec", gen.spec, "Run configuration holding the corpus spec")->required();
  gen_cmd->add_option("--out", gen.out, "Output JSONL")->required();
  gen.seed_opt = gen_cmd->add_option("--seed", gen.seed, "Seed (overrides the config)");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train the toy model");
  train_cmd->add_option("--corpus", train.corpus, "Corpus JSONL")->required();
  train_cmd->add_option("--config", train.config, "Run configuration")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", train.loss_csv, "Per-step loss CSV");
  train_cmd->add_flag("--noise-augment", train.noise_augment,
                      "Follow pretraining with noise-augmented fine-tuning");

  DecodeCmdFlags dec;
  auto* dec_cmd = app.add_subcommand("decode", "Decode one sequence and write a report");
  add_decode_flags(dec_cmd, dec.d, true, true);
  dec_cmd->add_option("--report", dec.report, "Report path (.csv for CSV, JSON otherwise)");
  dec_cmd->add_option("--trace", dec.trace, "Per-iteration trace JSONL");

  CompareFlags cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Paired runs of several modes on shared prompts");
  add_decode_flags(cmp_cmd, cmp.d, false, true);
  cmp_cmd->add_option("--extra-ckpt", cmp.d.extra_ckpts,
                      "Further checkpoints, one per mode after the first");
  cmp_cmd->add_option("--modes", cmp.modes, "Comma-separated modes");
  cmp_cmd->add_option("--seeds", cmp.seeds, "Paired seeds per mode");
  cmp_cmd->add_option("--report", cmp.report, "Report path (.csv for CSV, JSON otherwise)");
  cmp_cmd->add_option("--tokens-out", cmp.tokens_out,
                      "Write <prefix>.<mode>.txt with one token line per seed");

  SweepFlags sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Forwards over a window-length x steps grid");
  add_decode_flags(sw_cmd, sw.d, true, false);
  sw_cmd->add_option("--window-grid", sw.window_grid, "Comma-separated L values");
  sw_cmd->add_option("--steps-grid", sw.steps_grid, "Comma-separated T values");
  sw_cmd->add_option("--seeds", sw.seeds, "Seeds per grid point");
  sw_cmd->add_option("--csv", sw.csv, "Output CSV")->required();

  TrajectoryFlags tr;
  auto* tr_cmd = app.add_subcommand("analyze-trajectory", "Token-change counts from a trace");
  tr_cmd->add_option("--trace", tr.trace, "Trace JSONL")->required();
  tr_cmd->add_option("--slots", tr.slots, "Tracked slots, e.g. 0..4 or 0,2");
  tr_cmd->add_option("--csv", tr.csv, "Output CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", static_cast<int>(ExitCode::kUsage), e.what());
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_corpus(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (dec_cmd->parsed()) return cmd_decode(dec, out);
    if (cmp_cmd->parsed()) return cmd_compare(cmp, out);
    if (sw_cmd->parsed()) return cmd_sweep(sw, out);
    if (tr_cmd->parsed()) return cmd_analyze_trajectory(tr, out);
  } catch (const Error& e) {
    print_error(err, e.kind(), static_cast<int>(e.code()), e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    print_error(err, "internal", static_cast<int>(ExitCode::kInternal), e.what());
    return static_cast<int>(ExitCode::kInternal);
  }
  print_error(err, "usage", static_cast<int>(ExitCode::kUsage), "no subcommand");
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace jdd::cli
