// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "jdd/bench_metrics.hpp"
#include "jdd/corpus.hpp"
#include "jdd/decoding.hpp"
#include "jdd/embedding_space.hpp"
#include "jdd/error.hpp"
#include "jdd/rng.hpp"
#include "jdd/run_config.hpp"
#include "jdd/schedules.hpp"
#include "jdd/toy_model.hpp"
#include "jdd/training.hpp"

namespace jdd {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and scales.
constexpr double kIdentityTol = 1e-6;
constexpr std::size_t kEquivSeeds = 100;
constexpr std::size_t kEquivTokens = 128;
constexpr std::size_t kDistSamples = 100000;
constexpr double kDistTvMax = 0.02;
constexpr int kFdParams = 50;
constexpr double kFdStep = 1e-4;
constexpr double kFdRelTol = 1e-3;
constexpr double kLossReduction = 0.30;
constexpr int kMaxFinetuneSteps = 200;
constexpr double kMinSpeedup = 1.5;
constexpr std::size_t kForwardSlack = 5;
constexpr std::size_t kSpeedSeeds = 20;
constexpr std::size_t kFuzzIters = 1000;
constexpr std::size_t kSweepSeeds = 50;
constexpr std::size_t kTrendSeeds = 50;
constexpr double kPlateauBand = 0.10;
constexpr std::size_t kHeldOut = 256;  // matches the CLI's held-out prompt pool

// Grid decoding geometry: one 8-token row of prompt, the remaining 56 tokens
// of the 8x8 image generated.
constexpr std::size_t kGridPrompt = 8;
constexpr std::size_t kGridN = 56;
constexpr std::size_t kGridWindow = 16;
constexpr int kGridSteps = 4;

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "jdd_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_in(const std::string& name) { return (work_dir() / name).string(); }

std::string cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (code != 0) {
    throw std::runtime_error("jdd2 " + args.front() + " exited with " + std::to_string(code) +
                             ": " + err.str());
  }
  return out.str();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Json base_config(std::uint64_t seed) {
  return Json{{"version", kRunConfigVersion},
              {"seed", seed},
              {"schedule", {{"steps", kGridSteps}}},
              {"decode", {{"steps", kGridSteps}}}};
}

Json markov_config() {
  Json c = base_config(5);
  c["model"] = {{"vocab_size", 8}, {"embed_dim", 32}, {"num_layers", 2},
                {"num_heads", 2},  {"context_len", 160}, {"seed", 1}};
  c["training"] = {{"pretrain_steps", 500}, {"finetune_steps", kMaxFinetuneSteps},
                   {"batch_size", 16},      {"lr", 1e-2},
                   {"warmup_steps", 20},    {"window_min", 4},
                   {"window_max", 24},      {"clean_prefix_max", 32}};
  c["decode"]["window"] = 8;
  c["corpus"] = {{"kind", "markov"}, {"vocab_size", 8}, {"num_sequences", 2000},
                 {"order", 2},       {"sharpness", 3.0}, {"seq_len", 64}};
  return c;
}

Json grid_config(bool normalize) {
  Json c = base_config(11);
  c["model"] = {{"vocab_size", 16}, {"embed_dim", 32}, {"num_layers", 2},
                {"num_heads", 2},   {"context_len", 168}, {"seed", 1}};
  c["training"] = {{"pretrain_steps", 400}, {"finetune_steps", 400},
                   {"batch_size", 16},      {"lr", 3e-3},
                   {"warmup_steps", 20},    {"window_min", 4},
                   {"window_max", 24},      {"clean_prefix_max", 40},
                   {"normalize", normalize}};
  c["decode"]["window"] = kGridWindow;
  c["decode"]["normalize"] = normalize;
  c["corpus"] = {{"kind", "grid"}, {"vocab_size", 16}, {"num_sequences", 2000},
                 {"height", 8},    {"width", 8}};
  return c;
}

// Corpus, checkpoint and held-out prompts produced through the CLI.
struct Prepared {
  std::string config_path;
  std::string corpus_path;
  std::string ckpt_path;
  std::string loss_csv;
  RunConfig run;
  LoadedCheckpoint ckpt;
  Schedule schedule;
  std::vector<Sequence> held_out;
};

const Prepared& prepare(const std::string& name, const Json& config) {
  static std::map<std::string, std::unique_ptr<Prepared>> cache;
  auto& slot = cache[name];
  if (slot) return *slot;
  auto p = std::make_unique<Prepared>();
  p->config_path = path_in(name + ".json");
  p->corpus_path = path_in(name + ".corpus.jsonl");
  p->ckpt_path = path_in(name + ".ckpt");
  p->loss_csv = path_in(name + ".loss.csv");
  std::ofstream(p->config_path) << config.dump(1) << '\n';
  cli({"gen-corpus", "--spec", p->config_path, "--out", p->corpus_path});
  cli({"train", "--corpus", p->corpus_path, "--config", p->config_path, "--out", p->ckpt_path,
       "--loss-csv", p->loss_csv, "--noise-augment"});
  p->run = load_run_config(p->config_path);
  p->ckpt = load_checkpoint(p->ckpt_path);
  p->schedule = build_schedule(p->run.schedule);
  CorpusSpec spec = p->run.corpus;
  const std::size_t train = spec.num_sequences;
  spec.num_sequences = train + kHeldOut;
  Corpus c = generate_corpus(spec, p->run.seed, "");
  p->held_out.assign(c.sequences.begin() + static_cast<std::ptrdiff_t>(train), c.sequences.end());
  slot = std::move(p);
  return *slot;
}

const Prepared& markov_model() { return prepare("markov", markov_config()); }
const Prepared& grid_model() { return prepare("grid", grid_config(true)); }
const Prepared& grid_raw_model() { return prepare("grid_raw", grid_config(false)); }

Sequence head(const Sequence& s, std::size_t n) {
  return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n)};
}

// ---------------------------------------------------------------------------

Result algebraic_identities() {
  double worst = 0.0;
  auto track = [&](const Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  Rng rng(1);
  auto random_vec = [&](std::size_t n, double scale) {
    Vec v(n);
    for (double& x : v) x = rng.normal() * scale;
    return v;
  };
  for (Warp w : {Warp::kLinear, Warp::kKarras}) {
    for (int steps : {1, 4, 25}) {
      const Schedule s = build_schedule({steps, 1e-3, 1.0, w, 7.0});
      for (int trial = 0; trial < 50; ++trial) {
        const Vec e = random_vec(16, 3.0), x0 = random_vec(16, 1.0);
        track(denoise_step(e, x0, steps - 1, s.grid, s.coeffs), x0);
      }
    }
  }
  std::vector<double> w(32 * 16);
  for (double& x : w) x = rng.normal() * 0.7 + 0.1;
  const EmbeddingTable table(std::move(w), 32, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec m = random_vec(16, 5.0);
    track(table.denormalize(table.normalize(m)), m);
    track(table.normalize(table.denormalize(m)), m);
    const Vec e = random_vec(16, 1.0), eps = random_vec(16, 1.0);
    track(perturb(e, 0.0, eps, NoiseCoeffs{}), e);
    track(perturb(e, 1.0, eps, NoiseCoeffs{}), eps);
  }
  return {worst <= kIdentityTol, "max_abs_err=" + fmt(worst) + " tol=" + fmt(kIdentityTol)};
}

Result fixed_point_equivalence() {
  const Prepared& p = markov_model();
  DecodeConfig ar = p.run.decode;
  ar.mode = DecodeMode::kAr;
  ar.temperature = 0.0;
  DecodeConfig jac = ar;
  jac.mode = DecodeMode::kJacobi;
  std::size_t mismatches = 0, forwards = 0;
  for (std::size_t seed = 0; seed < kEquivSeeds; ++seed) {
    const Sequence prompt = head(p.held_out[seed % p.held_out.size()], 2);
    Rng r1 = Rng::stream(seed, 0), r2 = Rng::stream(seed, 0);
    const DecodeResult a = decode_session(p.ckpt.model, prompt, kEquivTokens, ar, p.schedule, r1);
    const DecodeResult j = decode_session(p.ckpt.model, prompt, kEquivTokens, jac, p.schedule, r2);
    mismatches += a.tokens != j.tokens;
    forwards += j.forwards;
  }
  return {mismatches == 0,
          "mismatched_sequences=" + std::to_string(mismatches) + "/" + std::to_string(kEquivSeeds) +
              " tokens=" + std::to_string(kEquivTokens) + " jacobi_mean_forwards=" +
              fmt(static_cast<double>(forwards) / kEquivSeeds)};
}

Result distribution_preservation() {
  const Prepared& p = markov_model();
  const Sequence prompt = head(p.held_out.front(), 2);
  DecodeConfig ar = p.run.decode;
  ar.mode = DecodeMode::kAr;
  ar.temperature = 1.0;
  DecodeConfig sjd = ar;
  sjd.mode = DecodeMode::kSjd;
  sjd.acceptance = AcceptanceMode::kStrict;
  const std::size_t v = p.ckpt.model.vocab_size();
  std::vector<TokenId> first_ar, first_sjd;
  first_ar.reserve(kDistSamples);
  first_sjd.reserve(kDistSamples);
  for (std::size_t i = 0; i < kDistSamples; ++i) {
    Rng ra = Rng::stream(i, 11), rs = Rng::stream(i, 12);
    first_ar.push_back(decode_session(p.ckpt.model, prompt, 1, ar, p.schedule, ra).tokens[0]);
    first_sjd.push_back(decode_session(p.ckpt.model, prompt, 1, sjd, p.schedule, rs).tokens[0]);
  }
  const Vec e_ar = empirical_distribution(first_ar, v);
  const Vec e_sjd = empirical_distribution(first_sjd, v);
  const double tv = tv_distance(e_ar, e_sjd);

  ForwardInput in;
  in.prefix_tokens = {p.ckpt.model.bos_token()};
  in.prefix_tokens.insert(in.prefix_tokens.end(), prompt.begin(), prompt.end());
  const Logits logits = p.ckpt.model.new_session()->forward(in);
  const Vec exact = probabilities(logits.row(in.prefix_tokens.size() - 1), 1.0, 0);
  return {tv < kDistTvMax, "tv(ar,sjd)=" + fmt(tv) + " tv(sjd,model)=" +
                               fmt(tv_distance(e_sjd, exact)) + " samples=" +
                               std::to_string(kDistSamples) + " limit=" + fmt(kDistTvMax)};
}

Result gradient_correctness() {
  const std::size_t vocab = 6;
  Transformer<double> net(TransformerShape{vocab + 2, vocab, 8, 1, 2, 32});
  Rng rng(4);
  net.init(rng, 0.4);
  const TensorInfo& t = net.tensor("wte");
  const EmbeddingTable table(
      std::vector<double>(net.params().begin() + static_cast<std::ptrdiff_t>(t.offset),
                          net.params().begin() + static_cast<std::ptrdiff_t>(t.offset + t.size)),
      t.shape[0], t.shape[1]);
  const Schedule s = build_schedule({5, 1e-3, 1.0, Warp::kLinear, 7.0});
  NoisePlan plan;
  plan.levels = {kClean, kClean, 4, 4, 3, 3, 1, 1};
  plan.windows = {{2, 6, 2}};
  const TrainExample ex = make_example({1, 4, 4, 0, 5, 2, 3, 3}, static_cast<TokenId>(vocab), plan,
                                       table, s.grid, s.coeffs, rng);
  std::vector<double> grad(net.params().size(), 0.0);
  example_loss<double>(net, ex, &grad, 1.0);
  Rng pick(8);
  double worst = 0.0;
  for (int i = 0; i < kFdParams; ++i) {
    const std::size_t k = pick.uniform_int(net.params().size());
    const double saved = net.params()[k];
    net.params()[k] = saved + kFdStep;
    const double up = example_loss<double>(net, ex, nullptr, 1.0);
    net.params()[k] = saved - kFdStep;
    const double down = example_loss<double>(net, ex, nullptr, 1.0);
    net.params()[k] = saved;
    const double fd = (up - down) / (2 * kFdStep);
    worst = std::max(worst, std::abs(grad[k] - fd) / std::max({std::abs(grad[k]), std::abs(fd), 1e-6}));
  }
  return {worst < kFdRelTol, "max_rel_err=" + fmt(worst) + " params=" + std::to_string(kFdParams) +
                                 " limit=" + fmt(kFdRelTol)};
}

// Mean per-token cross-entropy on held-out sequences, either clean or under
// fresh fine-tuning noise plans.
double held_out_ce(const Prepared& p, bool noisy) {
  const ToyModel& model = p.ckpt.model;
  const TrainConfig& cfg = p.run.training;
  double total = 0.0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < p.held_out.size(); ++i) {
    const Sequence& seq = p.held_out[i];
    Rng rng = Rng::stream(i, 5);
    NoisePlan plan = clean_plan(seq.size());
    if (noisy) {
      NoisePlanOptions po;
      po.window_min = cfg.window_min;
      po.window_max = cfg.window_max;
      po.free_levels = cfg.free_levels;
      po.clean_prefix = 1 + rng.uniform_int(std::min(cfg.clean_prefix_max, seq.size() - 1) + 1);
      plan = sample_noise_plan(seq.size(), p.schedule.grid, rng, po);
    }
    const TrainExample ex = make_example(seq, model.bos_token(), plan, model.embeddings(),
                                         p.schedule.grid, p.schedule.coeffs, rng, cfg.normalize);
    total += example_loss<float>(model.net(), ex, nullptr, 1.0);
    labeled += static_cast<std::size_t>(
        std::count_if(ex.labels.begin(), ex.labels.end(), [](TokenId l) { return l >= 0; }));
  }
  return total / static_cast<double>(labeled);
}

Result training_efficacy() {
  const Prepared& p = markov_model();
  std::vector<double> losses;
  {
    std::ifstream f(p.loss_csv);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      losses.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    }
  }
  const int ft = p.run.training.finetune_steps;
  const double first_ft = losses[losses.size() - static_cast<std::size_t>(ft)];
  const double tail = std::accumulate(losses.end() - 20, losses.end(), 0.0) / 20.0;
  const double noisy = held_out_ce(p, true);
  const double clean = held_out_ce(p, false);
  const double limit = (1.0 - kLossReduction) * std::log(static_cast<double>(p.run.model.vocab_size));
  const bool pass = ft <= kMaxFinetuneSteps && noisy <= limit;
  return {pass, "heldout_noisy_ce=" + fmt(noisy) + " limit=" + fmt(limit) + " heldout_clean_ce=" +
                    fmt(clean) + " finetune_loss first=" + fmt(first_ft) + " last20=" +
                    fmt(tail) + " finetune_steps=" + std::to_string(ft)};
}

std::map<std::string, std::vector<RunReport>> by_mode(const std::vector<RunReport>& reports) {
  std::map<std::string, std::vector<RunReport>> out;
  for (const RunReport& r : reports) out[r.mode].push_back(r);
  return out;
}

double mean_of(const std::vector<RunReport>& rs, const std::function<double(const RunReport&)>& f) {
  double s = 0.0;
  for (const RunReport& r : rs) s += f(r);
  return s / static_cast<double>(rs.size());
}

Result acceleration() {
  const Prepared& p = grid_model();
  const std::string report = path_in("c6.json");
  cli({"compare", "--ckpt", p.ckpt_path, "--modes", "ar,sjd2", "--seeds",
       std::to_string(kSpeedSeeds), "--n", std::to_string(kGridN), "--prompt-len",
       std::to_string(kGridPrompt), "--window", std::to_string(kGridWindow), "--require-clean",
       "--acceptance", "strict", "--report", report});
  auto modes = by_mode(read_reports(ReportFormat::kJson, report));
  const auto s = [](const RunReport& r) { return r.step_compression; };
  const auto f = [](const RunReport& r) { return static_cast<double>(r.forwards); };
  const double s_ar = mean_of(modes["ar"], s);
  const double s_sjd2 = mean_of(modes["sjd2"], s);
  std::size_t max_fwd = 0;
  for (const RunReport& r : modes["sjd2"]) max_fwd = std::max(max_fwd, r.forwards);
  const std::size_t bound = kGridN + kGridSteps + kForwardSlack;
  const bool pass = s_ar == 1.0 && s_sjd2 >= kMinSpeedup && s_sjd2 >= s_ar && max_fwd <= bound;
  return {pass, "S(sjd2)=" + fmt(s_sjd2) + " S(ar)=" + fmt(s_ar) + " mean_forwards(sjd2)=" +
                    fmt(mean_of(modes["sjd2"], f)) + " max_forwards(sjd2)=" +
                    std::to_string(max_fwd) + " bound=" + std::to_string(bound) + " seeds=" +
                    std::to_string(kSpeedSeeds) + " L=" + std::to_string(kGridWindow) +
                    " T=" + std::to_string(kGridSteps)};
}

Result window_safety() {
  std::size_t monotone_violations = 0, length_drift = 0, errors = 0, iterations = 0;
  const std::size_t vocab = 8, dim = 16;
  for (auto [len, steps] : std::vector<std::pair<std::size_t, int>>{
           {1, 1}, {1, 25}, {5, 7}, {8, 4}, {16, 4}, {16, 20}, {32, 25}}) {
    Rng rng(len * 100 + static_cast<std::size_t>(steps));
    std::vector<double> w(vocab * dim);
    for (double& x : w) x = rng.normal();
    const EmbeddingTable table(std::move(w), vocab, dim);
    const Schedule s = build_schedule({steps, 1e-3, 1.0, Warp::kLinear, 7.0});
    WindowContext ctx;
    ctx.table = &table;
    ctx.vocab = vocab;
    ctx.grid = &s.grid;
    ctx.coeffs = s.coeffs;
    JacobiWindow win = init_window(len, ctx, rng);
    for (std::size_t it = 0; it < kFuzzIters; ++it, ++iterations) {
      std::vector<SlotPrediction> preds(win.slots.size());
      for (SlotPrediction& pr : preds) {
        pr.probs.resize(vocab);
        double sum = 0.0;
        for (double& x : pr.probs) sum += (x = std::pow(rng.uniform(), 3.0) + 1e-9);
        for (double& x : pr.probs) x /= sum;
        pr.sampled = static_cast<TokenId>(rng.categorical(pr.probs));
      }
      try {
        refine(win, preds, ctx);
        slide_and_refill(win, rng.uniform_int(win.slots.size() + 1), ctx, rng);
      } catch (const Error&) {
        ++errors;
      }
      monotone_violations += !win.monotone();
      length_drift += win.slots.size() != len;
      for (const WindowSlot& slot : win.slots) {
        if (slot.k != kClean && (slot.k < 0 || slot.k >= steps)) ++monotone_violations;
      }
    }
  }
  const bool pass = monotone_violations == 0 && length_drift == 0 && errors == 0;
  return {pass, "iterations=" + std::to_string(iterations) + " monotone_violations=" +
                    std::to_string(monotone_violations) + " length_drift=" +
                    std::to_string(length_drift) + " errors=" + std::to_string(errors)};
}

// Accuracy of the tokens committed by immediate acceptance after pure
// denoising of a fresh window, against the held-out continuation.
double pure_denoising_accuracy(const Prepared& p) {
  DecodeConfig cfg = p.run.decode;
  cfg.mode = DecodeMode::kSjd2;
  cfg.require_clean = true;
  cfg.immediate_accept = true;
  const std::size_t prompt_len = 2 * kGridPrompt;
  const std::size_t n = kGridWindow / static_cast<std::size_t>(kGridSteps);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < p.held_out.size(); ++i) {
    const Sequence& seq = p.held_out[i];
    Rng rng = Rng::stream(i, 0);
    const DecodeResult r =
        decode_session(p.ckpt.model, head(seq, prompt_len), n, cfg, p.schedule, rng);
    for (std::size_t k = 0; k < n; ++k) hits += r.tokens[k] == seq[prompt_len + k];
    total += n;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

Result trends() {
  const Prepared& p = grid_model();

  // (a) forwards against window length at T = 20.
  const std::string sweep_csv = path_in("sweep.csv");
  cli({"sweep", "--ckpt", p.ckpt_path, "--mode", "sjd2", "--window-grid", "8,16,32,64,96",
       "--steps-grid", "20", "--seeds", std::to_string(kSweepSeeds), "--n", std::to_string(kGridN),
       "--prompt-len", std::to_string(kGridPrompt), "--csv", sweep_csv});
  const std::vector<SweepRow> rows = read_sweep_csv(sweep_csv);
  double floor = rows.front().forwards;
  for (const SweepRow& r : rows) floor = std::min(floor, r.forwards);
  bool a = rows.size() == 5 && rows.front().forwards > floor;
  std::string curve;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    curve += (i ? "," : "") + fmt(rows[i].forwards);
    if (i > 0 && rows[i].forwards > rows[i - 1].forwards &&
        rows[i].forwards > (1.0 + kPlateauBand) * floor) {
      a = false;
    }
  }

  // (b) token changes per tracked slot over paired seeds.
  const std::string report = path_in("c8b.json");
  cli({"compare", "--ckpt", p.ckpt_path, "--modes", "sjd,sjd2", "--seeds",
       std::to_string(kTrendSeeds), "--n", std::to_string(kGridN), "--prompt-len",
       std::to_string(kGridPrompt), "--window", std::to_string(kGridWindow), "--report", report});
  auto modes = by_mode(read_reports(ReportFormat::kJson, report));
  auto mean_changes = [](const std::vector<RunReport>& rs) {
    double s = 0.0;
    std::size_t n = 0;
    for (const RunReport& r : rs) {
      for (std::size_t c : r.token_changes) s += static_cast<double>(c);
      n += r.token_changes.size();
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  };
  const double ch_sjd = mean_changes(modes["sjd"]);
  const double ch_sjd2 = mean_changes(modes["sjd2"]);
  const bool b = ch_sjd2 <= ch_sjd;

  // (c) normalization on vs off.
  const double acc_on = pure_denoising_accuracy(p);
  const double acc_off = pure_denoising_accuracy(grid_raw_model());
  const bool c = acc_off < acc_on;

  return {a && b && c,
          std::string("(a) ") + (a ? "ok" : "fail") + " forwards[L=8..96,T=20]=" + curve +
              " (b) " + (b ? "ok" : "fail") + " changes sjd2=" + fmt(ch_sjd2) + " sjd=" +
              fmt(ch_sjd) + " (c) " + (c ? "ok" : "fail") + " accuracy normalized=" +
              fmt(acc_on) + " raw=" + fmt(acc_off)};
}

// Full CLI pipeline run twice; the second run uses two session threads.
Result reproducibility() {
  Json cfg = grid_config(true);
  cfg["model"]["context_len"] = 96;
  cfg["training"]["pretrain_steps"] = 20;
  cfg["training"]["finetune_steps"] = 20;
  cfg["corpus"]["num_sequences"] = 200;
  std::vector<std::string> diffs;
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work_dir() / ("repro" + std::to_string(run));
    fs::create_directories(dir);
    auto at = [&](const std::string& n) { return (dir / n).string(); };
    std::ofstream(at("cfg.json")) << cfg.dump() << '\n';
    setenv("JDD2_THREADS", run == 0 ? "1" : "2", 1);
    cli({"gen-corpus", "--spec", at("cfg.json"), "--out", at("corpus.jsonl")});
    cli({"train", "--corpus", at("corpus.jsonl"), "--config", at("cfg.json"), "--out",
         at("model.ckpt"), "--noise-augment", "--loss-csv", at("loss.csv")});
    cli({"decode", "--ckpt", at("model.ckpt"), "--n", "24", "--prompt-len", "8", "--seed", "3",
         "--report", at("decode.json"), "--trace", at("trace.jsonl")});
    cli({"compare", "--ckpt", at("model.ckpt"), "--modes", "ar,jacobi,sjd,sjd2", "--seeds", "6",
         "--n", "24", "--prompt-len", "8", "--temperature", "0", "--report", at("compare.csv"),
         "--tokens-out", at("tokens")});
    cli({"compare", "--ckpt", at("model.ckpt"), "--modes", "sjd,sjd2", "--seeds", "6", "--n",
         "24", "--prompt-len", "8", "--report", at("compare.json")});
    std::map<std::string, std::string> files;
    for (const char* f : {"corpus.jsonl", "model.ckpt", "loss.csv", "trace.jsonl",
                          "tokens.ar.txt", "tokens.jacobi.txt", "tokens.sjd.txt",
                          "tokens.sjd2.txt"}) {
      files[f] = slurp(at(f));
    }
    auto strip = [](std::vector<RunReport> rs) {
      for (RunReport& r : rs) r.wall_time_ms = 0.0;
      Json j = Json::array();
      for (const RunReport& r : rs) j.push_back(report_to_json(r));
      return j.dump();
    };
    files["decode.json"] = strip({read_report(ReportFormat::kJson, at("decode.json"))});
    files["compare.csv"] = strip(read_reports(ReportFormat::kCsv, at("compare.csv")));
    files["compare.json"] = strip(read_reports(ReportFormat::kJson, at("compare.json")));
    runs.push_back(std::move(files));
  }
  unsetenv("JDD2_THREADS");
  for (const auto& [name, bytes] : runs[0]) {
    if (bytes.empty() || runs[1][name] != bytes) diffs.push_back(name);
  }
  std::string detail = "artifacts=" + std::to_string(runs[0].size());
  detail += diffs.empty() ? " all identical" : " differing:";
  for (const auto& d : diffs) detail += " " + d;
  return {diffs.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Result()> run;
};

}  // namespace
}  // namespace jdd

int main(int argc, char** argv) {
  using namespace jdd;
  const std::vector<Criterion> all{
      {1, "algebraic identities", algebraic_identities},
      {2, "fixed-point equivalence", fixed_point_equivalence},
      {3, "distribution preservation", distribution_preservation},
      {4, "gradient correctness", gradient_correctness},
      {5, "training efficacy", training_efficacy},
      {6, "acceleration at toy scale", acceleration},
      {7, "window state-machine safety", window_safety},
      {8, "trend reproductions", trends},
      {9, "reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    failures += !r.pass;
    std::cout << "CRITERION " << c.id << " " << (r.pass ? "PASS" : "FAIL") << " [" << c.name
              << "] " << r.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
