#include "jdd/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "jdd/error.hpp"

namespace jdd {

NoisePlan clean_plan(std::size_t seq_len) {
  NoisePlan p;
  p.levels.assign(seq_len, kClean);
  return p;
}

NoisePlan sample_noise_plan(std::size_t seq_len, const TimestepGrid& grid, Rng& rng,
                            const NoisePlanOptions& opt) {
  if (seq_len < 1) throw ContractViolation("sample_noise_plan: seq_len must be >= 1");
  if (opt.window_min < 1 || opt.window_min > opt.window_max) {
    throw ConfigError("training.window_min", "need 1 <= window_min <= window_max");
  }
  const auto t_count = static_cast<std::size_t>(grid.size());
  NoisePlan plan = clean_plan(seq_len);
  std::size_t start = std::min(opt.clean_prefix, seq_len);
  while (start < seq_len) {
    const auto nominal = static_cast<std::size_t>(rng.uniform_range(
        static_cast<std::int64_t>(opt.window_min), static_cast<std::int64_t>(opt.window_max)));
    const std::size_t len = std::min(nominal, seq_len - start);
    const std::size_t seg = (nominal + t_count - 1) / t_count;
    const std::size_t segments = (nominal + seg - 1) / seg;
    std::vector<Level> seg_levels(segments);
    if (opt.free_levels) {
      for (auto& l : seg_levels) l = static_cast<Level>(rng.uniform_int(t_count));
      std::sort(seg_levels.begin(), seg_levels.end(), std::greater<>());
    } else {
      const auto shift = static_cast<Level>(rng.uniform_int(t_count - segments + 1));
      for (std::size_t j = 0; j < segments; ++j) {
        seg_levels[j] = static_cast<Level>(segments - 1 - j) + shift;
      }
    }
    for (std::size_t p = 0; p < len; ++p) plan.levels[start + p] = seg_levels[p / seg];
    plan.windows.push_back({start, len, seg});
    start += len;
  }
  return plan;
}

bool plan_is_well_formed(const NoisePlan& plan, std::size_t seq_len, std::size_t grid_size) {
  if (plan.levels.size() != seq_len) return false;
  std::size_t cursor = plan.windows.empty() ? seq_len : plan.windows.front().start;
  for (std::size_t i = 0; i < cursor; ++i) {
    if (plan.levels[i] != kClean) return false;
  }
  for (const NoiseWindow& w : plan.windows) {
    if (w.start != cursor || w.length == 0 || w.segment == 0) return false;
    for (std::size_t p = 0; p < w.length; ++p) {
      const Level l = plan.levels[w.start + p];
      if (l < 0 || static_cast<std::size_t>(l) >= grid_size) return false;
      if (p > 0 && l > plan.levels[w.start + p - 1]) return false;
      if (p > 0 && p / w.segment == (p - 1) / w.segment && l != plan.levels[w.start + p - 1]) {
        return false;
      }
    }
    cursor += w.length;
  }
  return cursor == seq_len;
}

NoisyEmbeddings apply_noise_plan(const std::vector<TokenId>& tokens, const NoisePlan& plan,
                                 const EmbeddingTable& table, const TimestepGrid& grid,
                                 const NoiseCoeffs& coeffs, Rng& rng, bool normalize) {
  if (plan.levels.size() != tokens.size()) {
    throw ContractViolation("apply_noise_plan: plan covers " + std::to_string(plan.levels.size()) +
                            " tokens, sequence has " + std::to_string(tokens.size()));
  }
  const std::size_t d = table.dim();
  NoisyEmbeddings out;
  out.raw.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = table.row(tokens[i]);
    if (plan.levels[i] == kClean) {
      out.raw.emplace_back(row.begin(), row.end());
      out.timesteps.push_back(0.0);
      out.alpha.push_back(1.0);
      out.offset.emplace_back(d, 0.0);
      continue;
    }
    const double t = grid.at(plan.levels[i]);
    Vec eps(d);
    for (double& e : eps) e = rng.normal();
    const double a = coeffs.alpha(t);
    const double s = coeffs.sigma(t);
    Vec offset(d);
    if (normalize) {
      out.raw.push_back(table.denormalize(perturb(table.normalize(row), t, eps, coeffs)));
      for (std::size_t j = 0; j < d; ++j) {
        offset[j] = (1.0 - a) * table.mean()[j] + s * table.stddev()[j] * eps[j];
      }
    } else {
      out.raw.push_back(perturb(row, t, eps, coeffs));
      for (std::size_t j = 0; j < d; ++j) offset[j] = s * eps[j];
    }
    out.timesteps.push_back(t);
    out.alpha.push_back(a);
    out.offset.push_back(std::move(offset));
  }
  return out;
}

TrainExample make_example(const std::vector<TokenId>& tokens, TokenId bos, const NoisePlan& plan,
                          const EmbeddingTable& table, const TimestepGrid& grid,
                          const NoiseCoeffs& coeffs, Rng& rng, bool normalize) {
  if (tokens.empty()) throw ContractViolation("make_example: empty sequence");
  TrainExample ex;
  ex.inputs.push_back(bos);
  ex.inputs.insert(ex.inputs.end(), tokens.begin(), tokens.end() - 1);
  ex.labels = tokens;
  if (plan.levels.size() != ex.inputs.size()) {
    throw ContractViolation("make_example: plan length does not match input rows");
  }
  if (plan.levels.front() != kClean) throw ContractViolation("make_example: BOS row must be CLEAN");
  NoisyEmbeddings noisy = apply_noise_plan(ex.inputs, plan, table, grid, coeffs, rng, normalize);
  ex.alpha = std::move(noisy.alpha);
  ex.offset = std::move(noisy.offset);
  std::vector<bool> has_ts(ex.inputs.size());
  ex.timestep_raw.resize(ex.inputs.size());
  for (std::size_t i = 0; i < ex.inputs.size(); ++i) {
    has_ts[i] = plan.levels[i] != kClean;
    if (has_ts[i]) ex.timestep_raw[i] = timestep_encoding(noisy.timesteps[i], table);
  }
  ex.mask = build_attention_mask(0, has_ts);
  return ex;
}

template <class T>
double example_loss(const Transformer<T>& net, const TrainExample& ex, std::vector<T>* grad,
                    double weight, Backend backend) {
  const std::size_t d = net.shape().dim;
  const std::size_t v = net.shape().outputs;
  const std::size_t rows = ex.mask.size();
  const T* wte = net.data("wte");
  std::vector<T> x(rows * d);
  std::vector<int> positions(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const RowInfo& info = ex.mask.rows[r];
    const std::size_t i = info.index;
    positions[r] = static_cast<int>(i);
    T* xr = x.data() + r * d;
    if (info.role == RowRole::kSlot) {
      const T* w = wte + static_cast<std::size_t>(ex.inputs[i]) * d;
      const T a = static_cast<T>(ex.alpha[i]);
      for (std::size_t j = 0; j < d; ++j) xr[j] = a * w[j] + static_cast<T>(ex.offset[i][j]);
    } else {
      for (std::size_t j = 0; j < d; ++j) xr[j] = static_cast<T>(ex.timestep_raw[i][j]);
    }
  }
  std::vector<std::size_t> out_rows;
  std::vector<TokenId> labels;
  for (std::size_t i = 0; i < ex.inputs.size(); ++i) {
    if (ex.labels[i] < 0) continue;
    out_rows.push_back(ex.mask.slot_rows[i]);
    labels.push_back(ex.labels[i]);
  }
  std::vector<T> logits;
  typename Transformer<T>::Activations acts;
  net.forward_train(x.data(), positions, ex.mask.layout, out_rows, logits, acts, backend);

  double loss = 0.0;
  std::vector<T> dlogits(logits.size(), T(0));
  for (std::size_t r = 0; r < out_rows.size(); ++r) {
    const T* lr = logits.data() + r * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < v; ++c) mx = std::max(mx, static_cast<double>(lr[c]));
    double sum = 0.0;
    for (std::size_t c = 0; c < v; ++c) sum += std::exp(static_cast<double>(lr[c]) - mx);
    const double lse = mx + std::log(sum);
    const auto label = static_cast<std::size_t>(labels[r]);
    loss += lse - static_cast<double>(lr[label]);
    for (std::size_t c = 0; c < v; ++c) {
      const double p = std::exp(static_cast<double>(lr[c]) - lse);
      dlogits[r * v + c] = static_cast<T>(weight * (p - (c == label ? 1.0 : 0.0)));
    }
  }
  if (grad) {
    std::vector<T> dx;
    net.backward(acts, dlogits, *grad, &dx, backend);
    const std::size_t wte_off = net.tensor("wte").offset;
    for (std::size_t i = 0; i < ex.inputs.size(); ++i) {
      const std::size_t r = ex.mask.slot_rows[i];
      T* g = grad->data() + wte_off + static_cast<std::size_t>(ex.inputs[i]) * d;
      const T a = static_cast<T>(ex.alpha[i]);
      for (std::size_t j = 0; j < d; ++j) g[j] += a * dx[r * d + j];
    }
  }
  return loss;
}

template double example_loss<float>(const Transformer<float>&, const TrainExample&,
                                    std::vector<float>*, double, Backend);
template double example_loss<double>(const Transformer<double>&, const TrainExample&,
                                     std::vector<double>*, double, Backend);

Json train_config_to_json(const TrainConfig& c) {
  return Json{{"pretrain_steps", c.pretrain_steps},
              {"finetune_steps", c.finetune_steps},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"min_lr_ratio", c.min_lr_ratio},
              {"warmup_steps", c.warmup_steps},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"grad_clip", c.grad_clip},
              {"window_min", c.window_min},
              {"window_max", c.window_max},
              {"clean_prefix_max", c.clean_prefix_max},
              {"free_levels", c.free_levels},
              {"recompute_stats", c.recompute_stats},
              {"normalize", c.normalize},
              {"max_seq_len", c.max_seq_len}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  StrictObject o(j, path);
  o.read("pretrain_steps", c.pretrain_steps);
  o.read("finetune_steps", c.finetune_steps);
  o.read("batch_size", c.batch_size);
  o.read("lr", c.lr);
  o.read("min_lr_ratio", c.min_lr_ratio);
  o.read("warmup_steps", c.warmup_steps);
  o.read("weight_decay", c.weight_decay);
  o.read("beta1", c.beta1);
  o.read("beta2", c.beta2);
  o.read("adam_eps", c.adam_eps);
  o.read("grad_clip", c.grad_clip);
  o.read("window_min", c.window_min);
  o.read("window_max", c.window_max);
  o.read("clean_prefix_max", c.clean_prefix_max);
  o.read("free_levels", c.free_levels);
  o.read("recompute_stats", c.recompute_stats);
  o.read("normalize", c.normalize);
  o.read("max_seq_len", c.max_seq_len);
  o.finish();
  return c;
}

void validate(const TrainConfig& c) {
  if (c.pretrain_steps < 0) throw ConfigError("training.pretrain_steps", "must be >= 0");
  if (c.finetune_steps < 0) throw ConfigError("training.finetune_steps", "must be >= 0");
  if (c.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
  if (!(c.lr > 0.0)) throw ConfigError("training.lr", "must be > 0");
  if (!(c.min_lr_ratio >= 0.0 && c.min_lr_ratio <= 1.0)) {
    throw ConfigError("training.min_lr_ratio", "must lie in [0, 1]");
  }
  if (c.warmup_steps < 0) throw ConfigError("training.warmup_steps", "must be >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("training.weight_decay", "must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("training.beta1", "must lie in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("training.beta2", "must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw ConfigError("training.adam_eps", "must be > 0");
  if (!(c.grad_clip > 0.0)) throw ConfigError("training.grad_clip", "must be > 0");
  if (c.window_min < 1 || c.window_min > c.window_max) {
    throw ConfigError("training.window_min", "need 1 <= window_min <= window_max");
  }
}

double learning_rate(const TrainConfig& c, int step, int total_steps) {
  if (step < c.warmup_steps) {
    return c.lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  const int span = std::max(1, total_steps - c.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return c.lr * (c.min_lr_ratio + (1.0 - c.min_lr_ratio) * cosine);
}

StepResult train_step(ToyModel& model, AdamW& opt, const std::vector<TrainExample>& batch,
                      const TrainConfig& cfg, double lr, std::int64_t step) {
  Transformer<float>& net = model.net();
  std::vector<float>& params = net.params();
  std::size_t labeled = 0;
  for (const TrainExample& ex : batch) {
    for (TokenId l : ex.labels) labeled += l >= 0 ? 1 : 0;
  }
  if (labeled == 0) throw ContractViolation("train_step: batch has no labeled positions");
  const double weight = 1.0 / static_cast<double>(labeled);
  std::vector<float> grad(params.size(), 0.0f);
  double total = 0.0;
  for (const TrainExample& ex : batch) {
    total += example_loss<float>(net, ex, &grad, weight, model.backend());
  }
  StepResult res;
  res.loss = total * weight;
  double sq = 0.0;
  for (float g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  res.grad_norm = std::sqrt(sq);
  if (!std::isfinite(res.loss) || !std::isfinite(res.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite training loss at step " << step << " (loss=" << res.loss << ", lr=" << lr
        << ", grad_norm=" << res.grad_norm << ")";
    throw NumericError(msg.str());
  }
  const double scale = res.grad_norm > cfg.grad_clip ? cfg.grad_clip / res.grad_norm : 1.0;

  if (opt.m.size() != params.size()) {
    opt.m.assign(params.size(), 0.0f);
    opt.v.assign(params.size(), 0.0f);
    opt.t = 0;
  }
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
  for (const TensorInfo& t : net.tensors()) {
    const double decay = t.decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = t.offset; i < t.offset + t.size; ++i) {
      const double g = static_cast<double>(grad[i]) * scale;
      const double m = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
      opt.m[i] = static_cast<float>(m);
      opt.v[i] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
      const double p = params[i];
      params[i] = static_cast<float>(p - lr * (update + decay * p));
    }
  }
  if (cfg.recompute_stats) {
    model.refresh_embeddings();
  } else {
    model.set_embedding_stats(model.embeddings().stats());
  }
  return res;
}

std::vector<LossRecord> train_phase(ToyModel& model, AdamW& opt,
                                    const std::vector<std::vector<TokenId>>& corpus,
                                    const Schedule& schedule, const TrainConfig& cfg,
                                    TrainPhase phase, int steps, std::int64_t step_offset,
                                    Rng& rng,
                                    const std::function<void(const LossRecord&)>& on_step) {
  validate(cfg);
  if (corpus.empty()) throw ConfigError("corpus", "training corpus is empty");
  const std::size_t limit = cfg.max_seq_len != 0
                                ? std::min(cfg.max_seq_len, model.context_len())
                                : model.context_len();
  std::vector<LossRecord> records;
  for (int s = 0; s < steps; ++s) {
    const double lr = learning_rate(cfg, s, steps);
    std::vector<TrainExample> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::vector<TokenId>& full = corpus[rng.uniform_int(corpus.size())];
      if (full.empty()) throw ConfigError("corpus", "empty sequence in training corpus");
      std::vector<TokenId> seq = full;
      if (seq.size() > limit) {
        const std::size_t off = rng.uniform_int(seq.size() - limit + 1);
        seq.assign(full.begin() + static_cast<std::ptrdiff_t>(off),
                   full.begin() + static_cast<std::ptrdiff_t>(off + limit));
      }
      NoisePlan plan;
      if (phase == TrainPhase::kClean) {
        plan = clean_plan(seq.size());
      } else {
        NoisePlanOptions po;
        po.window_min = cfg.window_min;
        po.window_max = cfg.window_max;
        po.free_levels = cfg.free_levels;
        po.clean_prefix = 1 + rng.uniform_int(std::min(cfg.clean_prefix_max, seq.size() - 1) + 1);
        plan = sample_noise_plan(seq.size(), schedule.grid, rng, po);
      }
      batch.push_back(make_example(seq, model.bos_token(), plan, model.embeddings(), schedule.grid,
                                   schedule.coeffs, rng, cfg.normalize));
    }
    const std::int64_t step = step_offset + s;
    const StepResult r = train_step(model, opt, batch, cfg, lr, step);
    LossRecord rec{step, r.loss, lr, r.grad_norm};
    records.push_back(rec);
    if (on_step) on_step(rec);
  }
  return records;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& records) {
  std::ofstream f(path);
  if (!f) throw IoError(path, "cannot open loss CSV for writing");
  f << "step,loss,lr,grad_norm\n";
  f.precision(17);
  for (const LossRecord& r : records) {
    f << r.step << ',' << r.loss << ',' << r.lr << ',' << r.grad_norm << '\n';
  }
  if (!f) throw IoError(path, "write failed");
}

}  // namespace jdd
