#include "jdd/toy_model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "jdd/attention_mask.hpp"
#include "jdd/error.hpp"

namespace jdd {

Json model_config_to_json(const ModelConfig& c) {
  return Json{{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
              {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
              {"context_len", c.context_len}, {"sigma_floor", c.sigma_floor},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  ModelConfig c;
  StrictObject o(j, path);
  o.read("vocab_size", c.vocab_size);
  o.read("embed_dim", c.embed_dim);
  o.read("num_layers", c.num_layers);
  o.read("num_heads", c.num_heads);
  o.read("context_len", c.context_len);
  o.read("sigma_floor", c.sigma_floor);
  o.read("seed", c.seed);
  o.finish();
  return c;
}

void validate(const ModelConfig& c) {
  if (c.vocab_size < 2) throw ConfigError("model.vocab_size", "must be >= 2");
  if (c.embed_dim < 1) throw ConfigError("model.embed_dim", "must be >= 1");
  if (c.num_layers < 1) throw ConfigError("model.num_layers", "must be >= 1");
  if (c.num_heads < 1 || c.embed_dim % c.num_heads != 0) {
    throw ConfigError("model.num_heads", "embed_dim must be divisible by num_heads");
  }
  if (c.context_len < 2) throw ConfigError("model.context_len", "must be >= 2");
  if (!(c.sigma_floor > 0.0)) throw ConfigError("model.sigma_floor", "must be > 0");
}

Vec standardized_timestep_features(double t, std::size_t dim) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("timestep_encoding: t must lie in [0, 1]");
  Vec v(dim, 0.0);
  const std::size_t half = dim / 2;
  const double arg = t * 1000.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[i] = std::sin(arg * freq);
    v[half + i] = std::cos(arg * freq);
  }
  if (dim == 1) v[0] = std::cos(arg);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(dim);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(dim);
  const double sd = std::sqrt(var);
  for (double& x : v) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
  return v;
}

Vec timestep_encoding(double t, const EmbeddingTable& table) {
  return table.denormalize(standardized_timestep_features(t, table.dim()));
}

bool levels_monotone(const std::vector<Level>& levels) {
  // Cleanliness rank: CLEAN is cleanest, then larger grid indices.
  auto rank = [](Level k) { return k == kClean ? std::numeric_limits<Level>::max() : k; };
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (rank(levels[i]) > rank(levels[i - 1])) return false;
  }
  return true;
}

namespace {

TransformerShape shape_of(const ModelConfig& c) {
  TransformerShape s;
  s.vocab = c.table_rows();
  s.outputs = c.vocab_size;
  s.dim = c.embed_dim;
  s.layers = c.num_layers;
  s.heads = c.num_heads;
  s.context = c.context_len;
  return s;
}

class ToySession : public ModelSession {
 public:
  explicit ToySession(const ToyModel& model)
      : model_(model), cache_(model.net().new_cache()) {}

  std::size_t cached_tokens() const override { return cache_.len; }

  Logits forward(const ForwardInput& in) override {
    const ModelConfig& cfg = model_.config();
    const EmbeddingTable& table = model_.embeddings();
    const std::size_t d = cfg.embed_dim;
    const std::size_t np = in.prefix_tokens.size();
    const std::size_t ns = in.window_embeddings.size();
    if (in.window_levels.size() != ns) {
      throw ShapeError("forward: " + std::to_string(in.window_levels.size()) + " levels for " +
                       std::to_string(ns) + " window slots");
    }
    if (!levels_monotone(in.window_levels)) {
      throw ContractViolation("forward: window noise levels are not monotone front to back");
    }
    std::vector<bool> has_ts(ns, false);
    for (std::size_t s = 0; s < ns; ++s) {
      const Level k = in.window_levels[s];
      if (k == kClean) continue;
      if (!in.grid) throw ContractViolation("forward: noisy slot without a timestep grid");
      in.grid->at(k);
      has_ts[s] = true;
    }
    if (cache_.len + np + ns > cfg.context_len) {
      throw CapacityError("forward: " + std::to_string(cache_.len + np + ns) +
                          " positions exceed context length " + std::to_string(cfg.context_len));
    }

    AttentionMask mask = build_attention_mask(np, has_ts);
    mask.layout.cache_len = cache_.len;
    const std::size_t rows = mask.size();
    std::vector<float> x(rows * d);
    std::vector<int> positions(rows);
    const float* wte = model_.net().data("wte");
    for (std::size_t r = 0; r < rows; ++r) {
      const RowInfo& info = mask.rows[r];
      float* xr = x.data() + r * d;
      if (info.role == RowRole::kPrefix) {
        const TokenId t = in.prefix_tokens[info.index];
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.table_rows()) {
          throw IndexError("forward: token id " + std::to_string(t) + " outside table");
        }
        std::copy(wte + static_cast<std::size_t>(t) * d, wte + (static_cast<std::size_t>(t) + 1) * d,
                  xr);
        positions[r] = static_cast<int>(cache_.len + info.index);
        continue;
      }
      positions[r] = static_cast<int>(cache_.len + np + info.index);
      if (info.role == RowRole::kSlot) {
        const Vec& e = in.window_embeddings[info.index];
        if (e.size() != d) throw ShapeError("forward: window embedding has wrong dimension");
        for (std::size_t j = 0; j < d; ++j) xr[j] = static_cast<float>(e[j]);
      } else {
        const Vec enc = timestep_encoding(in.grid->at(in.window_levels[info.index]), table);
        for (std::size_t j = 0; j < d; ++j) xr[j] = static_cast<float>(enc[j]);
      }
    }
    std::vector<float> logits;
    model_.net().forward(x.data(), positions, mask.layout, &cache_, np, mask.main_rows(), logits,
                         model_.backend());
    Logits out;
    out.rows = np + ns;
    out.cols = cfg.vocab_size;
    out.data.assign(logits.begin(), logits.end());
    return out;
  }

 private:
  const ToyModel& model_;
  Transformer<float>::Cache cache_;
};

}  // namespace

ToyModel::ToyModel(const ModelConfig& config) : config_(config) {
  validate(config_);
  net_ = Transformer<float>(shape_of(config_));
  Rng rng(config_.seed);
  net_.init(rng);
  refresh_embeddings();
}

void ToyModel::refresh_embeddings() {
  const TensorInfo& t = net_.tensor("wte");
  const float* w = net_.params().data() + t.offset;
  std::vector<double> weights(w, w + t.size);
  table_ = EmbeddingTable(std::move(weights), config_.table_rows(), config_.embed_dim,
                          config_.sigma_floor);
}

void ToyModel::set_embedding_stats(const EmbeddingStats& stats) {
  const TensorInfo& t = net_.tensor("wte");
  const float* w = net_.params().data() + t.offset;
  std::vector<double> weights(w, w + t.size);
  table_ = EmbeddingTable(std::move(weights), config_.table_rows(), config_.embed_dim, stats);
}

std::unique_ptr<ModelSession> ToyModel::new_session() const {
  return std::make_unique<ToySession>(*this);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[4] = {'J', 'D', 'D', '2'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

void put_tensor(std::string& out, const std::string& name, const std::vector<std::size_t>& shape,
                const float* data, std::size_t count) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t s : shape) put_u32(out, static_cast<std::uint32_t>(s));
  put_u64(out, static_cast<std::uint64_t>(count) * 4);
  for (std::size_t i = 0; i < count; ++i) put_f32(out, data[i]);
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

  void need(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) {
      throw FormatError(pos_, std::string("truncated file while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32("tensor payload");
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ToyModel& model, const CheckpointMeta& meta, const std::string& path) {
  const Transformer<float>& net = model.net();
  Json header{{"model", model_config_to_json(model.config())},
              {"step", meta.step},
              {"config_hash", meta.config_hash},
              {"corpus_hash", meta.corpus_hash},
              {"tensors", net.tensors().size() + 2}};
  if (!meta.run_config.is_null()) header["run_config"] = meta.run_config;
  const std::string header_text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const TensorInfo& t : net.tensors()) {
    put_tensor(out, t.name, t.shape, net.params().data() + t.offset, t.size);
  }
  const EmbeddingTable& table = model.embeddings();
  std::vector<float> mean(table.mean().begin(), table.mean().end());
  std::vector<float> sd(table.stddev().begin(), table.stddev().end());
  put_tensor(out, "emb_mean", {mean.size()}, mean.data(), mean.size());
  put_tensor(out, "emb_sigma", {sd.size()}, sd.data(), sd.size());

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path, "cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(path, "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path, "rename failed: " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::string& path, std::size_t expected_vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open checkpoint");
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(buf);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError(0, "bad magic (expected JDD2)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(4, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::size_t header_at = r.offset();
  Json header;
  try {
    header = Json::parse(r.bytes(header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(header_at, std::string("header is not valid JSON: ") + e.what());
  }
  LoadedCheckpoint out;
  ModelConfig config;
  std::uint64_t count = 0;
  try {
    config = model_config_from_json(header.at("model"));
    out.meta.step = header.at("step").get<std::int64_t>();
    out.meta.config_hash = header.at("config_hash").get<std::string>();
    out.meta.corpus_hash = header.at("corpus_hash").get<std::string>();
    if (header.contains("run_config")) out.meta.run_config = header.at("run_config");
    count = header.at("tensors").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_at, std::string("malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(header_at, std::string("malformed header: ") + e.what());
  }
  if (expected_vocab != 0 && config.vocab_size != expected_vocab) {
    throw ConfigMismatchError("checkpoint vocabulary " + std::to_string(config.vocab_size) +
                              " != configured vocabulary " + std::to_string(expected_vocab));
  }
  validate(config);

  ToyModel model(config);
  Transformer<float>& net = model.net();
  std::map<std::string, bool> loaded;
  for (const TensorInfo& t : net.tensors()) loaded[t.name] = false;
  loaded["emb_mean"] = false;
  loaded["emb_sigma"] = false;
  if (count != loaded.size()) {
    throw FormatError(header_at, "header lists " + std::to_string(count) + " tensors, expected " +
                                     std::to_string(loaded.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t rec_at = r.offset();
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    auto it = loaded.find(name);
    if (it == loaded.end()) throw FormatError(rec_at, "unknown tensor '" + name + "'");
    if (it->second) throw FormatError(rec_at, "duplicate tensor '" + name + "'");
    it->second = true;
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw FormatError(rec_at, "implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& s : shape) s = r.u32("tensor shape");
    const std::size_t payload_at = r.offset();
    const std::uint64_t payload = r.u64("payload length");
    std::size_t elems = 1;
    for (std::size_t s : shape) elems *= s;
    if (payload != static_cast<std::uint64_t>(elems) * 4) {
      throw FormatError(payload_at, "payload length " + std::to_string(payload) +
                                        " does not match shape of '" + name + "'");
    }
    r.need(payload, "tensor payload");
    if (name == "emb_mean" || name == "emb_sigma") {
      if (shape != std::vector<std::size_t>{config.embed_dim}) {
        throw FormatError(rec_at, "bad shape for '" + name + "'");
      }
      for (std::size_t k = 0; k < elems; ++k) r.f32();
      continue;
    }
    const TensorInfo& info = net.tensor(name);
    if (shape != info.shape) throw FormatError(rec_at, "shape mismatch for '" + name + "'");
    float* dst = net.params().data() + info.offset;
    for (std::size_t k = 0; k < elems; ++k) dst[k] = r.f32();
  }
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after tensor section");
  // Statistics are a pure function of wte; recomputing keeps them exact.
  model.refresh_embeddings();
  out.model = std::move(model);
  return out;
}

}  // namespace jdd
