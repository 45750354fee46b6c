#include "jdd/run_config.hpp"

#include <fstream>
#include <sstream>

#include "jdd/hash.hpp"

namespace jdd {

Json schedule_params_to_json(const ScheduleParams& p) {
  return Json{{"steps", p.steps},
              {"t_min", p.t_min},
              {"t_max", p.t_max},
              {"warp", warp_name(p.warp)},
              {"rho", p.rho}};
}

ScheduleParams schedule_params_from_json(const Json& j, const std::string& path) {
  ScheduleParams p;
  StrictObject o(j, path);
  std::string warp = warp_name(p.warp);
  o.read("steps", p.steps);
  o.read("t_min", p.t_min);
  o.read("t_max", p.t_max);
  o.read("warp", warp);
  o.read("rho", p.rho);
  o.finish();
  p.warp = parse_warp(warp);
  return p;
}

namespace {

Json outputs_to_json(const OutputPaths& o) {
  return Json{{"loss_csv", o.loss_csv}, {"trace", o.trace}, {"report", o.report}};
}

OutputPaths outputs_from_json(const Json& j) {
  OutputPaths out;
  StrictObject o(j, "outputs");
  o.read("loss_csv", out.loss_csv);
  o.read("trace", out.trace);
  o.read("report", out.report);
  o.finish();
  return out;
}

Json hashed_json(const RunConfig& c) {
  return Json{{"version", kRunConfigVersion},
              {"model", model_config_to_json(c.model)},
              {"schedule", schedule_params_to_json(c.schedule)},
              {"training", train_config_to_json(c.training)},
              {"decode", decode_config_to_json(c.decode)},
              {"corpus", corpus_spec_to_json(c.corpus)},
              {"seed", c.seed}};
}

}  // namespace

Json run_config_to_json(const RunConfig& c) {
  Json j = hashed_json(c);
  j["outputs"] = outputs_to_json(c.outputs);
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  StrictObject o(j, "");
  int version = 0;
  if (!o.has("version")) throw ConfigError("version", "missing");
  o.read("version", version);
  if (version != kRunConfigVersion) {
    throw ConfigError("version", "unsupported version " + std::to_string(version));
  }
  if (const Json* x = o.child("model")) c.model = model_config_from_json(*x);
  if (const Json* x = o.child("schedule")) c.schedule = schedule_params_from_json(*x);
  if (const Json* x = o.child("training")) c.training = train_config_from_json(*x);
  if (const Json* x = o.child("decode")) c.decode = decode_config_from_json(*x);
  if (const Json* x = o.child("corpus")) c.corpus = corpus_spec_from_json(*x);
  if (const Json* x = o.child("outputs")) c.outputs = outputs_from_json(*x);
  o.read("seed", c.seed);
  o.finish();
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  validate(c.model);
  build_schedule(c.schedule);
  validate(c.training);
  validate(c.decode);
  validate(c.corpus);
  if (c.decode.steps != c.schedule.steps) {
    throw ConfigError("decode.steps", "must equal schedule.steps (" +
                                          std::to_string(c.schedule.steps) + ")");
  }
  if (c.corpus.vocab_size > c.model.vocab_size) {
    throw ConfigError("corpus.vocab_size", "exceeds model.vocab_size");
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open config");
  std::stringstream ss;
  ss << f.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(hashed_json(c).dump())); }

}  // namespace jdd
