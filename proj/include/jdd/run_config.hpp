#pragma once

#include <cstdint>
#include <string>

#include "jdd/corpus.hpp"
#include "jdd/decoding.hpp"
#include "jdd/json_util.hpp"
#include "jdd/schedules.hpp"
#include "jdd/toy_model.hpp"
#include "jdd/training.hpp"

namespace jdd {

inline constexpr int kRunConfigVersion = 1;

// Optional default output locations; they do not enter the config hash.
struct OutputPaths {
  std::string loss_csv;
  std::string trace;
  std::string report;

  bool operator==(const OutputPaths&) const = default;
};

struct RunConfig {
  ModelConfig model;
  ScheduleParams schedule;
  TrainConfig training;
  DecodeConfig decode;
  CorpusSpec corpus;
  OutputPaths outputs;
  std::uint64_t seed = 0;
};

Json schedule_params_to_json(const ScheduleParams& p);
ScheduleParams schedule_params_from_json(const Json& j, const std::string& path = "schedule");

Json run_config_to_json(const RunConfig& c);
// Rejects unknown keys and unsupported versions, then validates every section.
RunConfig run_config_from_json(const Json& j);
void validate(const RunConfig& c);

RunConfig load_run_config(const std::string& path);

// Hash of the canonical JSON of everything except output paths.
std::string config_hash(const RunConfig& c);

}  // namespace jdd
