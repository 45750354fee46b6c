#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jdd/decoding.hpp"
#include "jdd/types.hpp"

namespace jdd {

double step_compression(std::size_t n, std::size_t forwards);

struct TrajectoryResult {
  std::vector<std::size_t> positions;  // generated-token offsets tracked
  std::vector<std::size_t> changes;    // per tracked slot
  // Per tracked slot, running change count after each trace iteration.
  std::vector<std::vector<std::size_t>> cumulative;
  double mean_changes = 0.0;
};

// Tracks the positions held by `slots` of the first recorded window and
// counts how often each one's draft token differs from its previous
// appearance.
TrajectoryResult token_change_trajectory(const DecodeTrace& trace,
                                         const std::vector<std::size_t>& slots);

double tv_distance(std::span<const double> p, std::span<const double> q);
Vec empirical_distribution(const std::vector<TokenId>& samples, std::size_t support);

// hist[k] = number of iterations that kept k tokens.
std::vector<std::size_t> acceptance_histogram(const std::vector<std::size_t>& lengths);

inline constexpr int kReportVersion = 1;

struct RunReport {
  std::string mode;
  std::size_t n_tokens = 0;
  std::size_t forwards = 0;
  double step_compression = 0.0;
  double wall_time_ms = 0.0;
  std::vector<std::size_t> acceptance_histogram;
  std::vector<std::size_t> token_changes;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<TokenId> tokens;

  bool operator==(const RunReport&) const = default;
};

RunReport make_report(const DecodeResult& result, const std::string& config_hash,
                      std::uint64_t seed,
                      const std::vector<std::size_t>& tracked_slots = {0, 1, 2, 3, 4});

enum class ReportFormat { kJson, kCsv };

Json report_to_json(const RunReport& r);
RunReport report_from_json(const Json& j);
void write_report(const RunReport& report, ReportFormat format, const std::string& path);
RunReport read_report(ReportFormat format, const std::string& path);
// Writes several reports to one file (JSON array or multi-row CSV).
void write_reports(const std::vector<RunReport>& reports, ReportFormat format,
                   const std::string& path);
std::vector<RunReport> read_reports(ReportFormat format, const std::string& path);

inline constexpr const char* kReportCsvHeader =
    "mode,n_tokens,forwards,step_compression,wall_time_ms,config_hash,seed,"
    "acceptance_histogram,token_changes,tokens";

struct SweepRow {
  std::size_t window = 0;
  int steps = 0;
  double step_compression = 0.0;
  double forwards = 0.0;  // mean over seeds
  double wall_time_ms = 0.0;

  bool operator==(const SweepRow&) const = default;
};

inline constexpr const char* kSweepCsvHeader = "L,T,S,forwards,wall_time_ms";

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(const std::string& path);

inline constexpr const char* kTrajectoryCsvHeader = "slot,position,iteration,cumulative_changes";

void write_trajectory_csv(const std::string& path, const TrajectoryResult& t);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace jdd
