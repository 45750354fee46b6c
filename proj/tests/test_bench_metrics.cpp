#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "jdd/bench_metrics.hpp"
#include "jdd/error.hpp"
#include "jdd/rng.hpp"

namespace jdd {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("jdd_bm_" + name)).string();
}

TraceRecord record(std::size_t start, std::vector<TokenId> tokens) {
  TraceRecord r;
  r.start = start;
  r.levels.assign(tokens.size(), kClean);
  r.tokens = std::move(tokens);
  return r;
}

RunReport sample_report() {
  RunReport r;
  r.mode = "sjd2";
  r.n_tokens = 5;
  r.forwards = 3;
  r.step_compression = 5.0 / 3.0;
  r.wall_time_ms = 0.1 + 0.2;
  r.acceptance_histogram = {0, 1, 2};
  r.token_changes = {3, 0, 1};
  r.config_hash = "00ff00ff00ff00ff";
  r.seed = 18446744073709551615ull;
  r.tokens = {4, 0, 7, 7, 1};
  return r;
}

TEST(StepCompressionTest, Examples) {
  EXPECT_DOUBLE_EQ(step_compression(100, 100), 1.0);
  EXPECT_DOUBLE_EQ(step_compression(100, 40), 2.5);
  EXPECT_THROW(step_compression(10, 0), ContractViolation);
}

TEST(TrajectoryTest, CountsChangesAtTrackedPositions) {
  DecodeTrace t;
  // Position 0 reads 1,2,2 then leaves; position 1 reads 5,5,6,3.
  t.records.push_back(record(0, {1, 5, 9}));
  t.records.push_back(record(0, {2, 5, 9}));
  t.records.push_back(record(0, {2, 6, 8}));
  t.records.push_back(record(1, {3, 8, 0}));
  const TrajectoryResult r = token_change_trajectory(t, {0, 1, 2});
  EXPECT_EQ(r.positions, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(r.changes, (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_EQ(r.cumulative[0], (std::vector<std::size_t>{0, 1, 1, 1}));
  EXPECT_EQ(r.cumulative[1], (std::vector<std::size_t>{0, 0, 1, 2}));
  EXPECT_DOUBLE_EQ(r.mean_changes, 4.0 / 3.0);
}

TEST(TrajectoryTest, MatchesPerPositionOracle) {
  Rng rng(5);
  DecodeTrace t;
  std::size_t start = 0;
  for (int it = 0; it < 40; ++it) {
    std::vector<TokenId> tokens(6);
    for (auto& x : tokens) x = static_cast<TokenId>(rng.uniform_int(3));
    t.records.push_back(record(start, tokens));
    start += rng.uniform_int(3);
  }
  const TrajectoryResult r = token_change_trajectory(t, {0, 1, 2, 3, 4, 5});
  for (std::size_t s = 0; s < 6; ++s) {
    std::vector<TokenId> seen;
    for (const TraceRecord& rec : t.records) {
      if (s >= rec.start && s < rec.start + 6) seen.push_back(rec.tokens[s - rec.start]);
    }
    std::size_t changes = 0;
    for (std::size_t i = 1; i < seen.size(); ++i) changes += seen[i] != seen[i - 1];
    EXPECT_EQ(r.changes[s], changes) << "slot " << s;
    EXPECT_EQ(r.cumulative[s].size(), t.records.size());
    EXPECT_EQ(r.cumulative[s].back(), changes);
  }
}

TEST(TrajectoryTest, Errors) {
  DecodeTrace t;
  EXPECT_THROW(token_change_trajectory(t, {0}), ContractViolation);
  t.records.push_back(record(0, {1, 2}));
  EXPECT_THROW(token_change_trajectory(t, {2}), IndexError);
}

TEST(DistributionTest, TvAndEmpirical) {
  const Vec p{0.5, 0.5, 0.0}, q{0.25, 0.25, 0.5};
  EXPECT_DOUBLE_EQ(tv_distance(p, q), 0.5);
  EXPECT_DOUBLE_EQ(tv_distance(p, p), 0.0);
  EXPECT_THROW(tv_distance(p, Vec{1.0}), ContractViolation);
  const Vec e = empirical_distribution({0, 0, 2, 1}, 3);
  EXPECT_EQ(e, (Vec{0.5, 0.25, 0.25}));
  EXPECT_THROW(empirical_distribution({3}, 3), IndexError);
}

TEST(HistogramTest, CountsLengths) {
  EXPECT_EQ(acceptance_histogram({1, 1, 3, 0}), (std::vector<std::size_t>{1, 2, 0, 1}));
  EXPECT_TRUE(acceptance_histogram({}).empty());
}

TEST(FormatDoubleTest, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform_range(-20, 20));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(MakeReportTest, FillsFieldsFromResult) {
  DecodeResult res;
  res.tokens = {1, 2, 3, 4};
  res.forwards = 2;
  res.acceptance_lengths = {3, 1};
  res.wall_time_ms = 1.5;
  res.trace.mode = "sjd";
  res.trace.records.push_back(record(0, {1, 2, 3}));
  res.trace.records.push_back(record(3, {4, 0, 0}));
  const RunReport r = make_report(res, "abc", 9);
  EXPECT_EQ(r.mode, "sjd");
  EXPECT_DOUBLE_EQ(r.step_compression, 2.0);
  EXPECT_EQ(r.acceptance_histogram, (std::vector<std::size_t>{0, 1, 0, 1}));
  EXPECT_EQ(r.token_changes, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(r.tokens, res.tokens);
  EXPECT_EQ(r.seed, 9u);
}

TEST(ReportIoTest, JsonAndCsvRoundTripExactly) {
  const RunReport r = sample_report();
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  for (ReportFormat fmt : {ReportFormat::kJson, ReportFormat::kCsv}) {
    const std::string path = temp_path(fmt == ReportFormat::kJson ? "r.json" : "r.csv");
    write_report(r, fmt, path);
    EXPECT_EQ(read_report(fmt, path), r);
    RunReport other = r;
    other.mode = "ar";
    other.token_changes.clear();
    write_reports({r, other}, fmt, path);
    const std::vector<RunReport> back = read_reports(fmt, path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], r);
    EXPECT_EQ(back[1], other);
    EXPECT_THROW(read_report(fmt, path), FormatError);
    fs::remove(path);
  }
}

TEST(ReportIoTest, CsvHeader) {
  const std::string path = temp_path("h.csv");
  write_report(sample_report(), ReportFormat::kCsv, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, kReportCsvHeader);
  fs::remove(path);
}

TEST(ReportIoTest, Errors) {
  EXPECT_THROW(read_report(ReportFormat::kJson, temp_path("missing.json")), IoError);
  Json j = report_to_json(sample_report());
  j["report_version"] = 99;
  EXPECT_THROW(report_from_json(j), FormatError);
  const std::string path = temp_path("bad.csv");
  { std::ofstream(path) << "nope\n"; }
  EXPECT_THROW(read_report(ReportFormat::kCsv, path), FormatError);
  { std::ofstream(path) << kReportCsvHeader << "\nsjd2,1,2\n"; }
  EXPECT_THROW(read_report(ReportFormat::kCsv, path), FormatError);
  { std::ofstream(path) << "{not json"; }
  EXPECT_THROW(read_report(ReportFormat::kJson, path), FormatError);
  fs::remove(path);
}

TEST(SweepCsvTest, RoundTrip) {
  const std::vector<SweepRow> rows{{8, 4, 1.7, 23.5, 0.25}, {16, 25, 3.0 / 7.0, 70.0, 12.125}};
  const std::string path = temp_path("sweep.csv");
  write_sweep_csv(path, rows);
  EXPECT_EQ(read_sweep_csv(path), rows);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, kSweepCsvHeader);
  fs::remove(path);
  EXPECT_THROW(read_sweep_csv(path), IoError);
}

TEST(TrajectoryCsvTest, OneRowPerSlotAndIteration) {
  TrajectoryResult t;
  t.positions = {0, 1};
  t.changes = {1, 0};
  t.cumulative = {{0, 1, 1}, {0, 0, 0}};
  const std::string path = temp_path("traj.csv");
  write_trajectory_csv(path, t);
  std::ifstream f(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], kTrajectoryCsvHeader);
  EXPECT_EQ(lines[2], "0,0,1,1");
  fs::remove(path);
}

}  // namespace
}  // namespace jdd
