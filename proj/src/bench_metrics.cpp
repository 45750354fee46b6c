#include "jdd/bench_metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "jdd/error.hpp"

namespace jdd {

double step_compression(std::size_t n, std::size_t forwards) {
  if (forwards == 0) throw ContractViolation("step_compression: forwards must be >= 1");
  return static_cast<double>(n) / static_cast<double>(forwards);
}

TrajectoryResult token_change_trajectory(const DecodeTrace& trace,
                                         const std::vector<std::size_t>& slots) {
  if (trace.records.empty()) throw ContractViolation("token_change_trajectory: empty trace");
  const TraceRecord& first = trace.records.front();
  TrajectoryResult out;
  for (std::size_t s : slots) {
    if (s >= first.tokens.size()) {
      throw IndexError("token_change_trajectory: slot " + std::to_string(s) +
                       " outside the first window");
    }
    out.positions.push_back(first.start + s);
  }
  out.changes.assign(slots.size(), 0);
  out.cumulative.assign(slots.size(), {});
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const std::size_t pos = out.positions[j];
    bool seen = false;
    TokenId prev = 0;
    for (const TraceRecord& r : trace.records) {
      if (pos >= r.start && pos < r.start + r.tokens.size()) {
        const TokenId cur = r.tokens[pos - r.start];
        if (seen && cur != prev) ++out.changes[j];
        prev = cur;
        seen = true;
      }
      out.cumulative[j].push_back(out.changes[j]);
    }
  }
  double total = 0.0;
  for (std::size_t c : out.changes) total += static_cast<double>(c);
  out.mean_changes = slots.empty() ? 0.0 : total / static_cast<double>(slots.size());
  return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ContractViolation("tv_distance: supports differ (" + std::to_string(p.size()) + " vs " +
                            std::to_string(q.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

Vec empirical_distribution(const std::vector<TokenId>& samples, std::size_t support) {
  Vec out(support, 0.0);
  if (samples.empty()) return out;
  for (TokenId t : samples) {
    if (t < 0 || static_cast<std::size_t>(t) >= support) {
      throw IndexError("sample outside support");
    }
    out[static_cast<std::size_t>(t)] += 1.0;
  }
  for (double& x : out) x /= static_cast<double>(samples.size());
  return out;
}

std::vector<std::size_t> acceptance_histogram(const std::vector<std::size_t>& lengths) {
  std::vector<std::size_t> hist;
  for (std::size_t l : lengths) {
    if (hist.size() <= l) hist.resize(l + 1, 0);
    ++hist[l];
  }
  return hist;
}

RunReport make_report(const DecodeResult& result, const std::string& config_hash,
                      std::uint64_t seed, const std::vector<std::size_t>& tracked_slots) {
  RunReport r;
  r.mode = result.trace.mode;
  r.n_tokens = result.tokens.size();
  r.forwards = result.forwards;
  r.step_compression = step_compression(r.n_tokens, r.forwards);
  r.wall_time_ms = result.wall_time_ms;
  r.acceptance_histogram = acceptance_histogram(result.acceptance_lengths);
  if (result.trace.records.size() >= 2 && !result.trace.records.front().tokens.empty()) {
    std::vector<std::size_t> slots;
    for (std::size_t s : tracked_slots) {
      if (s < result.trace.records.front().tokens.size()) slots.push_back(s);
    }
    r.token_changes = token_change_trajectory(result.trace, slots).changes;
  }
  r.config_hash = config_hash;
  r.seed = seed;
  r.tokens = result.tokens;
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(0, "cannot parse " + what + " '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(0, "cannot parse " + what + " '" + s + "'");
  }
  return v;
}

template <class V>
std::string join(const std::vector<V>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(xs[i]);
  }
  return out;
}

template <class V>
std::vector<V> split_ints(const std::string& s, const std::string& what) {
  std::vector<V> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    out.push_back(static_cast<V>(parse_u64(item, what)));
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string report_csv_row(const RunReport& r) {
  return r.mode + ',' + std::to_string(r.n_tokens) + ',' + std::to_string(r.forwards) + ',' +
         format_double(r.step_compression) + ',' + format_double(r.wall_time_ms) + ',' +
         r.config_hash + ',' + std::to_string(r.seed) + ',' + join(r.acceptance_histogram) + ',' +
         join(r.token_changes) + ',' + join(r.tokens);
}

RunReport report_from_csv_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 10) throw FormatError(0, "report CSV row has " + std::to_string(f.size()) + " fields");
  RunReport r;
  r.mode = f[0];
  r.n_tokens = parse_u64(f[1], "n_tokens");
  r.forwards = parse_u64(f[2], "forwards");
  r.step_compression = parse_double(f[3], "step_compression");
  r.wall_time_ms = parse_double(f[4], "wall_time_ms");
  r.config_hash = f[5];
  r.seed = parse_u64(f[6], "seed");
  r.acceptance_histogram = split_ints<std::size_t>(f[7], "acceptance_histogram");
  r.token_changes = split_ints<std::size_t>(f[8], "token_changes");
  r.tokens = split_ints<TokenId>(f[9], "tokens");
  return r;
}

}  // namespace

Json report_to_json(const RunReport& r) {
  Json j;
  j["report_version"] = kReportVersion;
  j["mode"] = r.mode;
  j["n_tokens"] = r.n_tokens;
  j["forwards"] = r.forwards;
  j["step_compression"] = r.step_compression;
  j["wall_time_ms"] = r.wall_time_ms;
  j["acceptance_histogram"] = r.acceptance_histogram;
  j["token_changes"] = r.token_changes;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["tokens"] = r.tokens;
  return j;
}

RunReport report_from_json(const Json& j) {
  try {
    if (j.at("report_version").get<int>() != kReportVersion) {
      throw FormatError(0, "unsupported report_version");
    }
    RunReport r;
    r.mode = j.at("mode").get<std::string>();
    r.n_tokens = j.at("n_tokens").get<std::size_t>();
    r.forwards = j.at("forwards").get<std::size_t>();
    r.step_compression = j.at("step_compression").get<double>();
    r.wall_time_ms = j.at("wall_time_ms").get<double>();
    r.acceptance_histogram = j.at("acceptance_histogram").get<std::vector<std::size_t>>();
    r.token_changes = j.at("token_changes").get<std::vector<std::size_t>>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.tokens = j.at("tokens").get<std::vector<TokenId>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("malformed report: ") + e.what());
  }
}

void write_reports(const std::vector<RunReport>& reports, ReportFormat format,
                   const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open report for writing");
  if (format == ReportFormat::kJson) {
    Json arr = Json::array();
    for (const RunReport& r : reports) arr.push_back(report_to_json(r));
    f << (reports.size() == 1 ? arr[0] : arr).dump(2) << '\n';
  } else {
    f << kReportCsvHeader << '\n';
    for (const RunReport& r : reports) f << report_csv_row(r) << '\n';
  }
  if (!f) throw IoError(path, "write failed");
}

void write_report(const RunReport& report, ReportFormat format, const std::string& path) {
  write_reports({report}, format, path);
}

std::vector<RunReport> read_reports(ReportFormat format, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open report");
  std::vector<RunReport> out;
  if (format == ReportFormat::kJson) {
    Json j;
    try {
      j = Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(e.byte, path + ": " + e.what());
    }
    if (j.is_array()) {
      for (const Json& x : j) out.push_back(report_from_json(x));
    } else {
      out.push_back(report_from_json(j));
    }
    return out;
  }
  std::string line;
  if (!std::getline(f, line) || line != kReportCsvHeader) {
    throw FormatError(0, path + ": unexpected report CSV header");
  }
  while (std::getline(f, line)) {
    if (!line.empty()) out.push_back(report_from_csv_row(line));
  }
  return out;
}

RunReport read_report(ReportFormat format, const std::string& path) {
  const auto all = read_reports(format, path);
  if (all.size() != 1) throw FormatError(0, path + ": expected exactly one report");
  return all.front();
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open sweep CSV for writing");
  f << kSweepCsvHeader << '\n';
  for (const SweepRow& r : rows) {
    f << r.window << ',' << r.steps << ',' << format_double(r.step_compression) << ','
      << format_double(r.forwards) << ',' << format_double(r.wall_time_ms) << '\n';
  }
  if (!f) throw IoError(path, "write failed");
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path, "cannot open sweep CSV");
  std::string line;
  if (!std::getline(f, line) || line != kSweepCsvHeader) {
    throw FormatError(0, path + ": unexpected sweep CSV header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto v = split_csv(line);
    if (v.size() != 5) throw FormatError(0, path + ": sweep row needs 5 fields");
    SweepRow r;
    r.window = parse_u64(v[0], "L");
    r.steps = static_cast<int>(parse_u64(v[1], "T"));
    r.step_compression = parse_double(v[2], "S");
    r.forwards = parse_double(v[3], "forwards");
    r.wall_time_ms = parse_double(v[4], "wall_time_ms");
    rows.push_back(r);
  }
  return rows;
}

void write_trajectory_csv(const std::string& path, const TrajectoryResult& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path, "cannot open trajectory CSV for writing");
  f << kTrajectoryCsvHeader << '\n';
  for (std::size_t j = 0; j < t.positions.size(); ++j) {
    for (std::size_t it = 0; it < t.cumulative[j].size(); ++it) {
      f << j << ',' << t.positions[j] << ',' << it << ',' << t.cumulative[j][it] << '\n';
    }
  }
  if (!f) throw IoError(path, "write failed");
}

}  // namespace jdd
