#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vilbench/runlog.hpp"
#include "vilbench/scenario.hpp"

namespace vilbench {

enum class LatencyBasis {
  Onset,    // from the moment the person became visible to the camera
  Capture,  // from the capture instant of the triggering frame
};

struct LatencyStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

// Throws NoTriggers when the log has no latency record.
LatencyStats measure_latencies(const RunLog& log, LatencyBasis basis = LatencyBasis::Onset);
LatencyStats latency_stats(std::vector<double> samples);

struct LateralStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double max = 0.0;
};

// Over rows at or after `settle_window` seconds.
LateralStats lateral_error_stats(const RunLog& log, double settle_window);

struct Report {
  std::string text;
  nlohmann::json json;
  std::string series_csv;  // time, gap, lateral_error, speed, perceived_distance
};

Report report(const RunLog& log);
// Writes report.txt, report.json and series.csv next to the run files.
void write_report(const std::filesystem::path& dir, const Report& r);

struct ReplayVerdict {
  bool match = true;
  std::optional<std::int64_t> first_divergent_tick;
  std::string detail;
};

// Re-runs the scenario in the internal stage and compares every formatted row.
ReplayVerdict replay(const RunLog& log, const ScenarioConfig& scenario);
// Row-by-row comparison of two logs' formatted rows.
ReplayVerdict compare_rows(const std::vector<TickRow>& expected, const std::vector<TickRow>& actual);

}  // namespace vilbench
