#include "vilbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vilbench/errors.hpp"
#include "vilbench/harness.hpp"

namespace vilbench {

using nlohmann::json;

namespace {

// Nearest-rank percentile.
double percentile(const std::vector<double>& sorted, double q) {
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

json stats_json(const LatencyStats& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"p50", s.p50}, {"p95", s.p95}, {"max", s.max}};
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

}  // namespace

LatencyStats latency_stats(std::vector<double> samples) {
  if (samples.empty()) throw NoTriggers("no emergency-brake trigger in the log");
  std::sort(samples.begin(), samples.end());
  LatencyStats s;
  s.count = samples.size();
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  s.p50 = percentile(samples, 0.50);
  s.p95 = percentile(samples, 0.95);
  s.max = samples.back();
  return s;
}

LatencyStats measure_latencies(const RunLog& log, LatencyBasis basis) {
  std::vector<double> samples;
  for (const auto& r : log.latencies) {
    samples.push_back(basis == LatencyBasis::Onset ? r.latency_onset_to_brake() : r.latency_capture_to_brake());
  }
  return latency_stats(std::move(samples));
}

LateralStats lateral_error_stats(const RunLog& log, double settle_window) {
  LateralStats s;
  double sum = 0.0;
  for (const auto& r : log.rows) {
    if (r.time + kTimeEpsilon < settle_window) continue;
    sum += r.lateral_error;
    s.max = std::max(s.max, r.lateral_error);
    ++s.samples;
  }
  if (s.samples > 0) s.mean = sum / static_cast<double>(s.samples);
  return s;
}

Report report(const RunLog& log) {
  Report r;
  const double settle = log.scenario.value("settle_window", 5.0);
  const LateralStats lat = lateral_error_stats(log, settle);

  std::optional<double> min_gap;
  std::optional<double> final_gap;
  for (const auto& row : log.rows) {
    if (!row.gap) continue;
    min_gap = min_gap ? std::min(*min_gap, *row.gap) : *row.gap;
    final_gap = row.gap;
  }

  json timeline = json::array();
  std::optional<GatewayMode> mode;
  for (const auto& row : log.rows) {
    if (mode && *mode == row.mode) continue;
    timeline.push_back({{"tick", row.tick}, {"time", row.time}, {"kind", "mode"}, {"detail", to_string(row.mode)}});
    mode = row.mode;
  }
  for (const auto& e : log.events) {
    timeline.push_back({{"tick", e.tick}, {"time", e.time}, {"kind", e.kind}, {"detail", e.detail}});
  }
  std::stable_sort(timeline.begin(), timeline.end(),
                   [](const json& a, const json& b) { return a["tick"].get<std::int64_t>() < b["tick"].get<std::int64_t>(); });

  json j;
  j["scenario"] = log.scenario.value("name", std::string());
  j["stage"] = log.stage.value("stage", std::string());
  j["rows"] = log.rows.size();
  j["termination"] = log.termination ? json{{"tick", log.termination->tick}, {"reason", log.termination->reason}}
                                     : json(nullptr);
  j["lateral_error"] = {{"settle_window", settle}, {"samples", lat.samples}, {"mean", lat.mean}, {"max", lat.max}};
  j["gap"] = {{"min", min_gap ? json(*min_gap) : json(nullptr)}, {"final", final_gap ? json(*final_gap) : json(nullptr)}};
  j["latency_records"] = log.latencies.size();
  if (!log.latencies.empty()) {
    j["latency"] = {{"onset_to_brake", stats_json(measure_latencies(log, LatencyBasis::Onset))},
                    {"capture_to_brake", stats_json(measure_latencies(log, LatencyBasis::Capture))}};
  } else {
    j["latency"] = nullptr;
  }
  j["emissions"] = {{"control", log.emissions.control}, {"comfort", log.emissions.comfort},
                    {"frames_captured", log.emissions.frames_captured}};
  j["timeline"] = timeline;
  r.json = j;

  std::ostringstream t;
  t << "scenario " << j["scenario"].get<std::string>() << " (" << j["stage"].get<std::string>() << "), "
    << log.rows.size() << " ticks\n";
  if (log.termination) t << "terminated at tick " << log.termination->tick << ": " << log.termination->reason << "\n";
  t << "lateral error after " << fixed(settle, 1) << " s: mean " << fixed(lat.mean, 4) << " m, max "
    << fixed(lat.max, 4) << " m over " << lat.samples << " ticks\n";
  if (min_gap) t << "gap: min " << fixed(*min_gap, 3) << " m, final " << fixed(*final_gap, 3) << " m\n";
  if (!log.latencies.empty()) {
    const auto on = measure_latencies(log, LatencyBasis::Onset);
    const auto cap = measure_latencies(log, LatencyBasis::Capture);
    t << "latency onset->brake: n " << on.count << ", mean " << fixed(on.mean, 3) << " s, p50 " << fixed(on.p50, 3)
      << ", p95 " << fixed(on.p95, 3) << ", max " << fixed(on.max, 3) << "\n";
    t << "latency capture->brake: mean " << fixed(cap.mean, 3) << " s, max " << fixed(cap.max, 3) << "\n";
  } else {
    t << "latency: no triggers\n";
  }
  t << "emissions: control " << log.emissions.control << ", comfort " << log.emissions.comfort << ", frames "
    << log.emissions.frames_captured << "\n";
  t << "timeline:\n";
  for (const auto& e : timeline) {
    t << "  " << fixed(e["time"].get<double>(), 2) << " s  " << e["kind"].get<std::string>() << "  "
      << e["detail"].get<std::string>() << "\n";
  }
  r.text = t.str();

  std::ostringstream csv;
  csv << "time,gap,lateral_error,speed,perceived_distance\n";
  for (const auto& row : log.rows) {
    csv << format_double(row.time) << ',' << (row.gap ? format_double(*row.gap) : "") << ','
        << format_double(row.lateral_error) << ',' << format_double(row.speed) << ','
        << (row.perceived_distance ? format_double(*row.perceived_distance) : "") << '\n';
  }
  r.series_csv = csv.str();
  return r;
}

void write_report(const std::filesystem::path& dir, const Report& r) {
  std::ofstream(dir / "report.txt") << r.text;
  std::ofstream(dir / "report.json") << r.json.dump(2) << '\n';
  std::ofstream(dir / "series.csv") << r.series_csv;
}

ReplayVerdict compare_rows(const std::vector<TickRow>& expected, const std::vector<TickRow>& actual) {
  const std::size_t n = std::min(expected.size(), actual.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = format_row(expected[i]);
    const std::string b = format_row(actual[i]);
    if (a != b) return {false, expected[i].tick, "logged:   " + a + "\nreplayed: " + b};
  }
  if (expected.size() != actual.size()) {
    const auto tick = static_cast<std::int64_t>(n);
    return {false, tick,
            "row count differs: logged " + std::to_string(expected.size()) + ", replayed " +
                std::to_string(actual.size())};
  }
  return {true, std::nullopt, "all " + std::to_string(n) + " rows identical"};
}

ReplayVerdict replay(const RunLog& log, const ScenarioConfig& scenario) {
  StageConfig stage = log.stage.is_object() ? stage_from_json(log.stage) : StageConfig{};
  if (stage.stage != Stage::Internal) throw ConfigError("only internal-stage runs can be replayed");
  stage.lockstep = true;
  const RunLog again = run_scenario(scenario, stage);
  return compare_rows(log.rows, again.rows);
}

}  // namespace vilbench
