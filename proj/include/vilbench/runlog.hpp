#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vilbench/cecas.hpp"
#include "vilbench/command.hpp"
#include "vilbench/gateway.hpp"

namespace vilbench {

// One row per world tick: state before the step and the command applied during it.
struct TickRow {
  std::int64_t tick = 0;
  double time = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double steer = 0.0;
  double throttle = 0.0;
  double brake = 0.0;
  double cmd_steer = 0.0;
  TurnSignal turn_signal = TurnSignal::Off;
  double lateral_error = 0.0;
  std::optional<double> gap;
  std::optional<double> perceived_distance;
  GatewayMode mode = GatewayMode::ManualDrive;
  EbStatus eb_status = EbStatus::Normal;
  ActiveChannel active_channel = ActiveChannel::None;
  double cmd_age = 0.0;  // now minus issued_at of the applied command

  friend bool operator==(const TickRow&, const TickRow&) = default;
};

// Columns that depend only on the simulated physics; compared across stages.
inline constexpr std::size_t kPhysicsColumns = 8;  // tick .. steer

struct LatencyRecord {
  std::int64_t trigger_frame = 0;
  double onset_time = 0.0;  // stimulus became visible
  double capture_time = 0.0;
  double trigger_time = 0.0;
  double brake_applied_time = 0.0;  // first tick the dynamics received brake = 1

  double latency_capture_to_brake() const { return brake_applied_time - capture_time; }
  double latency_onset_to_brake() const { return brake_applied_time - onset_time; }
  friend bool operator==(const LatencyRecord&, const LatencyRecord&) = default;
};

struct EventMarker {
  std::int64_t tick = 0;
  double time = 0.0;
  std::string kind;
  std::string detail;

  friend bool operator==(const EventMarker&, const EventMarker&) = default;
};

struct Termination {
  std::int64_t tick = 0;
  std::string reason;

  friend bool operator==(const Termination&, const Termination&) = default;
};

struct EmissionCounters {
  std::int64_t base_ticks = 0;
  std::int64_t control = 0;
  std::int64_t comfort = 0;
  std::int64_t frames_captured = 0;
  std::int64_t frames_dropped = 0;
  std::int64_t detections_delivered = 0;

  friend bool operator==(const EmissionCounters&, const EmissionCounters&) = default;
};

struct RunLog {
  nlohmann::json scenario;  // config snapshot
  nlohmann::json stage;
  std::vector<TickRow> rows;
  std::vector<LatencyRecord> latencies;
  std::vector<EventMarker> events;
  std::optional<Termination> termination;
  EmissionCounters emissions;
  nlohmann::json wall;  // wall-clock statistics, null in the internal stage
};

const std::vector<std::string>& csv_header();
// Shortest round-trip decimal for every double, empty cell for absent values.
std::string format_row(const TickRow& row);
TickRow parse_row(std::string_view line);
std::string format_double(double v);

std::string rows_to_csv(const std::vector<TickRow>& rows);
std::vector<TickRow> rows_from_csv(std::string_view csv);

nlohmann::json sidecar_json(const RunLog& log);

// Writes run.csv and run.json into `dir`, creating it.
void write_run(const std::filesystem::path& dir, const RunLog& log);
// Throws ConfigError when the files are missing or malformed.
RunLog read_run(const std::filesystem::path& dir);

}  // namespace vilbench
