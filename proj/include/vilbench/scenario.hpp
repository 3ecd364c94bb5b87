#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vilbench/cecas.hpp"
#include "vilbench/command.hpp"
#include "vilbench/dynamics.hpp"
#include "vilbench/gateway.hpp"
#include "vilbench/sensors.hpp"
#include "vilbench/world.hpp"

namespace vilbench {

enum class ScenarioKind { ManualDrive, AccLka, EmergencyBrake };
std::string_view to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(std::string_view s);

enum class Stage { Internal, External, Vil };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

enum class EventKind {
  PersonAppears,  // a person steps in front of the bench camera
  EnableLoad,     // extra processing delay on every later frame
  DriverInput,    // scripted pedal/steering state from now on
  ModeRequest,
  EmergencyStop,  // bench stop
  BenchReset,     // bench resets EmergencyStop to ManualDrive
  KillChannel,
};
std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct ScenarioEvent {
  double time = 0.0;
  EventKind kind = EventKind::PersonAppears;
  // PersonAppears
  double distance = 15.0;
  double lateral_offset = 0.0;
  double duration = 0.0;  // 0 means the person stays
  // EnableLoad
  double delay = 0.0;
  // DriverInput
  ControlCommand driver;
  // ModeRequest
  GatewayMode mode = GatewayMode::ManualDrive;
  ModeSource source = ModeSource::Driver;
  // KillChannel
  Channel channel = Channel::Primary;
};

struct ActorSpec {
  ActorKind kind = ActorKind::LeadVehicle;
  double s = 0.0;  // arc length of the actor center on the centerline
  double lateral_offset = 0.0;
  double speed = 0.0;
};

struct EgoSpec {
  double s = 0.0;
  double lateral_offset = 0.0;
  double speed = 0.0;
};

struct ScenarioConfig {
  ScenarioKind name = ScenarioKind::AccLka;
  std::string map = "oval_588";
  double duration = 120.0;
  std::uint64_t seed = 42;
  double tick_period = kDefaultTickPeriod;
  CameraConfig camera;
  double camera_stream_start = 0.0;
  VehicleParams vehicle;
  AccParams acc;
  LkaParams lka;
  GatewayConfig gateway;
  double eb_trigger_distance = 25.0;
  double settle_window = 5.0;  // lateral-error statistics start after this
  bool auto_engage = true;
  EgoSpec ego;
  std::vector<ActorSpec> actors;
  std::vector<ScenarioEvent> events;

  // Throws ConfigError.
  void validate() const;
  std::int64_t tick_count() const;
  CecasConfig cecas_config() const;
};

// Options of one deployment stage.
struct StageConfig {
  Stage stage = Stage::Internal;
  bool lockstep = true;
  double transport_delay = 0.0;   // s per hop
  double transport_jitter = 0.0;  // s, uniform extra per hop, seeded
  std::optional<double> kill_primary_at;
  std::optional<double> kill_secondary_at;
  std::string cecas_endpoint;    // host:port, External
  std::string gateway_endpoint;  // host:port, Vil
};

nlohmann::json to_json(const ScenarioConfig& s);
// Missing fields take their defaults. Throws ConfigError on type errors and invalid values.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageConfig& s);
StageConfig stage_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ControlCommand& c);
ControlCommand command_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EgoVehicleState& e);
EgoVehicleState ego_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EmergencyBrakeState& eb);
EmergencyBrakeState eb_from_json(const nlohmann::json& j);

// "manual_drive", "acc_lka", "emergency_brake".
std::vector<std::string> builtin_scenario_names();
ScenarioConfig builtin_scenario(std::string_view name);
// A builtin name or a JSON file path.
ScenarioConfig resolve_scenario(const std::string& name_or_file);

}  // namespace vilbench
