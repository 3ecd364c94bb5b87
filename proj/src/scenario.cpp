#include "vilbench/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vilbench/errors.hpp"

namespace vilbench {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

Channel channel_from_string(std::string_view s) {
  if (s == "Primary") return Channel::Primary;
  if (s == "Secondary") return Channel::Secondary;
  throw ConfigError("unknown channel '" + std::string(s) + "'");
}

json camera_json(const CameraConfig& c) {
  return {{"fps", c.fps},
          {"processing_delay", c.processing_delay},
          {"extra_load_delay", c.extra_load_delay},
          {"range", c.range},
          {"distance_noise_std", c.distance_noise_std},
          {"dropout_prob", c.dropout_prob}};
}

CameraConfig camera_from(const json& j) {
  CameraConfig c;
  read(j, "fps", c.fps);
  read(j, "processing_delay", c.processing_delay);
  read(j, "extra_load_delay", c.extra_load_delay);
  read(j, "range", c.range);
  read(j, "distance_noise_std", c.distance_noise_std);
  read(j, "dropout_prob", c.dropout_prob);
  return c;
}

json vehicle_json(const VehicleParams& v) {
  return {{"mass", v.mass},
          {"wheelbase", v.wheelbase},
          {"max_traction_force", v.max_traction_force},
          {"max_brake_decel", v.max_brake_decel},
          {"c_rr", v.c_rr},
          {"c_aero", v.c_aero},
          {"max_steer", v.max_steer},
          {"front_overhang", v.front_overhang},
          {"rear_overhang", v.rear_overhang},
          {"steer_rate_limit", v.steer_rate_limit}};
}

VehicleParams vehicle_from(const json& j) {
  VehicleParams v;
  read(j, "mass", v.mass);
  read(j, "wheelbase", v.wheelbase);
  read(j, "max_traction_force", v.max_traction_force);
  read(j, "max_brake_decel", v.max_brake_decel);
  read(j, "c_rr", v.c_rr);
  read(j, "c_aero", v.c_aero);
  read(j, "max_steer", v.max_steer);
  read(j, "front_overhang", v.front_overhang);
  read(j, "rear_overhang", v.rear_overhang);
  read(j, "steer_rate_limit", v.steer_rate_limit);
  return v;
}

json acc_json(const AccParams& a) {
  return {{"standstill_gap", a.standstill_gap}, {"time_gap", a.time_gap}, {"gap_gain", a.gap_gain},
          {"speed_gain", a.speed_gain},         {"accel_min", a.accel_min}, {"accel_max", a.accel_max},
          {"cruise_speed", a.cruise_speed}};
}

AccParams acc_from(const json& j) {
  AccParams a;
  read(j, "standstill_gap", a.standstill_gap);
  read(j, "time_gap", a.time_gap);
  read(j, "gap_gain", a.gap_gain);
  read(j, "speed_gain", a.speed_gain);
  read(j, "accel_min", a.accel_min);
  read(j, "accel_max", a.accel_max);
  read(j, "cruise_speed", a.cruise_speed);
  return a;
}

json lka_json(const LkaParams& l) {
  return {{"lookahead_base", l.lookahead_base},
          {"lookahead_speed_gain", l.lookahead_speed_gain},
          {"planning_horizon", l.planning_horizon}};
}

LkaParams lka_from(const json& j) {
  LkaParams l;
  read(j, "lookahead_base", l.lookahead_base);
  read(j, "lookahead_speed_gain", l.lookahead_speed_gain);
  read(j, "planning_horizon", l.planning_horizon);
  return l;
}

json gateway_json(const GatewayConfig& g) {
  return {{"rx_timeout", g.rx_timeout},
          {"fault_threshold", g.fault_threshold},
          {"handover_speed", g.handover_speed},
          {"fallback_throttle_cap", g.fallback_throttle_cap},
          {"fallback_steer_fraction", g.fallback_steer_fraction}};
}

GatewayConfig gateway_from(const json& j) {
  GatewayConfig g;
  read(j, "rx_timeout", g.rx_timeout);
  read(j, "fault_threshold", g.fault_threshold);
  read(j, "handover_speed", g.handover_speed);
  read(j, "fallback_throttle_cap", g.fallback_throttle_cap);
  read(j, "fallback_steer_fraction", g.fallback_steer_fraction);
  return g;
}

json event_json(const ScenarioEvent& e) {
  json j = {{"time", e.time}, {"kind", to_string(e.kind)}};
  switch (e.kind) {
    case EventKind::PersonAppears:
      j["distance"] = e.distance;
      j["lateral_offset"] = e.lateral_offset;
      j["duration"] = e.duration;
      break;
    case EventKind::EnableLoad:
      j["delay"] = e.delay;
      break;
    case EventKind::DriverInput:
      j["throttle"] = e.driver.throttle;
      j["brake"] = e.driver.brake;
      j["steer"] = e.driver.steer;
      j["turn_signal"] = to_string(e.driver.turn_signal);
      break;
    case EventKind::ModeRequest:
      j["mode"] = to_string(e.mode);
      j["source"] = to_string(e.source);
      break;
    case EventKind::KillChannel:
      j["channel"] = to_string(e.channel);
      break;
    case EventKind::EmergencyStop:
    case EventKind::BenchReset:
      break;
  }
  return j;
}

ScenarioEvent event_from(const json& j) {
  ScenarioEvent e;
  read(j, "time", e.time);
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  read(j, "distance", e.distance);
  read(j, "lateral_offset", e.lateral_offset);
  read(j, "duration", e.duration);
  read(j, "delay", e.delay);
  read(j, "throttle", e.driver.throttle);
  read(j, "brake", e.driver.brake);
  read(j, "steer", e.driver.steer);
  if (j.contains("turn_signal")) e.driver.turn_signal = turn_signal_from_string(j["turn_signal"].get<std::string>());
  if (j.contains("mode")) e.mode = gateway_mode_from_string(j["mode"].get<std::string>());
  if (j.contains("source")) e.source = mode_source_from_string(j["source"].get<std::string>());
  if (j.contains("channel")) e.channel = channel_from_string(j["channel"].get<std::string>());
  return e;
}

std::optional<double> opt_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename F>
auto config_guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::ManualDrive: return "ManualDrive";
    case ScenarioKind::AccLka: return "AccLka";
    case ScenarioKind::EmergencyBrake: return "EmergencyBrake";
  }
  return "?";
}

ScenarioKind scenario_kind_from_string(std::string_view s) {
  if (s == "ManualDrive") return ScenarioKind::ManualDrive;
  if (s == "AccLka") return ScenarioKind::AccLka;
  if (s == "EmergencyBrake") return ScenarioKind::EmergencyBrake;
  throw ConfigError("unknown scenario kind '" + std::string(s) + "'");
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Internal: return "internal";
    case Stage::External: return "external";
    case Stage::Vil: return "vil";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  if (s == "internal") return Stage::Internal;
  if (s == "external") return Stage::External;
  if (s == "vil") return Stage::Vil;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::PersonAppears: return "person_appears";
    case EventKind::EnableLoad: return "enable_load";
    case EventKind::DriverInput: return "driver_input";
    case EventKind::ModeRequest: return "mode_request";
    case EventKind::EmergencyStop: return "estop";
    case EventKind::BenchReset: return "bench_reset";
    case EventKind::KillChannel: return "kill_channel";
  }
  return "?";
}

EventKind event_kind_from_string(std::string_view s) {
  for (auto k : {EventKind::PersonAppears, EventKind::EnableLoad, EventKind::DriverInput, EventKind::ModeRequest,
                 EventKind::EmergencyStop, EventKind::BenchReset, EventKind::KillChannel}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown event kind '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be > 0");
  if (!(tick_period > 0.0)) throw ConfigError("tick_period must be > 0");
  const auto tick_us = std::llround(tick_period * 1e6);
  if (std::abs(static_cast<double>(tick_us) * 1e-6 - tick_period) > 1e-12 || tick_us % 20'000 != 0) {
    throw ConfigError("tick_period must be a whole multiple of the 20 ms control period");
  }
  if (tick_count() < 1) throw ConfigError("duration shorter than one tick");
  if (settle_window < 0.0) throw ConfigError("settle_window must be >= 0");
  if (!(eb_trigger_distance > 0.0)) throw ConfigError("eb_trigger_distance must be > 0");
  camera.validate();
  vehicle.validate();
  acc.validate();
  lka.validate();
  gateway.validate();
  (void)resolve_map(map);
  for (const auto& a : actors) {
    if (a.kind == ActorKind::EgoVehicle) throw ConfigError("the ego is configured separately from actors");
    if (a.speed < 0.0) throw ConfigError("actor speed must be >= 0");
  }
  for (const auto& e : events) {
    if (e.time < 0.0) throw ConfigError("event time must be >= 0");
    if (e.kind == EventKind::PersonAppears && !(e.distance > 0.0)) throw ConfigError("person distance must be > 0");
    if (e.kind == EventKind::EnableLoad && e.delay < 0.0) throw ConfigError("load delay must be >= 0");
  }
}

std::int64_t ScenarioConfig::tick_count() const { return std::llround(duration / tick_period); }

CecasConfig ScenarioConfig::cecas_config() const {
  CecasConfig c;
  c.vehicle = vehicle;
  c.acc = acc;
  c.lka = lka;
  c.lka.wheelbase = vehicle.wheelbase;
  c.eb_trigger_distance = eb_trigger_distance;
  c.auto_engage = auto_engage;
  return c;
}

json to_json(const ScenarioConfig& s) {
  json actors = json::array();
  for (const auto& a : s.actors) {
    actors.push_back({{"kind", to_string(a.kind)}, {"s", a.s}, {"lateral_offset", a.lateral_offset}, {"speed", a.speed}});
  }
  json events = json::array();
  for (const auto& e : s.events) events.push_back(event_json(e));
  return {{"name", to_string(s.name)},
          {"map", s.map},
          {"duration", s.duration},
          {"seed", s.seed},
          {"tick_period", s.tick_period},
          {"camera", camera_json(s.camera)},
          {"camera_stream_start", s.camera_stream_start},
          {"vehicle", vehicle_json(s.vehicle)},
          {"acc", acc_json(s.acc)},
          {"lka", lka_json(s.lka)},
          {"gateway", gateway_json(s.gateway)},
          {"eb_trigger_distance", s.eb_trigger_distance},
          {"settle_window", s.settle_window},
          {"auto_engage", s.auto_engage},
          {"ego", {{"s", s.ego.s}, {"lateral_offset", s.ego.lateral_offset}, {"speed", s.ego.speed}}},
          {"actors", actors},
          {"events", events}};
}

ScenarioConfig scenario_from_json(const json& j) {
  return config_guard([&] {
    if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
    ScenarioConfig s;
    if (j.contains("name")) s.name = scenario_kind_from_string(j["name"].get<std::string>());
    s.auto_engage = s.name != ScenarioKind::ManualDrive;
    read(j, "map", s.map);
    read(j, "duration", s.duration);
    read(j, "seed", s.seed);
    read(j, "tick_period", s.tick_period);
    if (j.contains("camera")) s.camera = camera_from(j["camera"]);
    read(j, "camera_stream_start", s.camera_stream_start);
    if (j.contains("vehicle")) s.vehicle = vehicle_from(j["vehicle"]);
    if (j.contains("acc")) s.acc = acc_from(j["acc"]);
    if (j.contains("lka")) s.lka = lka_from(j["lka"]);
    if (j.contains("gateway")) s.gateway = gateway_from(j["gateway"]);
    s.gateway.max_steer = s.vehicle.max_steer;
    read(j, "eb_trigger_distance", s.eb_trigger_distance);
    read(j, "settle_window", s.settle_window);
    read(j, "auto_engage", s.auto_engage);
    if (j.contains("ego")) {
      read(j["ego"], "s", s.ego.s);
      read(j["ego"], "lateral_offset", s.ego.lateral_offset);
      read(j["ego"], "speed", s.ego.speed);
    }
    if (j.contains("actors")) {
      for (const auto& a : j["actors"]) {
        ActorSpec spec;
        if (a.contains("kind")) spec.kind = actor_kind_from_string(a["kind"].get<std::string>());
        read(a, "s", spec.s);
        read(a, "lateral_offset", spec.lateral_offset);
        read(a, "speed", spec.speed);
        s.actors.push_back(spec);
      }
    }
    if (j.contains("events")) {
      for (const auto& e : j["events"]) s.events.push_back(event_from(e));
    }
    s.validate();
    return s;
  });
}

json to_json(const StageConfig& s) {
  return {{"stage", to_string(s.stage)},
          {"lockstep", s.lockstep},
          {"transport_delay", s.transport_delay},
          {"transport_jitter", s.transport_jitter},
          {"kill_primary_at", opt_json(s.kill_primary_at)},
          {"kill_secondary_at", opt_json(s.kill_secondary_at)}};
}

StageConfig stage_from_json(const json& j) {
  return config_guard([&] {
    StageConfig s;
    if (j.contains("stage")) s.stage = stage_from_string(j["stage"].get<std::string>());
    read(j, "lockstep", s.lockstep);
    read(j, "transport_delay", s.transport_delay);
    read(j, "transport_jitter", s.transport_jitter);
    s.kill_primary_at = opt_double(j, "kill_primary_at");
    s.kill_secondary_at = opt_double(j, "kill_secondary_at");
    return s;
  });
}

json to_json(const ControlCommand& c) {
  return {{"throttle", c.throttle}, {"brake", c.brake},         {"steer", c.steer},
          {"turn_signal", to_string(c.turn_signal)}, {"issued_at", c.issued_at}, {"seq", c.seq}};
}

ControlCommand command_from_json(const json& j) {
  ControlCommand c;
  read(j, "throttle", c.throttle);
  read(j, "brake", c.brake);
  read(j, "steer", c.steer);
  if (j.contains("turn_signal")) c.turn_signal = turn_signal_from_string(j["turn_signal"].get<std::string>());
  read(j, "issued_at", c.issued_at);
  read(j, "seq", c.seq);
  return c;
}

json to_json(const EgoVehicleState& e) {
  return {{"x", e.pose.x()},         {"y", e.pose.y()},   {"heading", e.pose.heading()},
          {"speed", e.speed},        {"accel", e.accel},  {"steer", e.steer},
          {"gear", e.gear == Gear::Drive ? "Drive" : "Neutral"}};
}

EgoVehicleState ego_from_json(const json& j) {
  EgoVehicleState e;
  e.pose = Pose2D(j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>());
  e.speed = j.at("speed").get<double>();
  e.accel = j.at("accel").get<double>();
  e.steer = j.at("steer").get<double>();
  e.gear = j.value("gear", std::string("Drive")) == "Neutral" ? Gear::Neutral : Gear::Drive;
  return e;
}

json to_json(const Detection& d) {
  json objects = json::array();
  for (const auto& o : d.objects) {
    objects.push_back({{"class", to_string(o.object_class)},
                       {"distance", o.distance},
                       {"lateral_offset", o.lateral_offset},
                       {"confidence", o.confidence}});
  }
  return {{"frame_id", d.frame_id},
          {"capture_time", d.capture_time},
          {"delivery_time", d.delivery_time},
          {"wall_capture_time", d.wall_capture_time},
          {"objects", objects}};
}

Detection detection_from_json(const json& j) {
  Detection d;
  d.frame_id = j.at("frame_id").get<std::int64_t>();
  d.capture_time = j.at("capture_time").get<double>();
  d.delivery_time = j.at("delivery_time").get<double>();
  read(j, "wall_capture_time", d.wall_capture_time);
  for (const auto& o : j.at("objects")) {
    DetectedObject obj;
    obj.object_class = object_class_from_string(o.at("class").get<std::string>());
    obj.distance = o.at("distance").get<double>();
    read(o, "lateral_offset", obj.lateral_offset);
    read(o, "confidence", obj.confidence);
    d.objects.push_back(obj);
  }
  return d;
}

json to_json(const EmergencyBrakeState& eb) {
  auto opt_i = [](const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); };
  return {{"status", to_string(eb.status)},
          {"trigger_time", opt_json(eb.trigger_time)},
          {"trigger_frame", opt_i(eb.trigger_frame)},
          {"trigger_capture_time", opt_json(eb.trigger_capture_time)},
          {"trigger_distance", eb.trigger_distance}};
}

EmergencyBrakeState eb_from_json(const json& j) {
  EmergencyBrakeState eb;
  eb.status = j.at("status").get<std::string>() == "Braking" ? EbStatus::Braking : EbStatus::Normal;
  eb.trigger_time = opt_double(j, "trigger_time");
  if (j.contains("trigger_frame") && !j["trigger_frame"].is_null()) eb.trigger_frame = j["trigger_frame"].get<std::int64_t>();
  eb.trigger_capture_time = opt_double(j, "trigger_capture_time");
  read(j, "trigger_distance", eb.trigger_distance);
  return eb;
}

std::vector<std::string> builtin_scenario_names() { return {"manual_drive", "acc_lka", "emergency_brake"}; }

ScenarioConfig builtin_scenario(std::string_view name) {
  ScenarioConfig s;
  if (name == "acc_lka") {
    s.name = ScenarioKind::AccLka;
    s.map = "oval_588";
    s.duration = 120.0;
    s.actors.push_back({ActorKind::LeadVehicle, 50.0, 0.0, 8.333});
  } else if (name == "emergency_brake") {
    // ACC following is the baseline; the person stands in front of the bench camera.
    s.name = ScenarioKind::EmergencyBrake;
    s.map = "straight_1km";
    s.duration = 20.0;
    s.actors.push_back({ActorKind::LeadVehicle, 50.0, 0.0, 8.333});
    ScenarioEvent person;
    person.time = 10.0;
    person.kind = EventKind::PersonAppears;
    person.distance = 15.0;
    s.events.push_back(person);
  } else if (name == "manual_drive") {
    s.name = ScenarioKind::ManualDrive;
    s.map = "straight_1km";
    s.duration = 30.0;
    s.auto_engage = false;
    s.ego.s = 10.0;
    auto drive = [&](double t, double throttle, double brake, double steer, TurnSignal ts) {
      ScenarioEvent e;
      e.time = t;
      e.kind = EventKind::DriverInput;
      e.driver.throttle = throttle;
      e.driver.brake = brake;
      e.driver.steer = steer;
      e.driver.turn_signal = ts;
      s.events.push_back(e);
    };
    drive(0.0, 0.3, 0.0, 0.0, TurnSignal::Off);
    drive(8.0, 0.1, 0.0, 0.01, TurnSignal::Left);
    drive(10.0, 0.1, 0.0, -0.01, TurnSignal::Left);
    drive(12.0, 0.1, 0.0, 0.0, TurnSignal::Off);
    drive(20.0, 0.0, 0.4, 0.0, TurnSignal::Off);
  } else {
    throw ConfigError("unknown scenario '" + std::string(name) + "'");
  }
  s.gateway.max_steer = s.vehicle.max_steer;
  s.validate();
  return s;
}

ScenarioConfig resolve_scenario(const std::string& name_or_file) {
  for (const auto& n : builtin_scenario_names()) {
    if (n == name_or_file) return builtin_scenario(n);
  }
  std::ifstream in(name_or_file);
  if (!in) throw ConfigError("no builtin scenario or readable file named '" + name_or_file + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace vilbench
