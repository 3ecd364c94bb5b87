#include "vilbench/nodes.hpp"

#include <algorithm>
#include <chrono>

#include "vilbench/errors.hpp"

namespace vilbench {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

Channel channel_from(const std::string& s) {
  if (s == "Primary") return Channel::Primary;
  if (s == "Secondary") return Channel::Secondary;
  throw ProtocolViolation("unknown channel '" + s + "'");
}

ActiveChannel active_from(const std::string& s) {
  if (s == "Primary") return ActiveChannel::Primary;
  if (s == "Secondary") return ActiveChannel::Secondary;
  if (s == "None") return ActiveChannel::None;
  throw ProtocolViolation("unknown active channel '" + s + "'");
}

json hello(const std::string& role) { return {{"type", msg::kHello}, {"role", role}, {"version", kProtocolVersion}}; }

void expect_type(const json& m, const char* type) {
  if (m.at("type").get<std::string>() != type) {
    throw ProtocolViolation("expected " + std::string(type) + ", got " + m["type"].get<std::string>());
  }
}

void check_version(const json& m) {
  if (m.value("version", 0) != kProtocolVersion) throw ProtocolViolation("protocol version mismatch");
}

json mode_command_json(const ModeCommand& c, std::int64_t tick) {
  return {{"type", msg::kModeEvent},
          {"tick", tick},
          {"request", to_string(c.request)},
          {"source", to_string(c.source)},
          {"reason", c.reason}};
}

ModeCommand mode_command_from(const json& j) {
  return {gateway_mode_from_string(j.at("request").get<std::string>()),
          mode_source_from_string(j.at("source").get<std::string>()), j.value("reason", std::string())};
}

json frame_json(const SdsFrame& f, std::int64_t tick) {
  return {{"type", msg::kGatewayFrame}, {"tick", tick}, {"channel", to_string(f.channel)}, {"hex", to_hex(f.bytes)}};
}

SdsFrame frame_from(const json& j) {
  SdsFrame f;
  f.channel = channel_from(j.at("channel").get<std::string>());
  try {
    f.bytes = from_hex(j.at("hex").get<std::string>());
  } catch (const MalformedFrame& e) {
    throw ProtocolViolation(e.what());
  }
  return f;
}

json tick_state_json(const ControlInput& in, std::optional<GatewayMode> mode) {
  json j = {{"type", msg::kTickState}, {"tick", in.tick}, {"now", in.now}, {"ego", to_json(in.ego)}};
  if (mode) j["mode"] = to_string(*mode);
  j["driver"] = in.driver ? to_json(*in.driver) : json(nullptr);
  return j;
}

json output_json(const ControlOutput& o, std::int64_t tick) {
  return {{"type", msg::kControlReply},
          {"tick", tick},
          {"command", to_json(o.command)},
          {"mode", to_string(o.mode)},
          {"active", to_string(o.active)},
          {"eb", to_json(o.eb)},
          {"eb_triggered_now", o.eb_triggered_now},
          {"perceived_distance", opt_json(o.perceived_distance)},
          {"error", o.error ? json(*o.error) : json(nullptr)}};
}

ControlOutput output_from(const json& j) {
  ControlOutput o;
  o.command = command_from_json(j.at("command"));
  o.mode = gateway_mode_from_string(j.at("mode").get<std::string>());
  o.active = active_from(j.at("active").get<std::string>());
  o.eb = eb_from_json(j.at("eb"));
  o.eb_triggered_now = j.at("eb_triggered_now").get<bool>();
  o.perceived_distance = opt_double(j, "perceived_distance");
  if (!j.at("error").is_null()) o.error = j["error"].get<std::string>();
  return o;
}

// Runs the gateway half of a control cycle on frames already produced by the SDS side.
ControlOutput run_gateway(GatewayHost& gw, const ControlInput& in, const std::vector<SdsFrame>& frames,
                          const ControlOutput& telemetry) {
  for (const auto& f : frames) gw.ingest(f, in.now, in.ego.speed);
  const GatewayOutput g = gw.cycle(in.now, in.driver);
  ControlOutput out = telemetry;
  out.command = g.command;
  out.mode = g.mode;
  out.active = g.active;
  out.events = gw.take_events();
  return out;
}

ControlOutput telemetry_of(const CecasHost::Result& r) {
  ControlOutput o;
  o.command = r.out.command;
  o.eb = r.out.eb;
  o.eb_triggered_now = r.out.eb_triggered_now;
  o.perceived_distance = r.out.perceived_distance;
  o.error = r.error;
  return o;
}

json cecas_reply_json(const CecasHost::Result& r, std::int64_t tick) {
  ControlOutput o = telemetry_of(r);
  return output_json(o, tick);
}

std::uint64_t hop_seed(const ScenarioConfig& s, std::uint64_t role) { return s.seed * 0x9E3779B97F4A7C15ULL + role; }

class RttStats {
 public:
  void add(double s) { samples_.push_back(s); }
  json to_json() const {
    if (samples_.empty()) return {{"exchanges", 0}};
    auto sorted = samples_;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    const auto pick = [&](double q) { return sorted[static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1))]; };
    return {{"exchanges", sorted.size()},
            {"rtt_mean", sum / static_cast<double>(sorted.size())},
            {"rtt_p50", pick(0.5)},
            {"rtt_p95", pick(0.95)},
            {"rtt_max", sorted.back()}};
  }

 private:
  std::vector<double> samples_;
};

class InProcessPath : public ControlPath {
 public:
  InProcessPath(const ScenarioConfig& s, const StageConfig& st)
      : cecas_(s), gateway_(s.gateway, st.kill_primary_at, st.kill_secondary_at) {}

  ControlOutput exchange(const ControlInput& in) override {
    for (const auto& c : in.mode_commands) gateway_.apply(c, in.now, in.ego.speed);
    for (const auto& d : in.detections) cecas_.on_detection(d);
    const auto r = cecas_.cycle(in.tick, in.now, in.ego, gateway_.gateway().mode());
    if (r.error) return telemetry_of(r);
    return run_gateway(gateway_, in, r.frames, telemetry_of(r));
  }

 private:
  CecasHost cecas_;
  GatewayHost gateway_;
};

// Common plumbing of the two remote paths.
class RemotePath : public ControlPath {
 public:
  RemotePath(const ScenarioConfig& s, const StageConfig& st, const std::string& endpoint, bool record)
      : lockstep_(st.lockstep) {
    conn_ = Connection::connect(endpoint);
    conn_.record_transcript(record);
    conn_.send({{"type", msg::kHello},
                {"role", "world"},
                {"version", kProtocolVersion},
                {"scenario", to_json(s)},
                {"stage", to_json(st)}});
    const json reply = conn_.receive();
    expect_type(reply, msg::kHello);
    check_version(reply);
    conn_.set_hop_delay(st.transport_delay, st.transport_jitter, hop_seed(s, 1));
    start_ = Clock::now();
  }

  void finish() override {
    conn_.send({{"type", msg::kBye}});
    // Late replies of a free-running session may still be queued ahead of the Bye.
    while (true) {
      const json m = conn_.receive();
      if (m["type"] == msg::kBye) break;
      if (lockstep_) throw ProtocolViolation("unexpected " + m["type"].get<std::string>() + " before Bye");
    }
    conn_.close();
  }

  json wall_stats() const override {
    json j = rtt_.to_json();
    j["lockstep"] = lockstep_;
    j["late_replies"] = late_replies_;
    return j;
  }

  const std::vector<TranscriptEntry>* transcript() const override { return &conn_.transcript(); }

 protected:
  double wall_now() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

  void send_detections(const ControlInput& in) {
    for (auto d : in.detections) {
      d.wall_capture_time = wall_now();
      conn_.send({{"type", msg::kDetection}, {"tick", in.tick}, {"detection", to_json(d)}});
    }
  }

  // Lockstep: blocks for the reply of `tick`. Free-running: drains whatever has arrived.
  // `on_message` sees every non-reply message; returns the reply, if any.
  template <typename OnMessage>
  std::optional<json> collect(std::int64_t tick, OnMessage&& on_message) {
    std::optional<json> reply;
    while (true) {
      std::optional<json> m;
      if (lockstep_) {
        m = conn_.receive();
      } else {
        m = conn_.receive_for(0.0);
        if (!m) return reply;
      }
      const auto t = m->value("tick", std::int64_t{-1});
      if (lockstep_ && t != tick) {
        throw ProtocolViolation("message for tick " + std::to_string(t) + " while waiting for tick " +
                                std::to_string(tick));
      }
      if ((*m)["type"] == msg::kControlReply) {
        if (t != tick) ++late_replies_;
        reply = std::move(m);
        if (lockstep_) return reply;
      } else {
        on_message(*m);
      }
    }
  }

  Connection conn_;
  bool lockstep_;
  RttStats rtt_;
  std::int64_t late_replies_ = 0;
  Clock::time_point start_;
};

// CeCaS in its own process; the gateway stays with the world.
class ExternalPath : public RemotePath {
 public:
  ExternalPath(const ScenarioConfig& s, const StageConfig& st, bool record)
      : RemotePath(s, st, st.cecas_endpoint, record),
        gateway_(s.gateway, st.kill_primary_at, st.kill_secondary_at) {}

  ControlOutput exchange(const ControlInput& in) override {
    for (const auto& c : in.mode_commands) gateway_.apply(c, in.now, in.ego.speed);
    send_detections(in);
    const auto sent = Clock::now();
    conn_.send(tick_state_json(in, gateway_.gateway().mode()));
    std::vector<SdsFrame> frames;
    const auto reply = collect(in.tick, [&](const json& m) {
      if (m["type"] != msg::kGatewayFrame) throw ProtocolViolation("unexpected " + m["type"].get<std::string>());
      frames.push_back(frame_from(m));
    });
    if (reply) {
      if (lockstep_) rtt_.add(std::chrono::duration<double>(Clock::now() - sent).count());
      telemetry_ = output_from(*reply);
      if (telemetry_.error) return telemetry_;
    }
    ControlOutput out = run_gateway(gateway_, in, frames, telemetry_);
    telemetry_.eb_triggered_now = false;
    return out;
  }

 private:
  GatewayHost gateway_;
  ControlOutput telemetry_;
};

// Gateway and CeCaS both remote: world -> gateway node -> CeCaS node.
class VilPath : public RemotePath {
 public:
  VilPath(const ScenarioConfig& s, const StageConfig& st, bool record)
      : RemotePath(s, st, st.gateway_endpoint, record) {}

  ControlOutput exchange(const ControlInput& in) override {
    for (const auto& c : in.mode_commands) conn_.send(mode_command_json(c, in.tick));
    send_detections(in);
    const auto sent = Clock::now();
    conn_.send(tick_state_json(in, std::nullopt));
    std::vector<GatewayEvent> events;
    const auto reply = collect(in.tick, [&](const json& m) {
      if (m["type"] != msg::kModeEvent) throw ProtocolViolation("unexpected " + m["type"].get<std::string>());
      events.push_back(gateway_event_from_json(m));
    });
    if (reply) {
      if (lockstep_) rtt_.add(std::chrono::duration<double>(Clock::now() - sent).count());
      last_ = output_from(*reply);
    } else {
      last_.eb_triggered_now = false;
    }
    ControlOutput out = last_;
    out.events = std::move(events);
    last_.eb_triggered_now = false;
    return out;
  }

 private:
  ControlOutput last_;
};

}  // namespace

json gateway_event_json(const GatewayEvent& e, std::int64_t tick) {
  return {{"type", msg::kModeEvent}, {"tick", tick}, {"time", e.time}, {"kind", e.kind}, {"detail", e.detail}};
}

GatewayEvent gateway_event_from_json(const json& j) {
  return {j.at("time").get<double>(), j.at("kind").get<std::string>(), j.value("detail", std::string())};
}

CecasHost::CecasHost(const ScenarioConfig& scenario)
    : server_(resolve_map(scenario.map), scenario.cecas_config()) {}

CecasHost::Result CecasHost::cycle(std::int64_t tick, double now, const EgoVehicleState& ego, GatewayMode mode) {
  Result r;
  try {
    r.out = server_.cycle({tick, now, ego, mode});
  } catch (const OffTrack& e) {
    r.error = std::string("off track: ") + e.what();
    return r;
  }
  if (r.out.mode_request) {
    const std::uint8_t payload[] = {static_cast<std::uint8_t>(*r.out.mode_request)};
    r.frames.push_back({Channel::Primary, serialize_frame(mode_.send(payload))});
  }
  const auto payload = encode_command_payload(r.out.command);
  r.frames.push_back({Channel::Primary, serialize_frame(primary_.send(payload))});
  r.frames.push_back({Channel::Secondary, serialize_frame(secondary_.send(payload))});
  return r;
}

GatewayHost::GatewayHost(GatewayConfig cfg, std::optional<double> kill_primary_at,
                         std::optional<double> kill_secondary_at)
    : gateway_(cfg), kill_primary_at_(kill_primary_at), kill_secondary_at_(kill_secondary_at) {}

bool GatewayHost::channel_killed(Channel c, double now) const {
  const auto& at = c == Channel::Primary ? kill_primary_at_ : kill_secondary_at_;
  return at && now + kTimeEpsilon >= *at;
}

void GatewayHost::apply(const ModeCommand& command, double now, double vehicle_speed) {
  if (command.request == GatewayMode::EmergencyStop && command.source == ModeSource::Bench) {
    gateway_.emergency_stop(now, command.reason.empty() ? "bench" : command.reason);
  } else {
    gateway_.request_mode(command.request, command.source, now, vehicle_speed);
  }
}

void GatewayHost::ingest(const SdsFrame& frame, double now, double vehicle_speed) {
  if (channel_killed(frame.channel, now)) return;
  gateway_.receive_bytes(frame.channel, frame.bytes, now, vehicle_speed);
}

GatewayOutput GatewayHost::cycle(double now, const std::optional<ControlCommand>& driver) {
  if (!primary_kill_logged_ && channel_killed(Channel::Primary, now)) {
    primary_kill_logged_ = true;
    extra_events_.push_back({now, "channel_killed", "Primary"});
  }
  if (!secondary_kill_logged_ && channel_killed(Channel::Secondary, now)) {
    secondary_kill_logged_ = true;
    extra_events_.push_back({now, "channel_killed", "Secondary"});
  }
  return gateway_.cycle(now, driver);
}

std::vector<GatewayEvent> GatewayHost::take_events() {
  auto events = std::move(extra_events_);
  extra_events_.clear();
  for (auto& e : gateway_.take_events()) events.push_back(std::move(e));
  return events;
}

std::unique_ptr<ControlPath> make_control_path(const ScenarioConfig& scenario, const StageConfig& stage,
                                               bool record_transcript) {
  switch (stage.stage) {
    case Stage::Internal:
      return std::make_unique<InProcessPath>(scenario, stage);
    case Stage::External:
      if (stage.cecas_endpoint.empty()) throw ConfigError("external stage needs a CeCaS endpoint");
      return std::make_unique<ExternalPath>(scenario, stage, record_transcript);
    case Stage::Vil:
      if (stage.gateway_endpoint.empty()) throw ConfigError("vil stage needs a gateway endpoint");
      return std::make_unique<VilPath>(scenario, stage, record_transcript);
  }
  throw ConfigError("unknown stage");
}

void serve_cecas(Connection conn) {
  const json h = conn.receive();
  expect_type(h, msg::kHello);
  check_version(h);
  const ScenarioConfig scenario = scenario_from_json(h.at("scenario"));
  const StageConfig stage = stage_from_json(h.at("stage"));
  CecasHost host(scenario);
  conn.send(hello("cecas"));
  conn.set_hop_delay(stage.transport_delay, stage.transport_jitter, hop_seed(scenario, 2));

  std::int64_t last_tick = -1;
  while (true) {
    const json m = conn.receive();
    const std::string type = m["type"].get<std::string>();
    if (type == msg::kDetection) {
      host.on_detection(detection_from_json(m.at("detection")));
    } else if (type == msg::kTickState) {
      const auto tick = m.at("tick").get<std::int64_t>();
      if (tick <= last_tick) throw ProtocolViolation("tick " + std::to_string(tick) + " after " + std::to_string(last_tick));
      last_tick = tick;
      const auto r = host.cycle(tick, m.at("now").get<double>(), ego_from_json(m.at("ego")),
                                gateway_mode_from_string(m.at("mode").get<std::string>()));
      for (const auto& f : r.frames) conn.send(frame_json(f, tick));
      conn.send(cecas_reply_json(r, tick));
    } else if (type == msg::kBye) {
      conn.send({{"type", msg::kBye}});
      return;
    } else {
      throw ProtocolViolation("CeCaS node got unexpected " + type);
    }
  }
}

void serve_gateway(Connection world, const std::string& cecas_endpoint) {
  json h = world.receive();
  expect_type(h, msg::kHello);
  check_version(h);
  const ScenarioConfig scenario = scenario_from_json(h.at("scenario"));
  const StageConfig stage = stage_from_json(h.at("stage"));
  Connection cecas = Connection::connect(cecas_endpoint);
  h["role"] = "gateway";
  cecas.send(h);
  const json ch = cecas.receive();
  expect_type(ch, msg::kHello);
  check_version(ch);
  world.send(hello("gateway"));
  world.set_hop_delay(stage.transport_delay, stage.transport_jitter, hop_seed(scenario, 3));
  cecas.set_hop_delay(stage.transport_delay, stage.transport_jitter, hop_seed(scenario, 4));

  GatewayHost gw(scenario.gateway, stage.kill_primary_at, stage.kill_secondary_at);
  std::vector<ModeCommand> pending;
  std::int64_t last_tick = -1;
  while (true) {
    const json m = world.receive();
    const std::string type = m["type"].get<std::string>();
    if (type == msg::kModeEvent) {
      pending.push_back(mode_command_from(m));
    } else if (type == msg::kDetection) {
      cecas.send(m);
    } else if (type == msg::kTickState) {
      ControlInput in;
      in.tick = m.at("tick").get<std::int64_t>();
      if (in.tick <= last_tick) throw ProtocolViolation("tick " + std::to_string(in.tick) + " after " + std::to_string(last_tick));
      last_tick = in.tick;
      in.now = m.at("now").get<double>();
      in.ego = ego_from_json(m.at("ego"));
      if (!m.at("driver").is_null()) in.driver = command_from_json(m["driver"]);
      for (const auto& c : pending) gw.apply(c, in.now, in.ego.speed);
      pending.clear();

      cecas.send(tick_state_json(in, gw.gateway().mode()));
      std::vector<SdsFrame> frames;
      json reply;
      while (true) {
        const json r = cecas.receive();
        if (r.value("tick", std::int64_t{-1}) != in.tick) throw ProtocolViolation("CeCaS reply out of lockstep");
        if (r["type"] == msg::kGatewayFrame) {
          frames.push_back(frame_from(r));
        } else if (r["type"] == msg::kControlReply) {
          reply = r;
          break;
        } else {
          throw ProtocolViolation("gateway node got unexpected " + r["type"].get<std::string>());
        }
      }
      ControlOutput telemetry = output_from(reply);
      ControlOutput out = telemetry.error ? telemetry : run_gateway(gw, in, frames, telemetry);
      for (const auto& e : out.events) world.send(gateway_event_json(e, in.tick));
      world.send(output_json(out, in.tick));
    } else if (type == msg::kBye) {
      cecas.send({{"type", msg::kBye}});
      expect_type(cecas.receive(), msg::kBye);
      world.send({{"type", msg::kBye}});
      return;
    } else {
      throw ProtocolViolation("gateway node got unexpected " + type);
    }
  }
}

}  // namespace vilbench
