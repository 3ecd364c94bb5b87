#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vilbench/cecas.hpp"
#include "vilbench/gateway.hpp"
#include "vilbench/scenario.hpp"
#include "vilbench/transport.hpp"

namespace vilbench {

inline constexpr int kProtocolVersion = 1;

// A mode change requested by the driver or the bench operator.
struct ModeCommand {
  GatewayMode request = GatewayMode::ManualDrive;
  ModeSource source = ModeSource::Driver;
  std::string reason;
};

// Everything the world hands to the control side for one tick.
struct ControlInput {
  std::int64_t tick = 0;
  double now = 0.0;
  EgoVehicleState ego;
  std::optional<ControlCommand> driver;
  std::vector<ModeCommand> mode_commands;
  std::vector<Detection> detections;
};

struct ControlOutput {
  ControlCommand command;  // forwarded to the dynamics
  GatewayMode mode = GatewayMode::ManualDrive;
  ActiveChannel active = ActiveChannel::None;
  EmergencyBrakeState eb;
  bool eb_triggered_now = false;
  std::optional<double> perceived_distance;
  std::vector<GatewayEvent> events;
  std::optional<std::string> error;  // the control stack could not plan
};

struct SdsFrame {
  Channel channel = Channel::Primary;
  std::vector<std::uint8_t> bytes;
};

// The central car server plus its E2E sender side. Each command goes out on both channels; a
// mode request goes out once on the primary channel.
class CecasHost {
 public:
  explicit CecasHost(const ScenarioConfig& scenario);

  struct Result {
    CecasOutput out;
    std::vector<SdsFrame> frames;
    std::optional<std::string> error;
  };

  void on_detection(Detection d) { server_.on_detection(std::move(d)); }
  Result cycle(std::int64_t tick, double now, const EgoVehicleState& ego, GatewayMode mode);

 private:
  CentralCarServer server_;
  E2ESender primary_{data_id::kControlPrimary};
  E2ESender secondary_{data_id::kControlSecondary};
  E2ESender mode_{data_id::kModeRequest};
};

// The vehicle motion gateway plus channel-failure injection: frames arriving on a channel after
// its kill time never reach the gateway.
class GatewayHost {
 public:
  GatewayHost(GatewayConfig cfg, std::optional<double> kill_primary_at, std::optional<double> kill_secondary_at);

  void apply(const ModeCommand& command, double now, double vehicle_speed);
  void ingest(const SdsFrame& frame, double now, double vehicle_speed);
  GatewayOutput cycle(double now, const std::optional<ControlCommand>& driver);
  bool channel_killed(Channel c, double now) const;

  Gateway& gateway() { return gateway_; }
  std::vector<GatewayEvent> take_events();

 private:
  Gateway gateway_;
  std::optional<double> kill_primary_at_;
  std::optional<double> kill_secondary_at_;
  bool primary_kill_logged_ = false;
  bool secondary_kill_logged_ = false;
  std::vector<GatewayEvent> extra_events_;
};

// The control side as seen from the world owner: in-process, CeCaS remote, or CeCaS and gateway
// remote. All three produce the same outputs for the same inputs when lockstep is on.
class ControlPath {
 public:
  virtual ~ControlPath() = default;
  virtual ControlOutput exchange(const ControlInput& in) = 0;
  virtual void finish() {}
  // Round-trip statistics of remote paths; null in process.
  virtual nlohmann::json wall_stats() const { return nullptr; }
  virtual const std::vector<TranscriptEntry>* transcript() const { return nullptr; }
};

std::unique_ptr<ControlPath> make_control_path(const ScenarioConfig& scenario, const StageConfig& stage,
                                               bool record_transcript = false);

// Node loops. Each serves one world session and returns after Bye.
// Throws ProtocolViolation on out-of-order messages and PeerUnreachable when the peer vanishes.
void serve_cecas(Connection conn);
void serve_gateway(Connection world, const std::string& cecas_endpoint);

// Message codecs shared by the nodes and the world side.
nlohmann::json gateway_event_json(const GatewayEvent& e, std::int64_t tick);
GatewayEvent gateway_event_from_json(const nlohmann::json& j);

}  // namespace vilbench
