#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vilbench/command.hpp"
#include "vilbench/e2e.hpp"

namespace vilbench {

enum class Channel { Primary, Secondary };
enum class ActiveChannel { Primary, Secondary, None };
enum class Verdict { Ok, CrcFault, CounterFault, Timeout };
enum class GatewayMode { ManualDrive, ExternalControl, FallbackLimited, EmergencyStop };
enum class ModeSource { Driver, SDS, Bench };

std::string_view to_string(Channel c);
std::string_view to_string(ActiveChannel c);
std::string_view to_string(Verdict v);
std::string_view to_string(GatewayMode m);
std::string_view to_string(ModeSource s);
GatewayMode gateway_mode_from_string(std::string_view s);
ModeSource mode_source_from_string(std::string_view s);

struct GatewayConfig {
  double rx_timeout = 0.100;  // s
  int fault_threshold = 3;
  double handover_speed = 1.0;  // m/s, SDS may take over only below this
  double fallback_throttle_cap = 0.3;
  double fallback_steer_fraction = 0.5;  // of max_steer
  double max_steer = 0.5;

  void validate() const;
};

struct ChannelState {
  Channel channel = Channel::Primary;
  std::optional<std::uint8_t> last_counter;
  double last_rx_time = 0.0;
  int consecutive_faults = 0;
  bool alive = true;

  friend bool operator==(const ChannelState&, const ChannelState&) = default;
};

bool channel_alive(const ChannelState& state, double now, const GatewayConfig& cfg);

// Validity inspection of one received frame. Ok requires a matching CRC, the alive counter to
// advance by exactly one, and the frame to arrive inside rx_timeout. Faults bump
// consecutive_faults; a frame with a good CRC resynchronises the counter even when it faults.
std::pair<Verdict, ChannelState> decode_and_check(const E2EFrame& frame, const ChannelState& state, double now,
                                                  const GatewayConfig& cfg);

struct Arbitration {
  ActiveChannel active = ActiveChannel::Primary;
  GatewayMode mode = GatewayMode::ExternalControl;
  double throttle_cap = 1.0;
  double steer_cap = 0.5;
};

// Primary while it is alive; otherwise the secondary with limited authority; otherwise stop.
Arbitration arbitrate(const ChannelState& primary, const ChannelState& secondary, GatewayMode mode, double now,
                      const GatewayConfig& cfg);

// Operating-mode machine. Throws IllegalTransition for requests outside the allowed edges.
GatewayMode set_mode(GatewayMode current, GatewayMode request, ModeSource source, double vehicle_speed,
                     const GatewayConfig& cfg);

// Command substituted while in EmergencyStop.
ControlCommand emergency_stop_command(double held_steer, double now);

// Clamps throttle and steering to the fallback authority.
ControlCommand apply_fallback_caps(ControlCommand cmd, const GatewayConfig& cfg);

struct GatewayEvent {
  double time = 0.0;
  std::string kind;
  std::string detail;

  friend bool operator==(const GatewayEvent&, const GatewayEvent&) = default;
};

struct GatewayOutput {
  ControlCommand command;
  GatewayMode mode = GatewayMode::ManualDrive;
  ActiveChannel active = ActiveChannel::None;
  bool fresh = false;
};

// The vehicle motion gateway: two E2E-protected control channels, mode machine and arbitration.
// Owned by one logical thread; frames are fed in arrival order before each cycle.
class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg, double start_time = 0.0);

  // Validates a control or mode-request frame received on a channel.
  Verdict receive(Channel channel, const E2EFrame& frame, double now, double vehicle_speed);
  // Same, from wire bytes; a frame that does not parse counts as a CRC fault.
  Verdict receive_bytes(Channel channel, std::span<const std::uint8_t> bytes, double now, double vehicle_speed);

  // Returns true when accepted. Rejections are logged, never thrown.
  bool request_mode(GatewayMode request, ModeSource source, double now, double vehicle_speed);
  void emergency_stop(double now, const std::string& reason);

  // Produces the command forwarded to the vehicle for this control cycle.
  GatewayOutput cycle(double now, const std::optional<ControlCommand>& driver_command);

  GatewayMode mode() const { return mode_; }
  const ChannelState& channel(Channel c) const { return c == Channel::Primary ? primary_ : secondary_; }
  const GatewayConfig& config() const { return cfg_; }
  std::int64_t suppressed_frames() const { return suppressed_; }
  std::vector<GatewayEvent> take_events();

 private:
  void set_mode_internal(GatewayMode m, double now, const std::string& why);
  void log(double now, std::string kind, std::string detail);

  GatewayConfig cfg_;
  GatewayMode mode_ = GatewayMode::ManualDrive;
  ChannelState primary_;
  ChannelState secondary_;
  ChannelState mode_stream_;
  ChannelState estop_stream_;
  std::optional<ControlCommand> primary_cmd_;
  std::optional<ControlCommand> secondary_cmd_;
  bool primary_fresh_ = false;
  bool secondary_fresh_ = false;
  ActiveChannel last_active_ = ActiveChannel::None;
  double held_steer_ = 0.0;
  std::int64_t suppressed_ = 0;
  std::vector<GatewayEvent> events_;
};

}  // namespace vilbench
