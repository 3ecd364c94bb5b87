#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace vilbench {

enum class TurnSignal : std::uint8_t { Off = 0, Left = 1, Right = 2, Hazard = 3 };

std::string_view to_string(TurnSignal s);
TurnSignal turn_signal_from_string(std::string_view s);

// Actuation request as produced by the central car server or the driver.
struct ControlCommand {
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
  double steer = 0.0;     // radians, within +-max_steer
  TurnSignal turn_signal = TurnSignal::Off;
  double issued_at = 0.0;
  std::int64_t seq = 0;

  friend bool operator==(const ControlCommand&, const ControlCommand&) = default;
};

// True when every field is finite and throttle/brake are inside [0, 1] and |steer| <= max_steer.
bool command_in_range(const ControlCommand& cmd, double max_steer);

}  // namespace vilbench
