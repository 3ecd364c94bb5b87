#include "vilbench/gateway.hpp"

#include <algorithm>
#include <cmath>

#include "vilbench/errors.hpp"

namespace vilbench {

std::string_view to_string(Channel c) { return c == Channel::Primary ? "Primary" : "Secondary"; }

std::string_view to_string(ActiveChannel c) {
  switch (c) {
    case ActiveChannel::Primary: return "Primary";
    case ActiveChannel::Secondary: return "Secondary";
    case ActiveChannel::None: return "None";
  }
  return "None";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Ok: return "Ok";
    case Verdict::CrcFault: return "CrcFault";
    case Verdict::CounterFault: return "CounterFault";
    case Verdict::Timeout: return "Timeout";
  }
  return "Ok";
}

std::string_view to_string(GatewayMode m) {
  switch (m) {
    case GatewayMode::ManualDrive: return "ManualDrive";
    case GatewayMode::ExternalControl: return "ExternalControl";
    case GatewayMode::FallbackLimited: return "FallbackLimited";
    case GatewayMode::EmergencyStop: return "EmergencyStop";
  }
  return "ManualDrive";
}

std::string_view to_string(ModeSource s) {
  switch (s) {
    case ModeSource::Driver: return "Driver";
    case ModeSource::SDS: return "SDS";
    case ModeSource::Bench: return "Bench";
  }
  return "Driver";
}

GatewayMode gateway_mode_from_string(std::string_view s) {
  for (auto m : {GatewayMode::ManualDrive, GatewayMode::ExternalControl, GatewayMode::FallbackLimited,
                 GatewayMode::EmergencyStop}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown gateway mode: " + std::string(s));
}

ModeSource mode_source_from_string(std::string_view s) {
  for (auto m : {ModeSource::Driver, ModeSource::SDS, ModeSource::Bench}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown mode source: " + std::string(s));
}

void GatewayConfig::validate() const {
  if (!(rx_timeout > 0.0)) throw ConfigError("rx_timeout must be > 0");
  if (fault_threshold < 1) throw ConfigError("fault_threshold must be >= 1");
  if (handover_speed < 0.0) throw ConfigError("handover_speed must be >= 0");
  if (fallback_throttle_cap < 0.0 || fallback_throttle_cap > 1.0) throw ConfigError("throttle cap outside [0, 1]");
  if (fallback_steer_fraction < 0.0 || fallback_steer_fraction > 1.0) throw ConfigError("steer fraction outside [0, 1]");
}

bool channel_alive(const ChannelState& state, double now, const GatewayConfig& cfg) {
  return state.consecutive_faults < cfg.fault_threshold && (now - state.last_rx_time) < cfg.rx_timeout;
}

std::pair<Verdict, ChannelState> decode_and_check(const E2EFrame& frame, const ChannelState& state, double now,
                                                  const GatewayConfig& cfg) {
  ChannelState next = state;
  Verdict verdict = Verdict::Ok;
  if (frame.payload.size() > kMaxE2EPayload || frame.crc != frame_crc(frame.data_id, frame.counter, frame.payload)) {
    verdict = Verdict::CrcFault;
  } else if (state.last_counter && frame.counter != static_cast<std::uint8_t>(*state.last_counter + 1)) {
    verdict = Verdict::CounterFault;
  } else if (now - state.last_rx_time >= cfg.rx_timeout) {
    verdict = Verdict::Timeout;
  }

  if (verdict == Verdict::Ok) {
    next.consecutive_faults = 0;
  } else {
    ++next.consecutive_faults;
  }
  if (verdict != Verdict::CrcFault) {
    next.last_counter = frame.counter;
    next.last_rx_time = now;
  }
  next.alive = channel_alive(next, now, cfg);
  return {verdict, next};
}

Arbitration arbitrate(const ChannelState& primary, const ChannelState& secondary, GatewayMode mode, double now,
                      const GatewayConfig& cfg) {
  Arbitration a;
  if (channel_alive(primary, now, cfg)) {
    a.active = ActiveChannel::Primary;
    a.mode = mode == GatewayMode::FallbackLimited ? GatewayMode::ExternalControl : mode;
    a.throttle_cap = 1.0;
    a.steer_cap = cfg.max_steer;
  } else if (channel_alive(secondary, now, cfg)) {
    a.active = ActiveChannel::Secondary;
    a.mode = GatewayMode::FallbackLimited;
    a.throttle_cap = cfg.fallback_throttle_cap;
    a.steer_cap = cfg.fallback_steer_fraction * cfg.max_steer;
  } else {
    a.active = ActiveChannel::None;
    a.mode = GatewayMode::EmergencyStop;
    a.throttle_cap = 0.0;
    a.steer_cap = cfg.max_steer;
  }
  return a;
}

GatewayMode set_mode(GatewayMode current, GatewayMode request, ModeSource source, double vehicle_speed,
                     const GatewayConfig& cfg) {
  auto illegal = [&]() -> IllegalTransition {
    return IllegalTransition(std::string(to_string(source)) + " may not move " + std::string(to_string(current)) +
                             " to " + std::string(to_string(request)));
  };
  switch (source) {
    case ModeSource::Driver:
      if (request == GatewayMode::ManualDrive && current != GatewayMode::EmergencyStop) return request;
      throw illegal();
    case ModeSource::SDS:
      if (request == GatewayMode::ExternalControl && current == GatewayMode::ManualDrive &&
          vehicle_speed < cfg.handover_speed) {
        return request;
      }
      throw illegal();
    case ModeSource::Bench:
      if (request == GatewayMode::EmergencyStop) return request;
      if (request == GatewayMode::ManualDrive && current == GatewayMode::EmergencyStop) return request;
      throw illegal();
  }
  throw illegal();
}

ControlCommand emergency_stop_command(double held_steer, double now) {
  ControlCommand c;
  c.throttle = 0.0;
  c.brake = 1.0;
  c.steer = held_steer;
  c.turn_signal = TurnSignal::Hazard;
  c.issued_at = now;
  return c;
}

ControlCommand apply_fallback_caps(ControlCommand cmd, const GatewayConfig& cfg) {
  const double steer_cap = cfg.fallback_steer_fraction * cfg.max_steer;
  cmd.throttle = std::min(cmd.throttle, cfg.fallback_throttle_cap);
  cmd.steer = std::clamp(cmd.steer, -steer_cap, steer_cap);
  return cmd;
}

Gateway::Gateway(GatewayConfig cfg, double start_time) : cfg_(cfg) {
  cfg_.validate();
  primary_.channel = Channel::Primary;
  secondary_.channel = Channel::Secondary;
  for (auto* c : {&primary_, &secondary_, &mode_stream_, &estop_stream_}) c->last_rx_time = start_time;
}

void Gateway::log(double now, std::string kind, std::string detail) {
  events_.push_back({now, std::move(kind), std::move(detail)});
}

std::vector<GatewayEvent> Gateway::take_events() { return std::exchange(events_, {}); }

void Gateway::set_mode_internal(GatewayMode m, double now, const std::string& why) {
  if (m == mode_) return;
  log(now, "mode", std::string(to_string(mode_)) + "->" + std::string(to_string(m)) + " (" + why + ")");
  mode_ = m;
}

Verdict Gateway::receive_bytes(Channel channel, std::span<const std::uint8_t> bytes, double now,
                               double vehicle_speed) {
  try {
    return receive(channel, parse_frame(bytes), now, vehicle_speed);
  } catch (const MalformedFrame& e) {
    ChannelState& st = channel == Channel::Primary ? primary_ : secondary_;
    ++st.consecutive_faults;
    st.alive = channel_alive(st, now, cfg_);
    log(now, "e2e_fault", std::string(to_string(channel)) + " malformed: " + e.what());
    return Verdict::CrcFault;
  }
}

Verdict Gateway::receive(Channel channel, const E2EFrame& frame, double now, double vehicle_speed) {
  if (frame.data_id == data_id::kModeRequest || frame.data_id == data_id::kEmergencyStop) {
    ChannelState& stream = frame.data_id == data_id::kModeRequest ? mode_stream_ : estop_stream_;
    auto [verdict, st] = decode_and_check(frame, stream, now, cfg_);
    stream = st;
    // Mode requests are sparse, so the rx timeout does not apply to them.
    if (verdict == Verdict::CrcFault || verdict == Verdict::CounterFault) {
      log(now, "e2e_fault", "mode request " + std::string(to_string(verdict)));
      return verdict;
    }
    if (frame.data_id == data_id::kEmergencyStop) {
      emergency_stop(now, "bench stop frame");
    } else if (frame.payload.size() == 1 && frame.payload[0] <= static_cast<std::uint8_t>(GatewayMode::EmergencyStop)) {
      request_mode(static_cast<GatewayMode>(frame.payload[0]), ModeSource::SDS, now, vehicle_speed);
    } else {
      log(now, "invalid_value", "mode request payload");
    }
    return Verdict::Ok;
  }

  ChannelState& st = channel == Channel::Primary ? primary_ : secondary_;
  const std::uint16_t expected = channel == Channel::Primary ? data_id::kControlPrimary : data_id::kControlSecondary;
  if (frame.data_id != expected) {
    ++st.consecutive_faults;
    st.alive = channel_alive(st, now, cfg_);
    log(now, "e2e_fault", std::string(to_string(channel)) + " unexpected data id");
    return Verdict::CrcFault;
  }
  auto [verdict, next] = decode_and_check(frame, st, now, cfg_);
  st = next;
  if (verdict != Verdict::Ok) {
    log(now, "e2e_fault", std::string(to_string(channel)) + " " + std::string(to_string(verdict)));
    return verdict;
  }
  auto cmd = decode_command_payload(frame.payload);
  if (!cmd || !command_in_range(*cmd, cfg_.max_steer)) {
    ++st.consecutive_faults;
    st.alive = channel_alive(st, now, cfg_);
    log(now, "invalid_value", std::string(to_string(channel)) + " command out of range");
    return verdict;
  }
  if (mode_ == GatewayMode::EmergencyStop) {
    if (suppressed_++ == 0) log(now, "sds_suppressed", "SDS commands ignored while in EmergencyStop");
  }
  if (channel == Channel::Primary) {
    primary_cmd_ = cmd;
    primary_fresh_ = true;
  } else {
    secondary_cmd_ = cmd;
    secondary_fresh_ = true;
  }
  return verdict;
}

bool Gateway::request_mode(GatewayMode request, ModeSource source, double now, double vehicle_speed) {
  try {
    const GatewayMode next = set_mode(mode_, request, source, vehicle_speed, cfg_);
    if (next == GatewayMode::EmergencyStop) {
      emergency_stop(now, std::string(to_string(source)) + " request");
    } else {
      set_mode_internal(next, now, std::string(to_string(source)) + " request");
    }
    return true;
  } catch (const IllegalTransition& e) {
    log(now, "illegal_transition", e.what());
    return false;
  }
}

void Gateway::emergency_stop(double now, const std::string& reason) {
  if (mode_ != GatewayMode::EmergencyStop) log(now, "bench_stop", reason);
  set_mode_internal(GatewayMode::EmergencyStop, now, reason);
}

GatewayOutput Gateway::cycle(double now, const std::optional<ControlCommand>& driver_command) {
  primary_.alive = channel_alive(primary_, now, cfg_);
  secondary_.alive = channel_alive(secondary_, now, cfg_);

  GatewayOutput out;
  switch (mode_) {
    case GatewayMode::EmergencyStop:
      out.command = emergency_stop_command(held_steer_, now);
      out.fresh = true;
      break;
    case GatewayMode::ManualDrive:
      out.command = driver_command.value_or(ControlCommand{});
      out.command.issued_at = now;
      out.fresh = true;
      break;
    case GatewayMode::ExternalControl:
    case GatewayMode::FallbackLimited: {
      const Arbitration arb = arbitrate(primary_, secondary_, mode_, now, cfg_);
      if (arb.active == ActiveChannel::None) {
        emergency_stop(now, "both control channels lost");
        out.command = emergency_stop_command(held_steer_, now);
        out.fresh = true;
        break;
      }
      if (arb.active != last_active_ && last_active_ != ActiveChannel::None) {
        log(now, "channel_switch", std::string(to_string(last_active_)) + "->" + std::string(to_string(arb.active)));
      }
      set_mode_internal(arb.mode, now, arb.active == ActiveChannel::Secondary ? "primary channel lost"
                                                                                : "primary channel restored");
      out.active = arb.active;
      const auto& held = arb.active == ActiveChannel::Primary ? primary_cmd_ : secondary_cmd_;
      out.fresh = arb.active == ActiveChannel::Primary ? primary_fresh_ : secondary_fresh_;
      if (held) {
        out.command = *held;
      } else {
        out.command = ControlCommand{};
        out.command.steer = held_steer_;
        out.command.issued_at = now;
      }
      if (mode_ == GatewayMode::FallbackLimited) out.command = apply_fallback_caps(out.command, cfg_);
      break;
    }
  }
  out.mode = mode_;
  if (out.active != ActiveChannel::None) last_active_ = out.active;
  held_steer_ = out.command.steer;
  primary_fresh_ = false;
  secondary_fresh_ = false;
  return out;
}

}  // namespace vilbench
