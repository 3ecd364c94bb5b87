#include "vilbench/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vilbench/errors.hpp"

namespace vilbench {

std::string_view to_string(TurnSignal s) {
  switch (s) {
    case TurnSignal::Off: return "Off";
    case TurnSignal::Left: return "Left";
    case TurnSignal::Right: return "Right";
    case TurnSignal::Hazard: return "Hazard";
  }
  return "Off";
}

TurnSignal turn_signal_from_string(std::string_view s) {
  if (s == "Off") return TurnSignal::Off;
  if (s == "Left") return TurnSignal::Left;
  if (s == "Right") return TurnSignal::Right;
  if (s == "Hazard") return TurnSignal::Hazard;
  throw ConfigError("unknown turn signal: " + std::string(s));
}

bool command_in_range(const ControlCommand& cmd, double max_steer) {
  auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  return unit(cmd.throttle) && unit(cmd.brake) && std::isfinite(cmd.steer) && std::abs(cmd.steer) <= max_steer &&
         std::isfinite(cmd.issued_at);
}

void VehicleParams::validate() const {
  const double fields[] = {mass,     wheelbase, max_traction_force, max_brake_decel, c_rr,
                           c_aero,   max_steer, front_overhang,     rear_overhang,   steer_rate_limit};
  for (double f : fields) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("vehicle parameters must be strictly positive");
  }
  if (max_steer >= std::numbers::pi / 2.0) throw ConfigError("max_steer must be below pi/2");
}

double resistance_force(double speed, const VehicleParams& params) {
  return params.c_rr * params.mass * kGravity + params.c_aero * speed * speed;
}

EgoVehicleState step_ego(const EgoVehicleState& state, const ControlCommand& cmd, const VehicleParams& params,
                         double dt) {
  EgoVehicleState next = state;

  const double target_steer = std::clamp(cmd.steer, -params.max_steer, params.max_steer);
  const double max_delta = params.steer_rate_limit * dt;
  next.steer = state.steer + std::clamp(target_steer - state.steer, -max_delta, max_delta);
  next.steer = std::clamp(next.steer, -params.max_steer, params.max_steer);

  const double traction = state.gear == Gear::Drive ? cmd.throttle * params.max_traction_force : 0.0;
  const double braking = cmd.brake * params.mass * params.max_brake_decel;
  const double net = traction - braking - resistance_force(state.speed, params);
  next.speed = std::max(0.0, state.speed + net / params.mass * dt);
  next.accel = (next.speed - state.speed) / dt;

  const double heading = state.pose.heading() + state.speed / params.wheelbase * std::tan(next.steer) * dt;
  next.pose.set_heading(heading);
  const Vec2 dir = next.pose.direction();
  next.pose.set_position(state.pose.x() + state.speed * dt * dir.x, state.pose.y() + state.speed * dt * dir.y);
  return next;
}

}  // namespace vilbench
