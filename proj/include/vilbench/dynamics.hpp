#pragma once

#include "vilbench/command.hpp"
#include "vilbench/geometry.hpp"

namespace vilbench {

inline constexpr double kGravity = 9.81;

// Configuration of the vehicle model that replaces the dynamometer bench.
// Defaults are in the class of a VW ID. Buzz; they are tunable, not measured.
struct VehicleParams {
  double mass = 2500.0;                // kg
  double wheelbase = 2.99;             // m
  double max_traction_force = 7000.0;  // N
  double max_brake_decel = 8.0;        // m/s^2 at brake = 1
  double c_rr = 0.012;                 // rolling resistance coefficient
  double c_aero = 0.42;                // N/(m/s)^2, i.e. 0.5 * rho * Cd * A
  double max_steer = 0.5;              // rad
  double front_overhang = 0.9;         // m, front axle to front bumper
  double rear_overhang = 1.0;          // m, rear axle to rear bumper
  double steer_rate_limit = 0.8;       // rad/s

  // Throws ConfigError when a field is non-positive or max_steer >= pi/2.
  void validate() const;

  // The pose reference point is the rear axle.
  double front_extent() const { return wheelbase + front_overhang; }
  double rear_extent() const { return rear_overhang; }
};

enum class Gear { Drive, Neutral };

struct EgoVehicleState {
  Pose2D pose;
  double speed = 0.0;  // m/s, never negative
  double accel = 0.0;  // m/s^2, last applied
  double steer = 0.0;  // rad, actual actuator position
  Gear gear = Gear::Drive;

  friend bool operator==(const EgoVehicleState&, const EgoVehicleState&) = default;
};

// Rolling plus aerodynamic resistance at the given speed.
double resistance_force(double speed, const VehicleParams& params);

// One semi-implicit Euler step of the longitudinal force balance and the kinematic bicycle.
EgoVehicleState step_ego(const EgoVehicleState& state, const ControlCommand& cmd, const VehicleParams& params,
                         double dt);

}  // namespace vilbench
