#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "vilbench/command.hpp"
#include "vilbench/dynamics.hpp"
#include "vilbench/gateway.hpp"
#include "vilbench/path.hpp"
#include "vilbench/sensors.hpp"

namespace vilbench {

// Constant-time-gap ACC with a PD structure on gap and relative speed.
struct AccParams {
  double standstill_gap = 5.0;  // d0, m
  double time_gap = 1.5;        // tau, s
  double gap_gain = 0.2;        // kp, 1/s^2
  double speed_gain = 0.4;      // kv, 1/s
  double accel_min = -6.0;      // m/s^2
  double accel_max = 2.0;       // m/s^2
  double cruise_speed = 13.89;  // m/s

  void validate() const;
};

// Pure pursuit with a speed-scheduled lookahead ld = base + gain * speed.
struct LkaParams {
  double lookahead_base = 3.0;         // m
  double lookahead_speed_gain = 0.2;   // s
  double wheelbase = 2.99;             // m, mirrors VehicleParams
  double planning_horizon = 30.0;      // m of centerline handed to the tracker

  void validate() const;
  double lookahead(double speed) const { return lookahead_base + lookahead_speed_gain * speed; }
};

enum class EbStatus { Normal, Braking };
std::string_view to_string(EbStatus s);

struct EmergencyBrakeState {
  EbStatus status = EbStatus::Normal;
  std::optional<double> trigger_time;
  std::optional<std::int64_t> trigger_frame;
  std::optional<double> trigger_capture_time;
  double trigger_distance = 25.0;

  friend bool operator==(const EmergencyBrakeState&, const EmergencyBrakeState&) = default;
};

// Centerline points from the ego's arc-length projection forward by `horizon`, at 1 m spacing.
// Throws OffTrack when the ego is more than 5 lane widths from the centerline.
std::vector<Vec2> plan_waypoints(const WaypointPath& path, const EgoVehicleState& ego, double horizon);

// Pure-pursuit steering angle toward the first target at least ld of arc ahead, clamped to max_steer.
double lateral_control(const EgoVehicleState& ego, const std::vector<Vec2>& targets, const LkaParams& params,
                       double max_steer);

// Steering for a target at bearing `alpha` (relative to heading) and chord distance `ld`.
double pure_pursuit_steer(double alpha, double ld, double wheelbase);

// Desired acceleration following a lead at `gap` (bumper to bumper). Without a lead, regulates to
// the cruise speed.
double acc_law(std::optional<double> gap, double v_ego, double v_lead, const AccParams& params);

// Feed-forward inversion of the longitudinal model. Throttle and brake are never both non-zero.
std::pair<double, double> accel_to_pedals(double a_des, double v_ego, const VehicleParams& params);

// Latched emergency brake on a Person detection inside trigger_distance. The override keeps
// `lka_steer` so lane keeping continues while braking.
std::pair<EmergencyBrakeState, std::optional<ControlCommand>> emergency_brake_update(
    const EmergencyBrakeState& state, const std::optional<Detection>& perception, double now, double lka_steer);

struct CecasConfig {
  VehicleParams vehicle;
  AccParams acc;
  LkaParams lka;
  double eb_trigger_distance = 25.0;
  bool auto_engage = true;  // request ExternalControl on the first cycle
};

struct CecasInput {
  std::int64_t tick = 0;
  double now = 0.0;
  EgoVehicleState ego;
  GatewayMode mode = GatewayMode::ManualDrive;
};

struct CecasOutput {
  ControlCommand command;
  std::optional<GatewayMode> mode_request;
  EmergencyBrakeState eb;
  bool eb_triggered_now = false;
  std::optional<double> perceived_distance;  // nearest object in the held detection
  std::optional<std::int64_t> perception_frame;
};

// The central car server control stack: perception mailbox, planning, pure pursuit, ACC and
// emergency brake. One control cycle per call; all state lives here.
class CentralCarServer {
 public:
  CentralCarServer(WaypointPath path, CecasConfig cfg);

  void on_detection(Detection d);
  // Throws OffTrack when planning fails.
  CecasOutput cycle(const CecasInput& in);

  const EmergencyBrakeState& eb_state() const { return eb_; }
  const PerceptionMailbox& mailbox() const { return mailbox_; }

 private:
  struct LeadEstimate {
    double gap;
    double v_rel;
  };
  std::optional<LeadEstimate> estimate_lead(const std::optional<Detection>& perception);

  WaypointPath path_;
  CecasConfig cfg_;
  PerceptionMailbox mailbox_;
  EmergencyBrakeState eb_;
  std::optional<GatewayMode> last_mode_;
  bool engage_sent_ = false;
  std::int64_t seq_ = 0;

  // Last two frames that contained a vehicle: (frame id, capture time, distance).
  struct LeadSample {
    std::int64_t frame;
    double capture_time;
    double distance;
  };
  std::vector<LeadSample> lead_samples_;
};

}  // namespace vilbench
