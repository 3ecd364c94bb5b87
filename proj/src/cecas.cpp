#include "vilbench/cecas.hpp"

#include <algorithm>
#include <cmath>

#include "vilbench/errors.hpp"

namespace vilbench {

namespace {

constexpr double kWaypointSpacing = 1.0;
constexpr double kOffTrackLaneWidths = 5.0;

}  // namespace

std::string_view to_string(EbStatus s) { return s == EbStatus::Normal ? "Normal" : "Braking"; }

void AccParams::validate() const {
  if (!(standstill_gap > 0.0) || !(time_gap > 0.0)) throw ConfigError("ACC d0 and tau must be > 0");
  if (!(accel_min < 0.0) || !(accel_max > 0.0)) throw ConfigError("ACC needs accel_min < 0 < accel_max");
  if (gap_gain < 0.0 || speed_gain < 0.0 || cruise_speed < 0.0) throw ConfigError("ACC gains must be >= 0");
}

void LkaParams::validate() const {
  if (!(lookahead_base > 0.0)) throw ConfigError("lookahead_base must be > 0");
  if (lookahead_speed_gain < 0.0) throw ConfigError("lookahead_speed_gain must be >= 0");
  if (!(wheelbase > 0.0)) throw ConfigError("wheelbase must be > 0");
  if (!(planning_horizon > 0.0)) throw ConfigError("planning_horizon must be > 0");
}

std::vector<Vec2> plan_waypoints(const WaypointPath& path, const EgoVehicleState& ego, double horizon) {
  const PathProjection proj = path.project(ego.pose.position());
  if (proj.distance > kOffTrackLaneWidths * path.lane_width()) {
    throw OffTrack("ego is " + std::to_string(proj.distance) + " m from the centerline");
  }
  std::vector<Vec2> out;
  const auto count = static_cast<int>(std::floor(horizon / kWaypointSpacing + 1e-9));
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 1; k <= count; ++k) {
    const double s = proj.s + k * kWaypointSpacing;
    if (!path.closed() && s > path.length() + 1e-9) break;
    out.push_back(path.pose_at(s).position());
  }
  if (out.empty()) out.push_back(path.pose_at(path.closed() ? proj.s : path.length()).position());
  return out;
}

double pure_pursuit_steer(double alpha, double ld, double wheelbase) {
  return std::atan(2.0 * wheelbase * std::sin(alpha) / ld);
}

double lateral_control(const EgoVehicleState& ego, const std::vector<Vec2>& targets, const LkaParams& params,
                       double max_steer) {
  const double ld = params.lookahead(ego.speed);
  const Vec2 origin = ego.pose.position();
  Vec2 target = targets.back();
  double arc = 0.0;
  Vec2 prev = origin;
  for (const Vec2& t : targets) {
    arc += norm(t - prev);
    prev = t;
    if (arc >= ld) {
      target = t;
      break;
    }
  }
  const Vec2 rel = target - origin;
  const double dist = norm(rel);
  if (dist <= 0.0) return 0.0;
  const Vec2 dir = ego.pose.direction();
  const double alpha = std::atan2(cross(dir, rel), dot(dir, rel));
  return std::clamp(pure_pursuit_steer(alpha, dist, params.wheelbase), -max_steer, max_steer);
}

double acc_law(std::optional<double> gap, double v_ego, double v_lead, const AccParams& p) {
  const double cruise = p.speed_gain * (p.cruise_speed - v_ego);
  double a = cruise;
  if (gap) {
    const double desired = p.standstill_gap + p.time_gap * v_ego;
    const double follow = p.gap_gain * (*gap - desired) + p.speed_gain * (v_lead - v_ego);
    a = std::min(follow, cruise);
  }
  return std::clamp(a, p.accel_min, p.accel_max);
}

std::pair<double, double> accel_to_pedals(double a_des, double v_ego, const VehicleParams& params) {
  const double force = params.mass * a_des + resistance_force(v_ego, params);
  if (force >= 0.0) return {std::min(1.0, force / params.max_traction_force), 0.0};
  return {0.0, std::min(1.0, -force / (params.mass * params.max_brake_decel))};
}

std::pair<EmergencyBrakeState, std::optional<ControlCommand>> emergency_brake_update(
    const EmergencyBrakeState& state, const std::optional<Detection>& perception, double now, double lka_steer) {
  EmergencyBrakeState next = state;
  if (next.status == EbStatus::Normal && perception) {
    for (const auto& o : perception->objects) {
      if (o.object_class == ObjectClass::Person && o.distance <= next.trigger_distance) {
        next.status = EbStatus::Braking;
        next.trigger_time = now;
        next.trigger_frame = perception->frame_id;
        next.trigger_capture_time = perception->capture_time;
        break;
      }
    }
  }
  if (next.status != EbStatus::Braking) return {next, std::nullopt};
  ControlCommand brake;
  brake.throttle = 0.0;
  brake.brake = 1.0;
  brake.steer = lka_steer;
  brake.turn_signal = TurnSignal::Hazard;
  brake.issued_at = now;
  return {next, brake};
}

CentralCarServer::CentralCarServer(WaypointPath path, CecasConfig cfg) : path_(std::move(path)), cfg_(cfg) {
  cfg_.acc.validate();
  cfg_.lka.validate();
  cfg_.vehicle.validate();
  eb_.trigger_distance = cfg_.eb_trigger_distance;
}

void CentralCarServer::on_detection(Detection d) { mailbox_.deliver(std::move(d)); }

std::optional<CentralCarServer::LeadEstimate> CentralCarServer::estimate_lead(
    const std::optional<Detection>& perception) {
  if (!perception) return std::nullopt;
  const DetectedObject* lead = nullptr;
  for (const auto& o : perception->objects) {
    if (o.object_class == ObjectClass::Vehicle && (lead == nullptr || o.distance < lead->distance)) lead = &o;
  }
  if (lead == nullptr) {
    lead_samples_.clear();
    return std::nullopt;
  }
  if (lead_samples_.empty() || lead_samples_.back().frame != perception->frame_id) {
    lead_samples_.push_back({perception->frame_id, perception->capture_time, lead->distance});
    if (lead_samples_.size() > 2) lead_samples_.erase(lead_samples_.begin());
  }
  double v_rel = 0.0;
  if (lead_samples_.size() == 2) {
    const double dt = lead_samples_[1].capture_time - lead_samples_[0].capture_time;
    if (dt > 0.0) v_rel = (lead_samples_[1].distance - lead_samples_[0].distance) / dt;
  }
  return LeadEstimate{lead->distance, v_rel};
}

CecasOutput CentralCarServer::cycle(const CecasInput& in) {
  CecasOutput out;

  // A driver override ends any latched braking.
  const bool automated_before = last_mode_ && (*last_mode_ == GatewayMode::ExternalControl ||
                                               *last_mode_ == GatewayMode::FallbackLimited);
  if (automated_before && in.mode == GatewayMode::ManualDrive) {
    eb_ = EmergencyBrakeState{};
    eb_.trigger_distance = cfg_.eb_trigger_distance;
  }
  last_mode_ = in.mode;

  const auto perception = select_perception(mailbox_, in.now);
  if (perception) {
    out.perception_frame = perception->frame_id;
    for (const auto& o : perception->objects) {
      if (!out.perceived_distance || o.distance < *out.perceived_distance) out.perceived_distance = o.distance;
    }
  }

  const auto targets = plan_waypoints(path_, in.ego, cfg_.lka.planning_horizon);
  const double steer = lateral_control(in.ego, targets, cfg_.lka, cfg_.vehicle.max_steer);

  const auto lead = estimate_lead(perception);
  const double v = in.ego.speed;
  const double a_des = lead ? acc_law(lead->gap, v, v + lead->v_rel, cfg_.acc) : acc_law(std::nullopt, v, v, cfg_.acc);
  const auto [throttle, brake] = accel_to_pedals(a_des, v, cfg_.vehicle);

  out.command.throttle = throttle;
  out.command.brake = brake;
  out.command.steer = steer;
  out.command.turn_signal = TurnSignal::Off;

  const EbStatus before = eb_.status;
  auto [eb_next, override_cmd] = emergency_brake_update(eb_, perception, in.now, steer);
  eb_ = eb_next;
  out.eb_triggered_now = before == EbStatus::Normal && eb_.status == EbStatus::Braking;
  if (override_cmd) out.command = *override_cmd;
  out.command.issued_at = in.now;
  out.command.seq = seq_++;
  out.eb = eb_;

  if (cfg_.auto_engage && !engage_sent_ && in.mode == GatewayMode::ManualDrive) {
    out.mode_request = GatewayMode::ExternalControl;
    engage_sent_ = true;
  }
  return out;
}

}  // namespace vilbench
