#include "vilbench/world.hpp"

#include <algorithm>
#include <limits>

#include "vilbench/errors.hpp"

namespace vilbench {

std::string_view to_string(ActorKind k) {
  switch (k) {
    case ActorKind::EgoVehicle: return "EgoVehicle";
    case ActorKind::LeadVehicle: return "LeadVehicle";
    case ActorKind::Pedestrian: return "Pedestrian";
  }
  return "LeadVehicle";
}

ActorKind actor_kind_from_string(std::string_view s) {
  if (s == "EgoVehicle") return ActorKind::EgoVehicle;
  if (s == "LeadVehicle") return ActorKind::LeadVehicle;
  if (s == "Pedestrian") return ActorKind::Pedestrian;
  throw ConfigError("unknown actor kind: " + std::string(s));
}

const ActorState* WorldState::find_actor(std::int64_t id) const {
  auto it = std::find_if(actors.begin(), actors.end(), [id](const ActorState& a) { return a.id == id; });
  return it == actors.end() ? nullptr : &*it;
}

std::int64_t WorldState::next_actor_id() const {
  std::int64_t next = 1;
  for (const auto& a : actors) next = std::max(next, a.id + 1);
  return next;
}

void TickBarrier::register_participant(std::string name) { registered_.insert(std::move(name)); }

void TickBarrier::report(std::string_view name, std::int64_t tick) {
  if (tick != tick_) {
    reported_.clear();
    tick_ = tick;
  }
  reported_.emplace(name);
}

bool TickBarrier::complete(std::int64_t tick) const { return missing(tick).empty(); }

std::vector<std::string> TickBarrier::missing(std::int64_t tick) const {
  std::vector<std::string> out;
  for (const auto& r : registered_) {
    if (tick != tick_ || !reported_.contains(r)) out.push_back(r);
  }
  return out;
}

void TickBarrier::reset() {
  reported_.clear();
  tick_ = -1;
}

namespace {

ActorState advance_actor(const ActorState& actor, double dt, const WaypointPath& path) {
  ActorState next = actor;
  if (actor.speed == 0.0) return next;
  if (actor.motion == ActorMotion::FollowPath) {
    next.path_s = actor.path_s + actor.speed * dt;
    next.pose = path.pose_at(next.path_s);
    next.path_s = path.wrap(next.path_s);
  } else {
    const Vec2 d = actor.pose.direction();
    next.pose.set_position(actor.pose.x() + actor.speed * dt * d.x, actor.pose.y() + actor.speed * dt * d.y);
  }
  return next;
}

}  // namespace

WorldState step(const WorldState& world, const TickBarrier& participants_done, const ControlCommand& applied,
                const StepContext& ctx) {
  if (!participants_done.complete(world.tick_index)) {
    std::string names;
    for (const auto& m : participants_done.missing(world.tick_index)) names += (names.empty() ? "" : ", ") + m;
    throw ParticipantMissing("tick " + std::to_string(world.tick_index) + " missing: " + names);
  }
  WorldState next = world;
  next.tick_index = world.tick_index + 1;
  next.ego = step_ego(world.ego, applied, *ctx.vehicle, world.tick_period);
  for (auto& a : next.actors) a = advance_actor(a, world.tick_period, *ctx.path);
  return next;
}

WorldState spawn_actor(const WorldState& world, ActorKind kind, const Pose2D& pose, double speed,
                       const WaypointPath& path, ActorOrigin origin, std::optional<std::int64_t> id) {
  if (!pose.finite() || !std::isfinite(speed)) throw InvalidPose("actor pose and speed must be finite");
  if (kind != ActorKind::EgoVehicle && speed < 0.0) throw InvalidPose("scripted actors move forward only");
  const std::int64_t new_id = id.value_or(world.next_actor_id());
  if (world.find_actor(new_id) != nullptr) throw DuplicateActor("actor id " + std::to_string(new_id) + " exists");

  ActorState actor;
  actor.id = new_id;
  actor.kind = kind;
  actor.pose = pose;
  actor.speed = speed;
  actor.spawned_at = world.time();
  actor.origin = origin;
  actor.motion = ActorMotion::FollowPath;
  actor.path_s = path.project(pose.position()).s;

  WorldState next = world;
  next.actors.push_back(actor);
  return next;
}

Pose2D pose_ahead_on_path(const WaypointPath& path, const Pose2D& ego, double distance) {
  const double s = path.project(ego.position()).s;
  return path.pose_at(s + distance);
}

std::optional<double> distance_to_lead(const WorldState& world, const WaypointPath& path,
                                       const VehicleParams& ego_geometry, const VehicleParams& lead_geometry) {
  const double ego_s = path.project(world.ego.pose.position()).s;
  std::optional<double> best;
  for (const auto& a : world.actors) {
    if (a.kind != ActorKind::LeadVehicle) continue;
    const double lead_s = path.project(a.pose.position()).s;
    const double centers = path.arc_delta(ego_s, lead_s);
    // Fully behind the ego; overlapping leads still count so a collision reads as gap <= 0.
    if (centers < -(ego_geometry.rear_extent() + lead_geometry.front_extent())) continue;
    const double gap = centers - (ego_geometry.front_extent() + lead_geometry.rear_extent());
    if (!best || gap < *best) best = gap;
  }
  return best;
}

EgoVehicleState ego_on_path(const WaypointPath& path, double s, double lateral_offset, double speed) {
  const Pose2D on = path.pose_at(s);
  const Vec2 left{-std::sin(on.heading()), std::cos(on.heading())};
  EgoVehicleState ego;
  ego.pose = Pose2D(on.x() + lateral_offset * left.x, on.y() + lateral_offset * left.y, on.heading());
  ego.speed = speed;
  return ego;
}

}  // namespace vilbench
