#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vilbench/command.hpp"
#include "vilbench/dynamics.hpp"
#include "vilbench/geometry.hpp"
#include "vilbench/path.hpp"

namespace vilbench {

inline constexpr double kDefaultTickPeriod = 0.020;

enum class ActorKind { EgoVehicle, LeadVehicle, Pedestrian };

std::string_view to_string(ActorKind k);
ActorKind actor_kind_from_string(std::string_view s);

// How a scripted actor moves between ticks.
enum class ActorMotion {
  FollowPath,  // constant speed along the centerline arc length
  Straight,    // constant speed along its own heading
};

// Detection twins mirror something the camera saw; the camera emulator ignores them.
enum class ActorOrigin { Scripted, DetectionTwin };

struct ActorState {
  std::int64_t id = 0;
  ActorKind kind = ActorKind::LeadVehicle;
  Pose2D pose;
  double speed = 0.0;
  double spawned_at = 0.0;
  ActorMotion motion = ActorMotion::FollowPath;
  ActorOrigin origin = ActorOrigin::Scripted;
  double path_s = 0.0;  // arc length, meaningful for FollowPath

  friend bool operator==(const ActorState&, const ActorState&) = default;
};

struct WorldState {
  std::int64_t tick_index = 0;
  double tick_period = kDefaultTickPeriod;
  EgoVehicleState ego;
  std::vector<ActorState> actors;

  // Virtual time, always derived from the tick index.
  double time() const { return static_cast<double>(tick_index) * tick_period; }

  const ActorState* find_actor(std::int64_t id) const;
  std::int64_t next_actor_id() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Completion evidence for one tick. Every registered participant must report before the world steps.
class TickBarrier {
 public:
  void register_participant(std::string name);
  void report(std::string_view name, std::int64_t tick);
  bool complete(std::int64_t tick) const;
  std::vector<std::string> missing(std::int64_t tick) const;
  void reset();

 private:
  std::set<std::string, std::less<>> registered_;
  std::set<std::string, std::less<>> reported_;
  std::int64_t tick_ = -1;
};

struct StepContext {
  const WaypointPath* path = nullptr;
  const VehicleParams* vehicle = nullptr;
};

// Advances the world by one tick. Pure: same inputs give bit-identical output.
// Throws ParticipantMissing when the barrier is incomplete for world.tick_index.
WorldState step(const WorldState& world, const TickBarrier& participants_done, const ControlCommand& applied,
                const StepContext& ctx);

// Adds an actor with a fresh id; throws InvalidPose for non-finite input and DuplicateActor on id clash.
WorldState spawn_actor(const WorldState& world, ActorKind kind, const Pose2D& pose, double speed,
                       const WaypointPath& path, ActorOrigin origin = ActorOrigin::Scripted,
                       std::optional<std::int64_t> id = std::nullopt);

// Centerline pose `distance` meters of arc length ahead of the ego's projection.
Pose2D pose_ahead_on_path(const WaypointPath& path, const Pose2D& ego, double distance);

// Bumper-to-bumper gap to the nearest LeadVehicle ahead along the centerline, none without a lead.
// Negative or zero means collision.
std::optional<double> distance_to_lead(const WorldState& world, const WaypointPath& path,
                                       const VehicleParams& ego_geometry, const VehicleParams& lead_geometry);

// Places the ego on the centerline at arc length s with a lateral offset (left positive).
EgoVehicleState ego_on_path(const WaypointPath& path, double s, double lateral_offset, double speed);

}  // namespace vilbench
