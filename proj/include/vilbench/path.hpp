#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vilbench/geometry.hpp"

namespace vilbench {

// Result of projecting a point onto a WaypointPath.
struct PathProjection {
  double s = 0.0;         // arc length of the foot point
  double distance = 0.0;  // unsigned point-to-polyline distance
  double lateral = 0.0;   // signed, positive to the left of the travel direction
  std::size_t segment = 0;
  Vec2 foot;
};

// Ground-truth lane centerline. Closed paths join the last point back to the first.
class WaypointPath {
 public:
  // Throws DegenerateMap when the invariants do not hold.
  WaypointPath(std::vector<Vec2> points, bool closed, double lane_width);

  const std::vector<Vec2>& points() const { return points_; }
  bool closed() const { return closed_; }
  double lane_width() const { return lane_width_; }
  double length() const { return cumulative_.back(); }
  std::size_t segment_count() const { return cumulative_.size() - 1; }

  Vec2 segment_start(std::size_t i) const { return points_[i]; }
  Vec2 segment_end(std::size_t i) const { return points_[(i + 1) % points_.size()]; }

  // Nearest point over all segments, endpoints clamped.
  PathProjection project(Vec2 p) const;

  // Wraps s into [0, length) on closed paths; open paths are left untouched.
  double wrap(double s) const;

  // Signed arc distance from `from` to `to`. On closed paths the result lies in (-L/2, L/2].
  double arc_delta(double from, double to) const;

  // Pose on the centerline at arc length s, heading along the tangent. Open paths extrapolate
  // linearly past either end.
  Pose2D pose_at(double s) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;  // arc length at each vertex, plus closing vertex when closed
  bool closed_;
  double lane_width_;
};

// Minimum distance from the pose position to the centerline polyline.
double lateral_error(const Pose2D& pose, const WaypointPath& path);

// Parses the JSON map format {"closed": bool, "lane_width": number, "points": [[x,y],...]}.
WaypointPath load_map(std::string_view source);
std::string dump_map(const WaypointPath& path);

// Names of bundled maps: "straight_1km" and "oval_588".
std::vector<std::string> bundled_map_names();
// Map-file content of a bundled map; throws ConfigError for unknown names.
std::string bundled_map_source(std::string_view name);
// Resolves a bundled name or a path to a map file.
WaypointPath resolve_map(const std::string& name_or_file);

}  // namespace vilbench
