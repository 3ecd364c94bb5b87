#include "vilbench/path.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "vilbench/errors.hpp"

namespace vilbench {

namespace {

constexpr double kMinPointSpacing = 0.01;

}  // namespace

WaypointPath::WaypointPath(std::vector<Vec2> points, bool closed, double lane_width)
    : points_(std::move(points)), closed_(closed), lane_width_(lane_width) {
  if (points_.size() < 2) throw DegenerateMap("map needs at least 2 points");
  if (!(lane_width_ > 0.0) || !std::isfinite(lane_width_)) throw DegenerateMap("lane_width must be > 0");
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DegenerateMap("non-finite map point");
  }
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    if (norm(points_[i + 1] - points_[i]) < kMinPointSpacing) {
      throw DegenerateMap("consecutive points closer than 0.01 m at index " + std::to_string(i));
    }
  }
  if (closed_ && norm(points_.front() - points_.back()) < kMinPointSpacing) {
    throw DegenerateMap("closed map repeats its first point");
  }

  const std::size_t segments = closed_ ? points_.size() : points_.size() - 1;
  cumulative_.reserve(segments + 1);
  cumulative_.push_back(0.0);
  for (std::size_t i = 0; i < segments; ++i) {
    cumulative_.push_back(cumulative_.back() + norm(segment_end(i) - segment_start(i)));
  }
}

PathProjection WaypointPath::project(Vec2 p) const {
  PathProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segment_count(); ++i) {
    const Vec2 a = segment_start(i);
    const Vec2 d = segment_end(i) - a;
    const double len2 = dot(d, d);
    double t = dot(p - a, d) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 foot = a + t * d;
    const double dist = norm(p - foot);
    if (dist < best.distance) {
      best.distance = dist;
      best.segment = i;
      best.foot = foot;
      best.s = cumulative_[i] + t * std::sqrt(len2);
      best.lateral = cross(d, p - a) >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

double WaypointPath::wrap(double s) const {
  if (!closed_) return s;
  const double l = length();
  double w = std::fmod(s, l);
  if (w < 0.0) w += l;
  if (w >= l) w = 0.0;
  return w;
}

double WaypointPath::arc_delta(double from, double to) const {
  double d = to - from;
  if (!closed_) return d;
  const double l = length();
  d = std::fmod(d, l);
  if (d <= -l / 2.0) d += l;
  if (d > l / 2.0) d -= l;
  return d;
}

Pose2D WaypointPath::pose_at(double s) const {
  std::size_t seg = 0;
  if (closed_) {
    s = wrap(s);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    seg = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
    seg = std::min(seg, segment_count() - 1);
  } else if (s <= 0.0) {
    seg = 0;
  } else if (s >= length()) {
    seg = segment_count() - 1;
  } else {
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    seg = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  }
  const Vec2 a = segment_start(seg);
  const Vec2 d = segment_end(seg) - a;
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  const double t = (s - cumulative_[seg]) / seg_len;
  const Vec2 p = a + t * d;
  return Pose2D(p.x, p.y, std::atan2(d.y, d.x));
}

double lateral_error(const Pose2D& pose, const WaypointPath& path) {
  return path.project(pose.position()).distance;
}

WaypointPath load_map(std::string_view source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedMap(std::string("map is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("points") || !doc["points"].is_array()) {
    throw MalformedMap("map needs a \"points\" array");
  }
  bool closed = false;
  double lane_width = 3.5;
  std::vector<Vec2> points;
  try {
    closed = doc.value("closed", false);
    lane_width = doc.value("lane_width", 3.5);
    for (const auto& p : doc["points"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw MalformedMap("each point must be [x, y]");
      }
      points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMap(std::string("bad map field: ") + e.what());
  }
  return WaypointPath(std::move(points), closed, lane_width);
}

std::string dump_map(const WaypointPath& path) {
  nlohmann::json doc;
  doc["closed"] = path.closed();
  doc["lane_width"] = path.lane_width();
  auto pts = nlohmann::json::array();
  for (const auto& p : path.points()) pts.push_back({p.x, p.y});
  doc["points"] = std::move(pts);
  return doc.dump();
}

namespace {

std::string straight_1km() {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 1000; ++i) pts.push_back({static_cast<double>(i), 0.0});
  return dump_map(WaypointPath(std::move(pts), false, 3.5));
}

// Two 200 m straights joined by radius-30 semicircles, counter-clockwise, ~1 m sampling.
std::string oval_588() {
  constexpr double kStraight = 200.0;
  constexpr double kRadius = 30.0;
  constexpr int kArcSegments = 94;
  const double pi = std::numbers::pi;
  std::vector<Vec2> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({static_cast<double>(i), 0.0});
  for (int j = 0; j < kArcSegments; ++j) {
    const double a = -pi / 2.0 + pi * j / kArcSegments;
    pts.push_back({kStraight + kRadius * std::cos(a), kRadius + kRadius * std::sin(a)});
  }
  for (int i = 200; i > 0; --i) pts.push_back({static_cast<double>(i), 2.0 * kRadius});
  for (int j = 0; j < kArcSegments; ++j) {
    const double a = pi / 2.0 + pi * j / kArcSegments;
    pts.push_back({kRadius * std::cos(a), kRadius + kRadius * std::sin(a)});
  }
  return dump_map(WaypointPath(std::move(pts), true, 3.5));
}

}  // namespace

std::vector<std::string> bundled_map_names() { return {"straight_1km", "oval_588"}; }

std::string bundled_map_source(std::string_view name) {
  if (name == "straight_1km") return straight_1km();
  if (name == "oval_588") return oval_588();
  throw ConfigError("unknown bundled map: " + std::string(name));
}

WaypointPath resolve_map(const std::string& name_or_file) {
  for (const auto& n : bundled_map_names()) {
    if (n == name_or_file) return load_map(bundled_map_source(n));
  }
  std::ifstream in(name_or_file);
  if (!in) throw ConfigError("map not found: " + name_or_file);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_map(ss.str());
}

}  // namespace vilbench
