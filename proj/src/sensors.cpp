#include "vilbench/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vilbench/errors.hpp"

namespace vilbench {

namespace {

constexpr double kHalfFov = std::numbers::pi / 4.0;
constexpr double kMinReportedDistance = 0.01;

}  // namespace

std::string_view to_string(ObjectClass c) { return c == ObjectClass::Person ? "Person" : "Vehicle"; }

ObjectClass object_class_from_string(std::string_view s) {
  if (s == "Person") return ObjectClass::Person;
  if (s == "Vehicle") return ObjectClass::Vehicle;
  throw ConfigError("unknown object class: " + std::string(s));
}

void CameraConfig::validate() const {
  if (!(fps > 0.0)) throw ConfigError("camera fps must be > 0");
  if (processing_delay < 0.0 || extra_load_delay < 0.0) throw ConfigError("camera delays must be >= 0");
  if (!(range > 0.0)) throw ConfigError("camera range must be > 0");
  if (distance_noise_std < 0.0) throw ConfigError("distance noise must be >= 0");
  if (dropout_prob < 0.0 || dropout_prob > 1.0) throw ConfigError("dropout_prob must be in [0, 1]");
}

double next_capture_time(std::int64_t frame_id, const CameraConfig& cfg, double stream_start) {
  return stream_start + static_cast<double>(frame_id) / cfg.fps;
}

std::optional<Detection> capture_frame(const WorldState& world, const WaypointPath& path,
                                       const VehicleParams& geometry, const CameraConfig& cfg, std::mt19937_64& rng,
                                       std::int64_t frame_id, double capture_time,
                                       std::span<const BenchObject> bench) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg.dropout_prob) return std::nullopt;

  struct Truth {
    ObjectClass cls;
    double distance;
    double lateral;
  };
  std::vector<Truth> truth;

  const Pose2D& ego = world.ego.pose;
  const double ego_s = path.project(ego.position()).s;
  for (const auto& a : world.actors) {
    if (a.origin == ActorOrigin::DetectionTwin || a.kind == ActorKind::EgoVehicle) continue;
    if (a.spawned_at > capture_time + kTimeEpsilon) continue;
    const Vec2 rel = a.pose.position() - ego.position();
    const double fwd = dot(rel, ego.direction());
    const double left = cross(ego.direction(), rel);
    if (fwd <= 0.0 || std::abs(std::atan2(left, fwd)) > kHalfFov) continue;
    const double centers = path.arc_delta(ego_s, path.project(a.pose.position()).s);
    double distance = centers;
    ObjectClass cls = ObjectClass::Person;
    if (a.kind == ActorKind::LeadVehicle) {
      cls = ObjectClass::Vehicle;
      distance = centers - (geometry.front_extent() + geometry.rear_extent());
    }
    if (distance <= 0.0 || distance > cfg.range) continue;
    truth.push_back({cls, distance, left});
  }
  for (const auto& b : bench) {
    if (b.appear_time > capture_time + kTimeEpsilon || b.disappear_time <= capture_time) continue;
    if (b.distance <= 0.0 || b.distance > cfg.range) continue;
    if (std::abs(std::atan2(b.lateral_offset, b.distance)) > kHalfFov) continue;
    truth.push_back({b.object_class, b.distance, b.lateral_offset});
  }
  std::sort(truth.begin(), truth.end(), [](const Truth& a, const Truth& b) { return a.distance < b.distance; });

  Detection d;
  d.frame_id = frame_id;
  d.capture_time = capture_time;
  d.delivery_time = capture_time + cfg.processing_delay + cfg.extra_load_delay;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& t : truth) {
    DetectedObject o;
    o.object_class = t.cls;
    o.distance = std::max(kMinReportedDistance, t.distance + cfg.distance_noise_std * noise(rng));
    o.lateral_offset = t.lateral;
    o.confidence = 1.0;
    d.objects.push_back(o);
  }
  return d;
}

CameraStream::CameraStream(CameraConfig cfg, std::uint64_t seed, double stream_start)
    : cfg_(cfg), rng_(seed), stream_start_(stream_start) {
  cfg_.validate();
}

void CameraStream::capture_window(double from, double to, const WorldState& world, const WaypointPath& path,
                                  const VehicleParams& geometry, std::span<const BenchObject> bench) {
  for (;;) {
    const double c = next_capture_time(next_frame_, cfg_, stream_start_);
    if (c >= to - kTimeEpsilon) break;
    const std::int64_t id = next_frame_++;
    if (c < from - kTimeEpsilon) continue;  // before the stream was observed
    auto frame = capture_frame(world, path, geometry, cfg_, rng_, id, c, bench);
    if (!frame) {
      ++dropped_;
      continue;
    }
    in_flight_.push_back(std::move(*frame));
  }
}

std::vector<Detection> CameraStream::deliver(double now) {
  std::vector<Detection> out;
  std::stable_sort(in_flight_.begin(), in_flight_.end(),
                   [](const Detection& a, const Detection& b) { return a.delivery_time < b.delivery_time; });
  while (!in_flight_.empty() && in_flight_.front().delivery_time <= now + kTimeEpsilon) {
    out.push_back(std::move(in_flight_.front()));
    in_flight_.pop_front();
  }
  return out;
}

void PerceptionMailbox::deliver(Detection d) {
  history_.push_back(std::move(d));
  while (history_.size() > capacity_) history_.pop_front();
}

std::optional<Detection> PerceptionMailbox::latest(double now) const {
  const Detection* best = nullptr;
  for (const auto& d : history_) {
    if (d.delivery_time > now + kTimeEpsilon) continue;
    if (best == nullptr || d.delivery_time > best->delivery_time ||
        (d.delivery_time == best->delivery_time && d.frame_id > best->frame_id)) {
      best = &d;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

std::optional<Detection> select_perception(const PerceptionMailbox& mailbox, double now) {
  return mailbox.latest(now);
}

}  // namespace vilbench
