#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "vilbench/path.hpp"
#include "vilbench/world.hpp"

namespace vilbench {

// Tolerance for comparing virtual timestamps produced by different arithmetic routes.
inline constexpr double kTimeEpsilon = 1e-9;

enum class ObjectClass { Person, Vehicle };

std::string_view to_string(ObjectClass c);
ObjectClass object_class_from_string(std::string_view s);

struct DetectedObject {
  ObjectClass object_class = ObjectClass::Person;
  double distance = 0.0;  // m, > 0
  double lateral_offset = 0.0;
  double confidence = 1.0;

  friend bool operator==(const DetectedObject&, const DetectedObject&) = default;
};

struct Detection {
  std::int64_t frame_id = 0;
  double capture_time = 0.0;   // virtual seconds
  double delivery_time = 0.0;  // capture_time + processing delays
  double wall_capture_time = 0.0;  // seconds since run start; 0 in the internal stage
  std::vector<DetectedObject> objects;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct CameraConfig {
  double fps = 5.0;
  double processing_delay = 0.050;
  double extra_load_delay = 0.0;
  double range = 60.0;
  double distance_noise_std = 0.0;
  double dropout_prob = 0.0;

  void validate() const;
};

// A physical object in front of the bench-mounted vehicle. The vehicle does not translate on the
// bench, so its distance to the camera is fixed.
struct BenchObject {
  ObjectClass object_class = ObjectClass::Person;
  double distance = 15.0;
  double lateral_offset = 0.0;
  double appear_time = 0.0;
  double disappear_time = std::numeric_limits<double>::infinity();
};

// Capture instant of frame `frame_id`, computed in one step so no drift accumulates.
double next_capture_time(std::int64_t frame_id, const CameraConfig& cfg, double stream_start);

// Ground-truth object-list emulation of the front camera plus detector.
// Returns nullopt when the frame is dropped. Consumes `rng` deterministically: one uniform draw
// for dropout, then one normal draw per reported object.
std::optional<Detection> capture_frame(const WorldState& world, const WaypointPath& path,
                                       const VehicleParams& geometry, const CameraConfig& cfg, std::mt19937_64& rng,
                                       std::int64_t frame_id, double capture_time,
                                       std::span<const BenchObject> bench = {});

// Free-running camera stream. The stream owns its frame counter and noise generator; the world owner
// asks it for captures falling inside each tick window and for frames whose delivery is due.
class CameraStream {
 public:
  CameraStream(CameraConfig cfg, std::uint64_t seed, double stream_start = 0.0);

  // Captures every frame with capture time in [from, to) from the given snapshot.
  void capture_window(double from, double to, const WorldState& world, const WaypointPath& path,
                      const VehicleParams& geometry, std::span<const BenchObject> bench);

  // Frames with delivery_time <= now, in delivery order.
  std::vector<Detection> deliver(double now);

  void set_extra_load_delay(double delay) { cfg_.extra_load_delay = delay; }
  const CameraConfig& config() const { return cfg_; }
  std::int64_t frames_captured() const { return next_frame_; }
  std::int64_t frames_dropped() const { return dropped_; }

 private:
  CameraConfig cfg_;
  std::mt19937_64 rng_;
  double stream_start_;
  std::int64_t next_frame_ = 0;
  std::int64_t dropped_ = 0;
  std::deque<Detection> in_flight_;
};

// Holds delivered detections. Selection returns the one with the greatest delivery_time <= now.
class PerceptionMailbox {
 public:
  explicit PerceptionMailbox(std::size_t capacity = 32) : capacity_(capacity) {}

  void deliver(Detection d);
  std::optional<Detection> latest(double now) const;
  const std::deque<Detection>& history() const { return history_; }
  void clear() { history_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Detection> history_;
};

// The perception result the controller uses in a control cycle; held constant between deliveries.
std::optional<Detection> select_perception(const PerceptionMailbox& mailbox, double now);

}  // namespace vilbench
