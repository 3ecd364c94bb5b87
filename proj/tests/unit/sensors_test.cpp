#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "vilbench/scheduler.hpp"
#include "vilbench/sensors.hpp"

using namespace vilbench;

TEST(NextCaptureTime, Examples) {
  CameraConfig c;
  EXPECT_EQ(next_capture_time(0, c, 0.0), 0.0);
  EXPECT_EQ(next_capture_time(10, c, 0.0), 2.0);
  // Exact rational n / fps for large n: 1e6 / 5 is representable.
  EXPECT_NEAR(next_capture_time(1'000'000, c, 0.0), 200000.0, 1e-6);
  c.fps = 3.0;
  // 1e6 / 3 = 333333.333..., compare to the nearest double of the exact fraction.
  EXPECT_NEAR(next_capture_time(1'000'000, c, 0.0), 333333.0 + 1.0 / 3.0, 1e-6);
}

TEST(NextCaptureTime, NoAccumulatedDrift) {
  CameraConfig c;
  c.fps = 7.0;
  for (std::int64_t n = 0; n < 200000; n += 997) {
    EXPECT_NEAR(next_capture_time(n, c, 1.5), 1.5 + static_cast<double>(n) / 7.0, 1e-9);
  }
}

namespace {

struct Scene {
  WaypointPath path = resolve_map("straight_1km");
  VehicleParams vehicle;
  WorldState world;
  Scene() { world.ego = ego_on_path(path, 100.0, 0.0, 0.0); }
};

}  // namespace

TEST(CaptureFrame, NoiselessPedestrian) {
  Scene s;
  s.world = spawn_actor(s.world, ActorKind::Pedestrian, s.path.pose_at(115.0), 0.0, s.path);
  std::mt19937_64 rng(1);
  const auto d = capture_frame(s.world, s.path, s.vehicle, CameraConfig{}, rng, 0, 0.0);
  ASSERT_TRUE(d);
  ASSERT_EQ(d->objects.size(), 1u);
  EXPECT_EQ(d->objects[0].object_class, ObjectClass::Person);
  EXPECT_NEAR(d->objects[0].distance, 15.0, 1e-9);
  EXPECT_NEAR(d->delivery_time, 0.05, 1e-12);
}

TEST(CaptureFrame, OutOfRangeIsEmpty) {
  Scene s;
  s.world = spawn_actor(s.world, ActorKind::Pedestrian, s.path.pose_at(180.0), 0.0, s.path);
  std::mt19937_64 rng(1);
  const auto d = capture_frame(s.world, s.path, s.vehicle, CameraConfig{}, rng, 0, 0.0);
  ASSERT_TRUE(d);
  EXPECT_TRUE(d->objects.empty());
}

TEST(CaptureFrame, BehindAndOutsideFrustumAreIgnored) {
  Scene s;
  s.world = spawn_actor(s.world, ActorKind::Pedestrian, s.path.pose_at(90.0), 0.0, s.path);
  s.world = spawn_actor(s.world, ActorKind::Pedestrian, Pose2D(105.0, 20.0, 0.0), 0.0, s.path);
  std::mt19937_64 rng(1);
  const auto d = capture_frame(s.world, s.path, s.vehicle, CameraConfig{}, rng, 0, 0.0);
  ASSERT_TRUE(d);
  EXPECT_TRUE(d->objects.empty());
}

TEST(CaptureFrame, LeadDistanceIsBumperGap) {
  Scene s;
  s.world = spawn_actor(s.world, ActorKind::LeadVehicle, s.path.pose_at(150.0), 0.0, s.path);
  std::mt19937_64 rng(1);
  const auto d = capture_frame(s.world, s.path, s.vehicle, CameraConfig{}, rng, 0, 0.0);
  ASSERT_EQ(d->objects.size(), 1u);
  EXPECT_EQ(d->objects[0].object_class, ObjectClass::Vehicle);
  EXPECT_NEAR(d->objects[0].distance, *distance_to_lead(s.world, s.path, s.vehicle, s.vehicle), 1e-9);
}

TEST(CaptureFrame, NoiseStatisticsMatchConfiguration) {
  Scene s;
  CameraConfig c;
  c.distance_noise_std = 0.5;
  const BenchObject target{ObjectClass::Person, 20.0, 0.0, 0.0};
  std::mt19937_64 rng(12345);
  constexpr int kFrames = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < kFrames; ++i) {
    const auto d = capture_frame(s.world, s.path, s.vehicle, c, rng, i, 0.2 * i, std::span(&target, 1));
    ASSERT_EQ(d->objects.size(), 1u);
    sum += d->objects[0].distance;
    sum2 += d->objects[0].distance * d->objects[0].distance;
  }
  const double mean = sum / kFrames;
  const double sd = std::sqrt((sum2 - kFrames * mean * mean) / (kFrames - 1));
  EXPECT_NEAR(mean, 20.0, 0.02);
  EXPECT_NEAR(sd, 0.5, 0.02);
}

TEST(CaptureFrame, BenchObjectVisibilityWindow) {
  Scene s;
  BenchObject b;
  b.appear_time = 1.0;
  b.disappear_time = 2.0;
  std::mt19937_64 rng(1);
  CameraConfig c;
  EXPECT_TRUE(capture_frame(s.world, s.path, s.vehicle, c, rng, 0, 0.8, std::span(&b, 1))->objects.empty());
  EXPECT_EQ(capture_frame(s.world, s.path, s.vehicle, c, rng, 1, 1.0, std::span(&b, 1))->objects.size(), 1u);
  EXPECT_TRUE(capture_frame(s.world, s.path, s.vehicle, c, rng, 2, 2.0, std::span(&b, 1))->objects.empty());
}

TEST(CaptureFrame, DetectionTwinsAreInvisible) {
  Scene s;
  s.world = spawn_actor(s.world, ActorKind::Pedestrian, s.path.pose_at(115.0), 0.0, s.path, ActorOrigin::DetectionTwin);
  std::mt19937_64 rng(1);
  EXPECT_TRUE(capture_frame(s.world, s.path, s.vehicle, CameraConfig{}, rng, 0, 0.0)->objects.empty());
}

TEST(Mailbox, HoldRuleExamples) {
  PerceptionMailbox m;
  Detection a;
  a.frame_id = 0;
  a.delivery_time = 0.05;
  Detection b;
  b.frame_id = 1;
  b.delivery_time = 0.25;
  m.deliver(a);
  m.deliver(b);
  EXPECT_EQ(select_perception(m, 0.20)->frame_id, 0);
  EXPECT_FALSE(select_perception(m, 0.04).has_value());
  EXPECT_EQ(select_perception(m, 0.25)->frame_id, 1);
}

TEST(Mailbox, CapacityIsBounded) {
  PerceptionMailbox m(4);
  for (int i = 0; i < 10; ++i) {
    Detection d;
    d.frame_id = i;
    d.delivery_time = 0.1 * i;
    m.deliver(d);
  }
  EXPECT_EQ(m.history().size(), 4u);
  EXPECT_EQ(select_perception(m, 100.0)->frame_id, 9);
}

// Counts, over a simulated timeline, how many control cycles see each frame.
std::map<std::int64_t, int> cycles_per_frame(double fps, double control_period, double horizon) {
  CameraConfig c;
  c.fps = fps;
  CameraStream stream(c, 1);
  PerceptionMailbox m(1024);
  Scene s;
  std::map<std::int64_t, int> counts;
  std::int64_t last = -1;
  const auto n = static_cast<std::int64_t>(std::llround(horizon / control_period));
  for (std::int64_t k = 0; k < n; ++k) {
    const double now = static_cast<double>(k) * control_period;
    stream.capture_window(now, static_cast<double>(k + 1) * control_period, s.world, s.path, s.vehicle, {});
    for (auto& d : stream.deliver(now)) m.deliver(d);
    const auto sel = select_perception(m, now);
    if (!sel) continue;
    EXPECT_GE(sel->frame_id, last);
    last = sel->frame_id;
    ++counts[sel->frame_id];
  }
  return counts;
}

TEST(Mailbox, EachFrameHeldForTenControlCycles) {
  const auto counts = cycles_per_frame(5.0, 0.02, 20.0);
  ASSERT_GT(counts.size(), 90u);
  // Steady state: skip the first and last frames, which the horizon cuts.
  for (auto it = std::next(counts.begin()); it != std::prev(counts.end()); ++it) EXPECT_EQ(it->second, 10) << it->first;
}

TEST(Mailbox, HoldRuleWhenCameraIsFasterThanTicks) {
  // 100 fps against 50 Hz control: every cycle sees the newest delivered frame and frames are skipped.
  const auto counts = cycles_per_frame(100.0, 0.02, 4.0);
  for (auto it = std::next(counts.begin()); it != std::prev(counts.end()); ++it) EXPECT_EQ(it->second, 1);
  EXPECT_LT(counts.size(), 400u / 2 + 2);
}

TEST(CameraStream, FullDropoutNeverBlocksTheTick) {
  CameraConfig c;
  c.dropout_prob = 1.0;
  CameraStream stream(c, 3);
  Scene s;
  std::int64_t delivered = 0;
  for (int k = 0; k < 500; ++k) {
    stream.capture_window(k * 0.02, (k + 1) * 0.02, s.world, s.path, s.vehicle, {});
    delivered += static_cast<std::int64_t>(stream.deliver(k * 0.02).size());
  }
  EXPECT_EQ(delivered, 0);
  EXPECT_EQ(stream.frames_captured(), 50);
  EXPECT_EQ(stream.frames_dropped(), 50);
}

TEST(CameraStream, ExtraLoadDelaysDelivery) {
  CameraConfig c;
  c.extra_load_delay = 0.08;
  CameraStream stream(c, 3);
  Scene s;
  stream.capture_window(0.0, 0.02, s.world, s.path, s.vehicle, {});
  EXPECT_TRUE(stream.deliver(0.12).empty());
  const auto d = stream.deliver(0.13);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d[0].delivery_time, 0.13, 1e-12);
}

TEST(Cadence, Examples) {
  EXPECT_EQ(tick_cadence(0), (DueSignals{true, true}));
  EXPECT_TRUE(tick_cadence(3).empty());
  EXPECT_EQ(tick_cadence(2), (DueSignals{true, false}));
  EXPECT_EQ(tick_cadence(5), (DueSignals{false, true}));
  EXPECT_EQ(tick_cadence(10), (DueSignals{true, true}));
  EXPECT_EQ(Cadence().base_us(), 10'000);
}

TEST(Cadence, CountsPerSecond) {
  int control = 0, comfort = 0;
  for (int t = 0; t < 100; ++t) {
    control += tick_cadence(t).control;
    comfort += tick_cadence(t).comfort;
  }
  EXPECT_EQ(control, 50);
  EXPECT_EQ(comfort, 20);
}

TEST(Cadence, CountsMatchBruteForceOverMicroseconds) {
  // Walk every millisecond and emit whenever a period boundary is crossed.
  const Cadence c;
  int control = 0, comfort = 0, c2 = 0, f2 = 0;
  for (std::int64_t us = 0; us < 10'000'000; us += 1000) {
    control += us % 20'000 == 0;
    comfort += us % 50'000 == 0;
  }
  for (std::int64_t b = 0; b < 1000; ++b) {
    c2 += c.due(b).control;
    f2 += c.due(b).comfort;
  }
  EXPECT_EQ(control, 500);
  EXPECT_EQ(comfort, 200);
  EXPECT_EQ(c2, control);
  EXPECT_EQ(f2, comfort);
}
