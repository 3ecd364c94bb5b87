#include "vilbench/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "vilbench/errors.hpp"
#include "vilbench/scheduler.hpp"

namespace vilbench {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<BenchObject> bench_objects(const ScenarioConfig& s) {
  std::vector<BenchObject> out;
  for (const auto& e : s.events) {
    if (e.kind != EventKind::PersonAppears) continue;
    BenchObject b;
    b.object_class = ObjectClass::Person;
    b.distance = e.distance;
    b.lateral_offset = e.lateral_offset;
    b.appear_time = e.time;
    if (e.duration > 0.0) b.disappear_time = e.time + e.duration;
    out.push_back(b);
  }
  return out;
}

WorldState initial_world(const ScenarioConfig& s, const WaypointPath& path) {
  WorldState w;
  w.tick_period = s.tick_period;
  w.ego = ego_on_path(path, s.ego.s, s.ego.lateral_offset, s.ego.speed);
  for (const auto& a : s.actors) {
    const Pose2D center = path.pose_at(a.s);
    const Vec2 left{-std::sin(center.heading()), std::cos(center.heading())};
    const Vec2 p = center.position() + a.lateral_offset * left;
    w = spawn_actor(w, a.kind, Pose2D(p.x, p.y, center.heading()), a.speed, path);
    w.actors.back().path_s = path.wrap(a.s);
  }
  return w;
}

// Kill times from the stage and from scripted kill events; the earlier wins.
StageConfig merge_kills(const ScenarioConfig& s, StageConfig st) {
  for (const auto& e : s.events) {
    if (e.kind != EventKind::KillChannel) continue;
    auto& at = e.channel == Channel::Primary ? st.kill_primary_at : st.kill_secondary_at;
    at = at ? std::min(*at, e.time) : e.time;
  }
  return st;
}

}  // namespace

double stimulus_onset(const ScenarioConfig& scenario, double capture_time) {
  double onset = -std::numeric_limits<double>::infinity();
  for (const auto& b : bench_objects(scenario)) {
    if (b.appear_time <= capture_time + kTimeEpsilon && b.disappear_time > capture_time) {
      onset = std::max(onset, b.appear_time);
    }
  }
  return std::isfinite(onset) ? onset : capture_time;
}

RunLog run_scenario(const ScenarioConfig& scenario, const StageConfig& stage_in, const RunOptions& options) {
  scenario.validate();
  const StageConfig stage = merge_kills(scenario, stage_in);
  const WaypointPath path = resolve_map(scenario.map);
  const VehicleParams& vehicle = scenario.vehicle;
  const StepContext ctx{&path, &vehicle};
  const auto bench = bench_objects(scenario);

  RunLog log;
  log.scenario = to_json(scenario);
  log.stage = to_json(stage);

  WorldState world = initial_world(scenario, path);
  CameraStream camera(scenario.camera, scenario.seed, scenario.camera_stream_start);
  auto control = make_control_path(scenario, stage, options.record_transcript);

  TickBarrier barrier;
  for (const char* p : {"cecas", "dynamics", "actors"}) barrier.register_participant(p);

  const Cadence cadence;
  const auto tick_us = std::llround(scenario.tick_period * 1e6);
  const std::int64_t base_per_tick = tick_us / cadence.base_us();

  auto events = scenario.events;
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  std::size_t next_event = 0;

  std::optional<ControlCommand> driver;
  if (scenario.name == ScenarioKind::ManualDrive) driver = ControlCommand{};
  TurnSignal latched_signal = TurnSignal::Off;
  bool twin_spawned = false;
  std::optional<LatencyRecord> pending_latency;

  const auto marker = [&](std::int64_t tick, double t, std::string kind, std::string detail) {
    log.events.push_back({tick, t, std::move(kind), std::move(detail)});
  };

  const auto wall_start = Clock::now();
  const std::int64_t ticks = scenario.tick_count();
  for (std::int64_t k = 0; k < ticks; ++k) {
    if (options.stop && options.stop->load()) {
      log.termination = Termination{k, "stopped"};
      break;
    }
    const double now = world.time();
    const double next = static_cast<double>(k + 1) * scenario.tick_period;

    bool comfort_due = false;
    for (std::int64_t b = k * base_per_tick; b < (k + 1) * base_per_tick; ++b) {
      const DueSignals due = cadence.due(b);
      ++log.emissions.base_ticks;
      log.emissions.control += due.control ? 1 : 0;
      log.emissions.comfort += due.comfort ? 1 : 0;
      comfort_due = comfort_due || due.comfort;
    }

    ControlInput in;
    in.tick = k;
    in.now = now;
    in.ego = world.ego;

    while (next_event < events.size() && events[next_event].time <= now + kTimeEpsilon) {
      const ScenarioEvent& e = events[next_event++];
      switch (e.kind) {
        case EventKind::PersonAppears:
          marker(k, e.time, "person_appears", "distance " + format_double(e.distance));
          break;
        case EventKind::EnableLoad:
          camera.set_extra_load_delay(e.delay);
          marker(k, now, "enable_load", "extra_load_delay " + format_double(e.delay));
          break;
        case EventKind::DriverInput:
          driver = e.driver;
          break;
        case EventKind::ModeRequest:
          in.mode_commands.push_back({e.mode, e.source, "scripted"});
          break;
        case EventKind::EmergencyStop:
          in.mode_commands.push_back({GatewayMode::EmergencyStop, ModeSource::Bench, "scripted bench stop"});
          break;
        case EventKind::BenchReset:
          in.mode_commands.push_back({GatewayMode::ManualDrive, ModeSource::Bench, "bench reset"});
          break;
        case EventKind::KillChannel:
          break;  // merged into the stage kill times
      }
    }

    camera.capture_window(now, next, world, path, vehicle, bench);
    for (auto& d : camera.deliver(now)) {
      ++log.emissions.detections_delivered;
      if (!twin_spawned) {
        for (const auto& o : d.objects) {
          if (o.object_class != ObjectClass::Person) continue;
          const Pose2D pose = pose_ahead_on_path(path, world.ego.pose, o.distance);
          world = spawn_actor(world, ActorKind::Pedestrian, pose, 0.0, path, ActorOrigin::DetectionTwin);
          marker(k, now, "twin_spawned", "frame " + std::to_string(d.frame_id) + " at " + format_double(o.distance) + " m");
          twin_spawned = true;
          break;
        }
      }
      in.detections.push_back(std::move(d));
    }

    if (driver) {
      in.driver = *driver;
      in.driver->issued_at = now;
      in.driver->seq = k;
    }
    if (options.hooks.before_control) options.hooks.before_control(in);
    for (const auto& c : in.mode_commands) {
      marker(k, now, "mode_command", std::string(to_string(c.source)) + " requests " + std::string(to_string(c.request)));
    }

    ControlOutput out = control->exchange(in);
    for (const auto& e : out.events) marker(k, e.time, e.kind, e.detail);
    if (out.error) {
      marker(k, now, "scenario_diverged", *out.error);
      log.termination = Termination{k, *out.error};
      break;
    }

    ControlCommand applied = out.command;
    if (comfort_due) latched_signal = applied.turn_signal;
    applied.turn_signal = latched_signal;

    if (out.eb_triggered_now && out.eb.trigger_frame && out.eb.trigger_capture_time && out.eb.trigger_time) {
      LatencyRecord r;
      r.trigger_frame = *out.eb.trigger_frame;
      r.capture_time = *out.eb.trigger_capture_time;
      r.onset_time = stimulus_onset(scenario, r.capture_time);
      r.trigger_time = *out.eb.trigger_time;
      pending_latency = r;
      marker(k, now, "eb_trigger", "frame " + std::to_string(r.trigger_frame));
    }
    if (pending_latency && applied.brake >= 1.0) {
      pending_latency->brake_applied_time = now;
      log.latencies.push_back(*pending_latency);
      pending_latency.reset();
    }

    TickRow row;
    row.tick = k;
    row.time = now;
    row.x = world.ego.pose.x();
    row.y = world.ego.pose.y();
    row.heading = world.ego.pose.heading();
    row.speed = world.ego.speed;
    row.accel = world.ego.accel;
    row.steer = world.ego.steer;
    row.throttle = applied.throttle;
    row.brake = applied.brake;
    row.cmd_steer = applied.steer;
    row.turn_signal = applied.turn_signal;
    row.lateral_error = lateral_error(world.ego.pose, path);
    row.gap = distance_to_lead(world, path, vehicle, vehicle);
    row.perceived_distance = out.perceived_distance;
    row.mode = out.mode;
    row.eb_status = out.eb.status;
    row.active_channel = out.active;
    row.cmd_age = now - applied.issued_at;
    log.rows.push_back(row);
    if (options.hooks.on_tick) options.hooks.on_tick(row, world);

    if (row.gap && *row.gap <= 0.0) {
      marker(k, now, "scenario_diverged", "collision, gap " + format_double(*row.gap));
      log.termination = Termination{k, "collision"};
      break;
    }

    for (const char* p : {"cecas", "dynamics", "actors"}) barrier.report(p, k);
    world = step(world, barrier, applied, ctx);

    if (!stage.lockstep) {
      std::this_thread::sleep_until(wall_start + std::chrono::duration_cast<Clock::duration>(
                                                     std::chrono::duration<double>(next)));
    }
  }

  control->finish();
  log.emissions.frames_captured = camera.frames_captured();
  log.emissions.frames_dropped = camera.frames_dropped();
  if (stage.stage != Stage::Internal) {
    log.wall = control->wall_stats();
    log.wall["elapsed"] = std::chrono::duration<double>(Clock::now() - wall_start).count();
  }
  if (options.transcript_out && control->transcript()) *options.transcript_out = *control->transcript();
  return log;
}

}  // namespace vilbench
