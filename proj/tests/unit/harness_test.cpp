#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <thread>

#include "loopback.hpp"
#include "oracles.hpp"
#include "vilbench/analysis.hpp"
#include "vilbench/errors.hpp"
#include "vilbench/harness.hpp"
#include "vilbench/runlog.hpp"
#include "vilbench/scheduler.hpp"
#include "vilbench/transport.hpp"

using namespace vilbench;
namespace fs = std::filesystem;

namespace {

ScenarioConfig short_scenario(const char* name, double duration) {
  ScenarioConfig s = builtin_scenario(name);
  s.duration = duration;
  return s;
}

ScenarioConfig eb_with_person_at(double appear, double duration) {
  ScenarioConfig s = builtin_scenario("emergency_brake");
  s.duration = duration;
  s.events.clear();
  ScenarioEvent p;
  p.time = appear;
  p.kind = EventKind::PersonAppears;
  p.distance = 15.0;
  s.events.push_back(p);
  return s;
}

// The first kPhysicsColumns cells of a formatted row.
std::string physics_of(const TickRow& r) {
  const std::string line = format_row(r);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < kPhysicsColumns; ++i) pos = line.find(',', pos) + 1;
  return line.substr(0, pos);
}

StageConfig stage_of(Stage s) {
  StageConfig st;
  st.stage = s;
  return st;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("vilbench_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(ScenarioJson, RoundTripsBuiltins) {
  for (const auto& name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    EXPECT_EQ(to_json(scenario_from_json(to_json(s))), to_json(s)) << name;
  }
}

TEST(ScenarioJson, RoundTripsEveryEventKind) {
  ScenarioConfig s = builtin_scenario("acc_lka");
  s.seed = 99;
  s.camera.fps = 2.0;
  s.camera.distance_noise_std = 0.25;
  for (auto k : {EventKind::PersonAppears, EventKind::EnableLoad, EventKind::DriverInput, EventKind::ModeRequest,
                 EventKind::EmergencyStop, EventKind::BenchReset, EventKind::KillChannel}) {
    ScenarioEvent e;
    e.kind = k;
    e.time = 1.0 + s.events.size();
    e.delay = 0.08;
    e.channel = Channel::Secondary;
    e.driver.steer = 0.1;
    e.mode = GatewayMode::ExternalControl;
    e.source = ModeSource::SDS;
    s.events.push_back(e);
  }
  EXPECT_EQ(to_json(scenario_from_json(to_json(s))), to_json(s));
}

TEST(ScenarioConfig, RejectsInvalidConfigs) {
  auto s = builtin_scenario("acc_lka");
  s.tick_period = 0.03;
  EXPECT_THROW(s.validate(), ConfigError);
  s = builtin_scenario("acc_lka");
  s.duration = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(builtin_scenario("no_such"), ConfigError);
  EXPECT_THROW(run_scenario(s, {}), ConfigError);
}

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 20000; ++i) {
    const double v = i % 2 ? u(rng) : std::ldexp(u(rng), -static_cast<int>(rng() % 60));
    ASSERT_EQ(std::stod(format_double(v)), v) << format_double(v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(20.0), "20");
}

TEST(RunCsv, RoundTripsRows) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<TickRow> rows;
  for (int k = 0; k < 300; ++k) {
    TickRow r;
    r.tick = k;
    r.time = 0.02 * k;
    r.x = u(rng);
    r.y = u(rng);
    r.heading = u(rng) / 20.0;
    r.speed = std::abs(u(rng));
    r.accel = u(rng) / 10.0;
    r.steer = u(rng) / 100.0;
    r.throttle = k % 3 ? 0.0 : 0.5;
    r.brake = k % 3 ? 0.25 : 0.0;
    r.cmd_steer = r.steer;
    r.turn_signal = static_cast<TurnSignal>(k % 4);
    r.lateral_error = std::abs(u(rng)) / 100.0;
    if (k % 2) r.gap = std::abs(u(rng));
    if (k % 5) r.perceived_distance = std::abs(u(rng));
    r.mode = static_cast<GatewayMode>(k % 4);
    r.eb_status = k % 7 ? EbStatus::Normal : EbStatus::Braking;
    r.active_channel = static_cast<ActiveChannel>(k % 3);
    r.cmd_age = 0.02 * (k % 4);
    rows.push_back(r);
  }
  EXPECT_EQ(rows_from_csv(rows_to_csv(rows)), rows);
  EXPECT_EQ(rows_to_csv(rows).substr(0, rows_to_csv(rows).find('\n')).find("tick,time,x,y"), 0u);
}

TEST(RunCsv, MalformedRowsAreConfigErrors) {
  EXPECT_THROW(parse_row("1,2,3"), ConfigError);
  std::string line = format_row(TickRow{});
  line.replace(0, 1, "x");
  EXPECT_THROW(parse_row(line), ConfigError);
}

TEST(Harness, OneRowPerTickAtExactTimes) {
  const auto log = run_scenario(short_scenario("acc_lka", 10.0), {});
  ASSERT_EQ(log.rows.size(), 500u);
  for (std::size_t k = 0; k < log.rows.size(); ++k) {
    ASSERT_EQ(log.rows[k].tick, static_cast<std::int64_t>(k));
    ASSERT_NEAR(log.rows[k].time, 0.02 * static_cast<double>(k), 1e-9);
  }
  EXPECT_FALSE(log.termination);
  EXPECT_EQ(log.emissions.base_ticks, 1000);
}

TEST(Harness, RepeatedRunsAreIdentical) {
  auto s = short_scenario("emergency_brake", 14.0);
  s.camera.distance_noise_std = 0.3;
  const auto a = run_scenario(s, {});
  const auto b = run_scenario(s, {});
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.latencies, b.latencies);
  EXPECT_EQ(a.events, b.events);
}

TEST(Harness, StagesAgreeOnPhysics) {
  auto s = short_scenario("emergency_brake", 13.0);
  const auto internal = run_scenario(s, {});
  const auto external = testsupport::run_loopback(s, stage_of(Stage::External));
  const auto vil = testsupport::run_loopback(s, stage_of(Stage::Vil));
  ASSERT_EQ(internal.rows.size(), external.rows.size());
  ASSERT_EQ(internal.rows.size(), vil.rows.size());
  for (std::size_t k = 0; k < internal.rows.size(); ++k) {
    ASSERT_EQ(physics_of(internal.rows[k]), physics_of(external.rows[k])) << "tick " << k;
    ASSERT_EQ(physics_of(internal.rows[k]), physics_of(vil.rows[k])) << "tick " << k;
  }
  EXPECT_EQ(internal.latencies, external.latencies);
  EXPECT_EQ(internal.latencies, vil.latencies);
  EXPECT_FALSE(external.wall.is_null());
}

// Lockstep: the world never sends the state of tick N+1 before it has the reply for tick N.
TEST(Harness, LockstepTranscriptIsStrictlyAlternating) {
  for (Stage stage : {Stage::External, Stage::Vil}) {
    std::vector<TranscriptEntry> transcript;
    RunOptions opt;
    opt.record_transcript = true;
    opt.transcript_out = &transcript;
    const auto log = testsupport::run_loopback(short_scenario("emergency_brake", 11.0), stage_of(stage), opt);
    std::int64_t expected_state = 0;
    bool awaiting_reply = false;
    std::size_t replies = 0;
    for (const auto& e : transcript) {
      if (e.outgoing && e.type == msg::kTickState) {
        ASSERT_FALSE(awaiting_reply) << "tick " << e.tick;
        ASSERT_EQ(e.tick, expected_state);
        awaiting_reply = true;
      } else if (!e.outgoing && e.type == msg::kControlReply) {
        ASSERT_TRUE(awaiting_reply);
        ASSERT_EQ(e.tick, expected_state);
        awaiting_reply = false;
        ++expected_state;
        ++replies;
      }
    }
    EXPECT_EQ(replies, log.rows.size());
  }
}

TEST(Harness, ReplyForTheWrongTickIsAProtocolViolation) {
  Listener listener(0);
  std::thread fake([&] {
    try {
      Connection c = listener.accept(10.0);
      c.receive();
      c.send({{"type", msg::kHello}, {"role", "cecas"}, {"version", 1}});
      while (true) {
        const auto m = c.receive();
        if (m["type"] == msg::kTickState) {
          c.send({{"type", msg::kControlReply}, {"tick", m["tick"].get<std::int64_t>() + 7}});
        }
      }
    } catch (const std::exception&) {
    }
  });
  StageConfig st = stage_of(Stage::External);
  st.cecas_endpoint = listener.endpoint();
  EXPECT_THROW(run_scenario(short_scenario("acc_lka", 2.0), st), ProtocolViolation);
  fake.join();
}

TEST(Harness, MissingNodeIsPeerUnreachable) {
  std::string endpoint;
  {
    Listener l(0);
    endpoint = l.endpoint();
  }
  StageConfig st = stage_of(Stage::External);
  st.cecas_endpoint = endpoint;
  EXPECT_THROW(run_scenario(short_scenario("acc_lka", 1.0), st), PeerUnreachable);
}

TEST(Harness, BrakeTimeMatchesTimelineOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double fps : {2.0, 5.0, 10.0}) {
    for (int i = 0; i < 8; ++i) {
      const double appear = 2.0 + u(rng);
      auto s = eb_with_person_at(appear, 4.0);
      s.camera.fps = fps;
      const auto log = run_scenario(s, {});
      ASSERT_EQ(log.latencies.size(), 1u);
      const auto& r = log.latencies[0];
      EXPECT_NEAR(r.brake_applied_time,
                  oracle::brake_time_for_onset(appear, fps, s.camera.processing_delay, s.tick_period), 1e-9)
          << "fps " << fps << " appear " << appear;
      EXPECT_EQ(r.onset_time, appear);
      EXPECT_LE(r.capture_time, r.trigger_time);
      EXPECT_LE(r.trigger_time, r.brake_applied_time);
      EXPECT_GE(r.capture_time, appear - 1e-9);
    }
  }
}

TEST(Harness, OneLatencyRecordPerTrigger) {
  const auto log = run_scenario(short_scenario("emergency_brake", 14.0), {});
  ASSERT_EQ(log.latencies.size(), 1u);
  std::size_t braking_edges = 0;
  for (std::size_t k = 1; k < log.rows.size(); ++k) {
    braking_edges += log.rows[k].eb_status == EbStatus::Braking && log.rows[k - 1].eb_status == EbStatus::Normal;
  }
  EXPECT_EQ(braking_edges, 1u);
  // The person twin is placed once, on the first detection that contains it.
  EXPECT_EQ(std::count_if(log.events.begin(), log.events.end(), [](const auto& e) { return e.kind == "twin_spawned"; }), 1);
}

TEST(Harness, ManualDriveDoesNotDependOnCameraRate) {
  auto a = builtin_scenario("manual_drive");
  auto b = a;
  b.camera.fps = 2.0;
  const auto ra = run_scenario(a, {});
  const auto rb = run_scenario(b, {});
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t k = 0; k < ra.rows.size(); ++k) ASSERT_EQ(physics_of(ra.rows[k]), physics_of(rb.rows[k]));
  for (const auto& r : ra.rows) ASSERT_EQ(r.mode, GatewayMode::ManualDrive);
}

TEST(Harness, TurnSignalChangesOnlyOnComfortTicks) {
  const auto log = run_scenario(builtin_scenario("manual_drive"), {});
  const Cadence c;
  int changes = 0;
  for (std::size_t k = 1; k < log.rows.size(); ++k) {
    if (log.rows[k].turn_signal == log.rows[k - 1].turn_signal) continue;
    ++changes;
    const auto base = static_cast<std::int64_t>(2 * k);
    EXPECT_TRUE(c.due(base).comfort || c.due(base + 1).comfort) << "tick " << k;
  }
  EXPECT_EQ(changes, 2);
}

TEST(Harness, CollisionTerminatesTheRun) {
  auto s = builtin_scenario("manual_drive");
  s.actors.push_back({ActorKind::LeadVehicle, 40.0, 0.0, 0.0});
  const auto log = run_scenario(s, {});
  ASSERT_TRUE(log.termination);
  EXPECT_EQ(log.termination->reason, "collision");
  EXPECT_LE(*log.rows.back().gap, 0.0);
  EXPECT_LT(log.rows.size(), static_cast<std::size_t>(s.tick_count()));
  EXPECT_EQ(log.events.back().kind, "scenario_diverged");
}

TEST(Harness, LeavingTheTrackTerminatesTheRun) {
  auto s = builtin_scenario("manual_drive");
  s.events.clear();
  ScenarioEvent e;
  e.kind = EventKind::DriverInput;
  e.driver.throttle = 0.3;
  e.driver.steer = 0.3;
  s.events.push_back(e);
  const auto log = run_scenario(s, {});
  ASSERT_TRUE(log.termination);
  EXPECT_NE(log.termination->reason.find("centerline"), std::string::npos);
}

TEST(Harness, StopFlagEndsTheRunEarly) {
  std::atomic<bool> stop{false};
  RunOptions opt;
  opt.stop = &stop;
  opt.hooks.on_tick = [&](const TickRow& r, const WorldState&) {
    if (r.tick == 99) stop = true;
  };
  const auto log = run_scenario(short_scenario("acc_lka", 10.0), {}, opt);
  EXPECT_EQ(log.rows.size(), 100u);
  ASSERT_TRUE(log.termination);
  EXPECT_EQ(log.termination->reason, "stopped");
}

TEST(Analysis, NoTriggersWithoutEmergencyBrake) {
  const auto log = run_scenario(short_scenario("acc_lka", 3.0), {});
  EXPECT_THROW(measure_latencies(log), NoTriggers);
  EXPECT_TRUE(report(log).json["latency"].is_null());
}

TEST(Analysis, PercentilesAreNearestRank) {
  const auto s = latency_stats({0.5, 0.1, 0.4, 0.2, 0.3});
  EXPECT_EQ(s.count, 5u);
  EXPECT_NEAR(s.mean, 0.3, 1e-12);
  EXPECT_EQ(s.p50, 0.3);
  EXPECT_EQ(s.p95, 0.5);
  EXPECT_EQ(s.max, 0.5);
}

TEST(Analysis, ReportSummarisesTheRun) {
  const auto log = run_scenario(short_scenario("emergency_brake", 14.0), {});
  const auto r = report(log);
  EXPECT_EQ(r.json["rows"], 700);
  EXPECT_TRUE(r.json["lateral_error"].contains("mean"));
  EXPECT_EQ(r.json["latency_records"], 1);
  EXPECT_NE(r.text.find("lateral error"), std::string::npos);
  EXPECT_NE(r.text.find("latency onset->brake"), std::string::npos);
  EXPECT_EQ(std::count(r.series_csv.begin(), r.series_csv.end(), '\n'), 701);
}

TEST(RunFiles, WriteReadRoundTrip) {
  const auto dir = temp_dir("roundtrip");
  const auto log = run_scenario(short_scenario("emergency_brake", 12.0), {});
  write_run(dir, log);
  const auto back = read_run(dir);
  EXPECT_EQ(back.rows, log.rows);
  EXPECT_EQ(back.latencies, log.latencies);
  EXPECT_EQ(back.events, log.events);
  EXPECT_EQ(back.scenario, log.scenario);
  EXPECT_EQ(back.emissions, log.emissions);
  EXPECT_THROW(read_run(dir / "missing"), ConfigError);
  fs::remove_all(dir);
}

TEST(Replay, MatchesItsOwnLog) {
  const auto s = short_scenario("acc_lka", 6.0);
  const auto v = replay(run_scenario(s, {}), s);
  EXPECT_TRUE(v.match);
  EXPECT_FALSE(v.first_divergent_tick);
}

TEST(Replay, DifferentSeedDivergesAtFirstNoisyPerception) {
  auto s = short_scenario("acc_lka", 6.0);
  s.camera.distance_noise_std = 0.3;
  const auto log = run_scenario(s, {});
  auto other = s;
  other.seed = s.seed + 1;
  const auto v = replay(log, other);
  EXPECT_FALSE(v.match);
  ASSERT_TRUE(v.first_divergent_tick);
  std::int64_t first_perceived = -1;
  for (const auto& r : log.rows) {
    if (r.perceived_distance) {
      first_perceived = r.tick;
      break;
    }
  }
  EXPECT_EQ(*v.first_divergent_tick, first_perceived);
}

TEST(Replay, CompareRowsFindsFirstDifference) {
  const auto log = run_scenario(short_scenario("acc_lka", 2.0), {});
  auto rows = log.rows;
  rows[37].cmd_age += 1e-12;
  EXPECT_EQ(*compare_rows(log.rows, rows).first_divergent_tick, 37);
  rows = log.rows;
  rows.pop_back();
  EXPECT_FALSE(compare_rows(log.rows, rows).match);
}

namespace {

// A raw client socket connected to `l`, paired with the accepted Connection.
std::pair<int, Connection> raw_pair(Listener& l) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(l.port());
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) throw std::runtime_error("connect failed");
  return {fd, l.accept(5.0)};
}

void send_raw(int fd, const std::string& bytes) {
  ASSERT_EQ(::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL), static_cast<ssize_t>(bytes.size()));
}

std::string prefixed(const std::string& body, std::uint32_t len) {
  std::string out(4, '\0');
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((len >> (8 * i)) & 0xFF);
  return out + body;
}

}  // namespace

TEST(Transport, RoundTripsMessages) {
  Listener l(0);
  Connection server;
  std::thread t([&] { server = l.accept(5.0); });
  Connection client = Connection::connect(l.endpoint());
  t.join();
  const nlohmann::json m = {{"type", "TickState"}, {"tick", 3}, {"now", 0.06}, {"nested", {1, 2, 3}}};
  client.send(m);
  client.send({{"type", "Bye"}});
  EXPECT_EQ(server.receive(), m);
  EXPECT_EQ(server.receive()["type"], "Bye");
  EXPECT_FALSE(server.receive_for(0.05).has_value());
  client.close();
  EXPECT_THROW(server.receive(), PeerUnreachable);
}

TEST(Transport, FramingIsLittleEndianLengthPrefix) {
  Listener l(0);
  auto [fd, server] = raw_pair(l);
  const std::string body = R"({"type":"Hello","tick":1})";
  // Split delivery: prefix and body in separate writes.
  const std::string framed = prefixed(body, static_cast<std::uint32_t>(body.size()));
  send_raw(fd, framed.substr(0, 2));
  send_raw(fd, framed.substr(2, 7));
  send_raw(fd, framed.substr(9));
  const auto m = server.receive();
  EXPECT_EQ(m["type"], "Hello");
  EXPECT_EQ(m["tick"], 1);
  ::close(fd);
}

TEST(Transport, BadJsonAndOversizeAreProtocolViolations) {
  Listener l(0);
  {
    auto [fd, server] = raw_pair(l);
    send_raw(fd, prefixed("{not json", 9));
    EXPECT_THROW(server.receive(), ProtocolViolation);
    ::close(fd);
  }
  {
    auto [fd, server] = raw_pair(l);
    send_raw(fd, prefixed("", kMaxMessageBytes + 1));
    EXPECT_THROW(server.receive(), ProtocolViolation);
    ::close(fd);
  }
}
