#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vilbench/analysis.hpp"
#include "vilbench/cockpit.hpp"
#include "vilbench/errors.hpp"
#include "vilbench/harness.hpp"
#include "vilbench/nodes.hpp"
#include "vilbench/transport.hpp"

namespace {

using namespace vilbench;

enum ExitCode { kOk = 0, kMismatch = 1, kDiverged = 2, kProtocol = 3, kConfig = 4 };

std::atomic<bool> g_stop{false};

// Runs `body` in a child process; the child never returns.
pid_t spawn_node(const std::function<void()>& body) {
  const pid_t pid = ::fork();
  if (pid < 0) throw PeerUnreachable("fork failed");
  if (pid > 0) return pid;
  int code = kOk;
  try {
    body();
  } catch (const ConfigError& e) {
    std::cerr << "node: " << e.what() << "\n";
    code = kConfig;
  } catch (const std::exception& e) {
    std::cerr << "node: " << e.what() << "\n";
    code = kProtocol;
  }
  std::cout.flush();
  ::_exit(code);
}

int wait_node(pid_t pid) {
  int status = 0;
  if (::waitpid(pid, &status, 0) < 0) return kProtocol;
  return WIFEXITED(status) ? WEXITSTATUS(status) : kProtocol;
}

struct RunArgs {
  std::string stage = "internal";
  std::string scenario = "acc_lka";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> camera_fps;
  std::optional<double> tick_ms;
  std::optional<double> duration;
  bool free_running = false;
  std::optional<double> kill_primary_at;
  std::optional<double> kill_secondary_at;
  double transport_delay_ms = 0.0;
  double transport_jitter_ms = 0.0;
};

int cmd_run(const RunArgs& a) {
  ScenarioConfig scenario = resolve_scenario(a.scenario);
  if (a.seed) scenario.seed = *a.seed;
  if (a.camera_fps) scenario.camera.fps = *a.camera_fps;
  if (a.tick_ms) scenario.tick_period = *a.tick_ms / 1000.0;
  if (a.duration) scenario.duration = *a.duration;
  scenario.validate();

  StageConfig stage;
  stage.stage = stage_from_string(a.stage);
  stage.lockstep = !a.free_running;
  stage.kill_primary_at = a.kill_primary_at;
  stage.kill_secondary_at = a.kill_secondary_at;
  stage.transport_delay = a.transport_delay_ms / 1000.0;
  stage.transport_jitter = a.transport_jitter_ms / 1000.0;

  std::vector<pid_t> children;
  if (stage.stage != Stage::Internal) {
    auto cecas_listener = std::make_shared<Listener>();
    stage.cecas_endpoint = cecas_listener->endpoint();
    children.push_back(spawn_node([cecas_listener] { serve_cecas(cecas_listener->accept()); }));
    cecas_listener->close();
    if (stage.stage == Stage::Vil) {
      auto gw_listener = std::make_shared<Listener>();
      stage.gateway_endpoint = gw_listener->endpoint();
      const std::string cecas_ep = stage.cecas_endpoint;
      children.push_back(spawn_node([gw_listener, cecas_ep] { serve_gateway(gw_listener->accept(), cecas_ep); }));
      gw_listener->close();
    }
  }

  RunLog log;
  try {
    log = run_scenario(scenario, stage);
  } catch (...) {
    for (pid_t p : children) ::kill(p, SIGTERM);
    for (pid_t p : children) wait_node(p);
    throw;
  }
  int node_status = kOk;
  for (pid_t p : children) node_status = std::max(node_status, wait_node(p));

  write_run(a.out, log);
  std::cout << "wrote " << log.rows.size() << " ticks to " << a.out << "\n";
  if (node_status != kOk) {
    std::cerr << "a node process exited with status " << node_status << "\n";
    return kProtocol;
  }
  if (log.termination) {
    std::cerr << "scenario diverged at tick " << log.termination->tick << ": " << log.termination->reason << "\n";
    return kDiverged;
  }
  return kOk;
}

int cmd_report(const std::string& dir) {
  const RunLog log = read_run(dir);
  const Report r = report(log);
  write_report(dir, r);
  std::cout << r.text;
  return kOk;
}

int cmd_replay(const std::string& dir, std::optional<std::uint64_t> seed) {
  const RunLog log = read_run(dir);
  ScenarioConfig scenario = scenario_from_json(log.scenario);
  if (seed) scenario.seed = *seed;
  const ReplayVerdict v = replay(log, scenario);
  if (v.match) {
    std::cout << "match: " << v.detail << "\n";
    return kOk;
  }
  std::cout << "divergence at tick " << *v.first_divergent_tick << "\n" << v.detail << "\n";
  return kMismatch;
}

int cmd_serve_cockpit(std::uint16_t port, const std::string& scenario_name, const std::string& out,
                      std::optional<double> duration) {
  ScenarioConfig scenario = resolve_scenario(scenario_name);
  if (duration) scenario.duration = *duration;
  scenario.validate();
  CockpitServer server(port);
  std::cout << "cockpit at ws://0.0.0.0:" << server.port() << "/cockpit" << std::endl;
  StageConfig stage;
  stage.lockstep = false;
  RunOptions opts;
  opts.hooks = server.hooks(resolve_map(scenario.map), scenario.vehicle.max_steer);
  opts.stop = &g_stop;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  const RunLog log = run_scenario(scenario, stage, opts);
  server.stop();
  if (!out.empty()) {
    write_run(out, log);
    std::cout << "wrote " << log.rows.size() << " ticks to " << out << "\n";
  }
  return log.termination && log.termination->reason != "stopped" ? kDiverged : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vilbench: virtual vehicle-in-the-loop test harness"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run a scenario in one stage");
  run->add_option("--stage", ra.stage, "internal, external or vil")
      ->check(CLI::IsMember({"internal", "external", "vil"}));
  run->add_option("--scenario", ra.scenario, "builtin name (manual_drive, acc_lka, emergency_brake) or JSON file");
  run->add_option("--seed", ra.seed, "override the scenario seed");
  run->add_option("--out", ra.out, "output run directory")->required();
  run->add_option("--camera-fps", ra.camera_fps);
  run->add_option("--tick-ms", ra.tick_ms, "world tick period, a multiple of 20 ms");
  run->add_option("--duration", ra.duration, "override the scenario duration in virtual seconds");
  auto* fr = run->add_flag("--free-running", ra.free_running, "world paces to wall clock and never waits");
  run->add_flag("--lockstep", "world waits for every control reply (default)")->excludes(fr);
  run->add_option("--kill-primary-at", ra.kill_primary_at, "virtual seconds");
  run->add_option("--kill-secondary-at", ra.kill_secondary_at, "virtual seconds");
  run->add_option("--transport-delay-ms", ra.transport_delay_ms, "fixed delay per hop");
  run->add_option("--transport-jitter-ms", ra.transport_jitter_ms, "seeded uniform extra delay per hop");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summarize a run directory");
  rep->add_option("run-dir", report_dir)->required();

  std::string replay_dir;
  std::optional<std::uint64_t> replay_seed;
  auto* rpl = app.add_subcommand("replay", "Re-run an internal-stage run and compare every row");
  rpl->add_option("run-dir", replay_dir)->required();
  rpl->add_option("--seed", replay_seed, "replay under a different seed");

  std::uint16_t cockpit_port = 8765;
  std::string cockpit_scenario = "manual_drive";
  std::string cockpit_out;
  std::optional<double> cockpit_duration;
  auto* ck = app.add_subcommand("serve-cockpit", "Run a scenario in real time and serve the cockpit WebSocket");
  ck->add_option("--port", cockpit_port);
  ck->add_option("--scenario", cockpit_scenario);
  ck->add_option("--out", cockpit_out);
  ck->add_option("--duration", cockpit_duration);

  std::uint16_t node_port = 0;
  std::string node_cecas;
  auto* cn = app.add_subcommand("cecas-node", "Serve one session as the CeCaS process");
  cn->group("");
  cn->add_option("--listen", node_port)->required();
  auto* gn = app.add_subcommand("gateway-node", "Serve one session as the gateway process");
  gn->group("");
  gn->add_option("--listen", node_port)->required();
  gn->add_option("--cecas", node_cecas)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*rep) return cmd_report(report_dir);
    if (*rpl) return cmd_replay(replay_dir, replay_seed);
    if (*ck) return cmd_serve_cockpit(cockpit_port, cockpit_scenario, cockpit_out, cockpit_duration);
    if (*cn) {
      Listener l(node_port);
      serve_cecas(l.accept(-1));
      return kOk;
    }
    if (*gn) {
      Listener l(node_port);
      serve_gateway(l.accept(-1), node_cecas);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const PeerUnreachable& e) {
    std::cerr << "peer unreachable: " << e.what() << "\n";
    return kProtocol;
  } catch (const ProtocolViolation& e) {
    std::cerr << "protocol violation: " << e.what() << "\n";
    return kProtocol;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
