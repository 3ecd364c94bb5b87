#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vilbench/harness.hpp"
#include "vilbench/path.hpp"

namespace vilbench {

inline constexpr int kCockpitVersion = 1;
inline constexpr double kCockpitFramePeriod = 0.05;  // 20 Hz

// Driver input as sent by the cockpit UI. Axis values are re-clamped here.
struct DriverInput {
  double steer_axis = 0.0;     // [-1, 1]
  double throttle_axis = 0.0;  // [0, 1]
  double brake_axis = 0.0;     // [0, 1]
  TurnSignal turn_signal = TurnSignal::Off;
  bool manual_mode = false;  // Driver requests ManualDrive
  bool estop = false;        // Bench emergency stop
  bool reset = false;        // Bench reset out of EmergencyStop
};

// Throws ProtocolViolation for a message that is not an input message.
DriverInput parse_driver_input(const nlohmann::json& j);
ControlCommand driver_command(const DriverInput& in, double max_steer);

nlohmann::json cockpit_frame(const TickRow& row, const WorldState& world, const WaypointPath& path);

// RFC 6455 helpers.
std::string websocket_accept_key(std::string_view client_key);
std::vector<std::uint8_t> websocket_encode(std::string_view payload, std::uint8_t opcode = 0x1,
                                           std::optional<std::uint32_t> mask = std::nullopt);

// Serves the /cockpit WebSocket endpoint: frame stream out, driver input in.
class CockpitServer {
 public:
  explicit CockpitServer(std::uint16_t port = 0);
  ~CockpitServer();
  CockpitServer(const CockpitServer&) = delete;
  CockpitServer& operator=(const CockpitServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

  void publish(const nlohmann::json& frame);
  std::size_t client_count() const;
  std::int64_t inputs_received() const { return inputs_received_.load(); }

  // Hooks that feed the latest driver input into the run and publish decimated frames.
  RunHooks hooks(const WaypointPath& path, double max_steer);

 private:
  struct Client;
  void accept_loop();
  void serve_client(std::shared_ptr<Client> c);
  void handle_input(const DriverInput& in);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Client>> clients_;
  std::vector<std::thread> readers_;
  std::optional<DriverInput> latest_;
  std::vector<ModeCommand> pending_modes_;
  std::atomic<std::int64_t> inputs_received_{0};
};

}  // namespace vilbench
