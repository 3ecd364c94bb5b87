#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace vilbench {

// Message types of the harness wire protocol.
namespace msg {
inline constexpr const char* kHello = "Hello";
inline constexpr const char* kTickState = "TickState";
inline constexpr const char* kDetection = "Detection";
inline constexpr const char* kControlReply = "ControlReply";
inline constexpr const char* kGatewayFrame = "GatewayFrame";
inline constexpr const char* kModeEvent = "ModeEvent";
inline constexpr const char* kBye = "Bye";
}  // namespace msg

inline constexpr std::uint32_t kMaxMessageBytes = 16u << 20;

struct TranscriptEntry {
  bool outgoing = false;
  std::string type;
  std::int64_t tick = -1;  // -1 when the message carries no tick
};

// Length-prefixed JSON over a TCP stream: u32 little-endian byte count, then the UTF-8 document.
class Connection {
 public:
  Connection() = default;
  explicit Connection(int fd);
  Connection(Connection&& other) noexcept;
  Connection& operator=(Connection&& other) noexcept;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection();

  // Retries until `timeout_s` elapses; throws PeerUnreachable.
  static Connection connect(const std::string& endpoint, double timeout_s = 5.0);

  // Every send waits delay + U[0, jitter) first, to emulate one network hop.
  void set_hop_delay(double delay, double jitter, std::uint64_t seed);
  void record_transcript(bool on) { recording_ = on; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

  // Throws PeerUnreachable when the peer is gone.
  void send(const nlohmann::json& message);
  // Blocks. Throws PeerUnreachable on EOF and ProtocolViolation on bad framing or JSON.
  nlohmann::json receive();
  // nullopt when nothing complete arrives within `timeout_s`.
  std::optional<nlohmann::json> receive_for(double timeout_s);

  bool valid() const { return fd_ >= 0; }
  void close();

 private:
  void record(bool outgoing, const nlohmann::json& m);
  bool read_exact(std::uint8_t* dst, std::size_t n, int timeout_ms);

  int fd_ = -1;
  double delay_ = 0.0;
  double jitter_ = 0.0;
  std::mt19937_64 rng_;
  bool recording_ = false;
  std::vector<TranscriptEntry> transcript_;
  std::vector<std::uint8_t> pending_;  // bytes read ahead of a partial message
};

class Listener {
 public:
  // Port 0 picks a free port.
  explicit Listener(std::uint16_t port = 0, const std::string& host = "127.0.0.1");
  Listener(Listener&& other) noexcept;
  Listener& operator=(Listener&& other) noexcept;
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  std::uint16_t port() const { return port_; }
  std::string endpoint() const { return host_ + ":" + std::to_string(port_); }
  // Throws PeerUnreachable on timeout.
  Connection accept(double timeout_s = 10.0);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::string host_;
};

}  // namespace vilbench
