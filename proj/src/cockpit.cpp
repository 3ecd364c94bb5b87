#include "vilbench/cockpit.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "vilbench/errors.hpp"

namespace vilbench {

using nlohmann::json;

namespace {

constexpr const char* kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

double axis(const json& j, const char* key, double lo, double hi) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return 0.0;
  const double v = it->get<double>();
  if (!std::isfinite(v)) return 0.0;
  return std::clamp(v, lo, hi);
}

bool send_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool recv_exact(int fd, std::uint8_t* dst, std::size_t n, const std::atomic<bool>& running) {
  while (n > 0) {
    pollfd p{fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, 100);
    if (!running.load()) return false;
    if (pr < 0 && errno == EINTR) continue;
    if (pr <= 0) continue;
    const ssize_t r = ::recv(fd, dst, n, 0);
    if (r <= 0) return false;
    dst += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

std::string header_value(const std::string& request, std::string name) {
  std::string lower = request;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto pos = lower.find("\r\n" + name + ":");
  if (pos == std::string::npos) return {};
  auto start = pos + 3 + name.size();
  const auto end = request.find("\r\n", start);
  while (start < end && request[start] == ' ') ++start;
  return request.substr(start, end - start);
}

}  // namespace

struct CockpitServer::Client {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> open{true};

  bool send_text(const std::string& text) {
    const auto bytes = websocket_encode(text);
    std::lock_guard lock(write_mu);
    if (!open.load()) return false;
    if (!send_all(fd, bytes.data(), bytes.size())) open = false;
    return open.load();
  }
};

DriverInput parse_driver_input(const json& j) {
  if (!j.is_object() || j.value("t", std::string()) != "input") throw ProtocolViolation("not a cockpit input message");
  DriverInput in;
  in.steer_axis = axis(j, "steer", -1.0, 1.0);
  in.throttle_axis = axis(j, "throttle", 0.0, 1.0);
  in.brake_axis = axis(j, "brake", 0.0, 1.0);
  if (auto it = j.find("turn_signal"); it != j.end() && it->is_string()) {
    try {
      in.turn_signal = turn_signal_from_string(it->get<std::string>());
    } catch (const ConfigError&) {
      in.turn_signal = TurnSignal::Off;
    }
  }
  in.manual_mode = j.value("mode", std::string()) == "ManualDrive";
  in.estop = j.value("estop", false);
  in.reset = j.value("reset", false);
  return in;
}

ControlCommand driver_command(const DriverInput& in, double max_steer) {
  ControlCommand c;
  c.steer = std::clamp(in.steer_axis, -1.0, 1.0) * max_steer;
  c.throttle = std::clamp(in.throttle_axis, 0.0, 1.0);
  c.brake = std::clamp(in.brake_axis, 0.0, 1.0);
  c.turn_signal = in.turn_signal;
  return c;
}

json cockpit_frame(const TickRow& row, const WorldState& world, const WaypointPath& path) {
  json actors = json::array();
  for (const auto& a : world.actors) {
    actors.push_back({{"id", a.id},
                      {"kind", to_string(a.kind)},
                      {"x", a.pose.x()},
                      {"y", a.pose.y()},
                      {"heading", a.pose.heading()},
                      {"speed", a.speed}});
  }
  json waypoints = json::array();
  const double s0 = path.project(world.ego.pose.position()).s;
  for (int k = 0; k <= 30; k += 2) {
    const double s = s0 + k;
    if (!path.closed() && s > path.length()) break;
    const Vec2 p = path.pose_at(s).position();
    waypoints.push_back({p.x, p.y});
  }
  return {{"t", "frame"},
          {"v", kCockpitVersion},
          {"tick", row.tick},
          {"time", row.time},
          {"ego",
           {{"x", row.x}, {"y", row.y}, {"heading", row.heading}, {"speed", row.speed}, {"steer", row.steer}}},
          {"throttle", row.throttle},
          {"brake", row.brake},
          {"turn_signal", to_string(row.turn_signal)},
          {"actors", actors},
          {"waypoints", waypoints},
          {"mode", to_string(row.mode)},
          {"eb_status", to_string(row.eb_status)},
          {"gap", row.gap ? json(*row.gap) : json(nullptr)},
          {"lateral_error", row.lateral_error}};
}

std::string websocket_accept_key(std::string_view client_key) {
  const std::string joined = std::string(client_key) + kWebSocketGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

std::vector<std::uint8_t> websocket_encode(std::string_view payload, std::uint8_t opcode,
                                           std::optional<std::uint32_t> mask) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(0x80 | opcode));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<std::uint8_t>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(mask_bit | 126);
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
  } else {
    out.push_back(mask_bit | 127);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> (8 * i)));
  }
  std::uint8_t key[4] = {0, 0, 0, 0};
  if (mask) {
    for (int i = 0; i < 4; ++i) key[i] = static_cast<std::uint8_t>(*mask >> (24 - 8 * i));
    out.insert(out.end(), key, key + 4);
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(payload[i]) ^ key[i % 4]);
  return out;
}

CockpitServer::CockpitServer(std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw PeerUnreachable("cockpit socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    throw PeerUnreachable("cockpit cannot listen on port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

CockpitServer::~CockpitServer() { stop(); }

void CockpitServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(mu_);
    readers = std::move(readers_);
  }
  for (auto& t : readers) t.join();
  std::lock_guard lock(mu_);
  for (auto& c : clients_) {
    std::lock_guard wl(c->write_mu);
    c->open = false;
    ::close(c->fd);
  }
  clients_.clear();
  ::close(listen_fd_);
}

void CockpitServer::accept_loop() {
  while (running_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto c = std::make_shared<Client>();
    c->fd = fd;
    std::lock_guard lock(mu_);
    readers_.emplace_back([this, c] { serve_client(c); });
  }
}

void CockpitServer::serve_client(std::shared_ptr<Client> c) {
  // Handshake: read the HTTP upgrade request.
  std::string request;
  std::uint8_t byte = 0;
  while (request.size() < 8192 && request.find("\r\n\r\n") == std::string::npos) {
    if (!recv_exact(c->fd, &byte, 1, running_)) {
      ::close(c->fd);
      return;
    }
    request.push_back(static_cast<char>(byte));
  }
  const std::string key = header_value(request, "Sec-WebSocket-Key");
  const bool path_ok = request.rfind("GET /cockpit ", 0) == 0 || request.rfind("GET /cockpit?", 0) == 0;
  if (!path_ok || key.empty()) {
    const std::string resp = "HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    send_all(c->fd, reinterpret_cast<const std::uint8_t*>(resp.data()), resp.size());
    ::close(c->fd);
    return;
  }
  const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                           "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n";
  if (!send_all(c->fd, reinterpret_cast<const std::uint8_t*>(resp.data()), resp.size())) {
    ::close(c->fd);
    return;
  }
  {
    std::lock_guard lock(mu_);
    clients_.push_back(c);
  }
  c->send_text(json{{"t", "hello"}, {"v", kCockpitVersion}}.dump());

  std::string message;
  while (running_.load() && c->open.load()) {
    std::uint8_t head[2];
    if (!recv_exact(c->fd, head, 2, running_)) break;
    const bool fin = head[0] & 0x80;
    const std::uint8_t opcode = head[0] & 0x0F;
    const bool masked = head[1] & 0x80;
    std::uint64_t len = head[1] & 0x7F;
    if (len == 126 || len == 127) {
      std::uint8_t ext[8];
      const std::size_t n = len == 126 ? 2 : 8;
      if (!recv_exact(c->fd, ext, n, running_)) break;
      len = 0;
      for (std::size_t i = 0; i < n; ++i) len = (len << 8) | ext[i];
    }
    if (len > (1u << 20)) break;
    std::uint8_t key_bytes[4] = {0, 0, 0, 0};
    if (masked && !recv_exact(c->fd, key_bytes, 4, running_)) break;
    std::string payload(static_cast<std::size_t>(len), '\0');
    if (len > 0 && !recv_exact(c->fd, reinterpret_cast<std::uint8_t*>(payload.data()), payload.size(), running_)) break;
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key_bytes[i % 4]);

    if (opcode == 0x8) break;
    if (opcode == 0x9) {
      const auto pong = websocket_encode(payload, 0xA);
      std::lock_guard wl(c->write_mu);
      send_all(c->fd, pong.data(), pong.size());
      continue;
    }
    if (opcode != 0x0 && opcode != 0x1) continue;
    message += payload;
    if (!fin) continue;
    try {
      handle_input(parse_driver_input(json::parse(message)));
    } catch (const std::exception&) {
      // Malformed UI messages are dropped.
    }
    message.clear();
  }
  std::lock_guard wl(c->write_mu);
  c->open = false;
}

void CockpitServer::handle_input(const DriverInput& in) {
  std::lock_guard lock(mu_);
  latest_ = in;
  if (in.estop) pending_modes_.push_back({GatewayMode::EmergencyStop, ModeSource::Bench, "cockpit estop"});
  if (in.reset) pending_modes_.push_back({GatewayMode::ManualDrive, ModeSource::Bench, "cockpit reset"});
  if (in.manual_mode) pending_modes_.push_back({GatewayMode::ManualDrive, ModeSource::Driver, "cockpit"});
  ++inputs_received_;
}

void CockpitServer::publish(const json& frame) {
  const std::string text = frame.dump();
  std::vector<std::shared_ptr<Client>> clients;
  {
    std::lock_guard lock(mu_);
    clients = clients_;
  }
  for (auto& c : clients) c->send_text(text);
}

std::size_t CockpitServer::client_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& c : clients_) n += c->open.load() ? 1 : 0;
  return n;
}

RunHooks CockpitServer::hooks(const WaypointPath& path, double max_steer) {
  auto shared_path = std::make_shared<WaypointPath>(path);
  auto next_publish = std::make_shared<double>(0.0);
  RunHooks h;
  h.before_control = [this, max_steer](ControlInput& in) {
    std::lock_guard lock(mu_);
    if (latest_) {
      ControlCommand c = driver_command(*latest_, max_steer);
      c.issued_at = in.now;
      c.seq = in.tick;
      in.driver = c;
    }
    for (auto& m : pending_modes_) in.mode_commands.push_back(std::move(m));
    pending_modes_.clear();
  };
  h.on_tick = [this, shared_path, next_publish](const TickRow& row, const WorldState& world) {
    if (row.time + kTimeEpsilon < *next_publish) return;
    *next_publish += kCockpitFramePeriod;
    publish(cockpit_frame(row, world, *shared_path));
  };
  return h;
}

}  // namespace vilbench
