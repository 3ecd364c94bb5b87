#include "vilbench/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "vilbench/errors.hpp"

namespace vilbench {

namespace {

using Clock = std::chrono::steady_clock;

std::pair<std::string, std::uint16_t> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint '" + endpoint + "' is not host:port");
  const int port = std::stoi(endpoint.substr(colon + 1));
  if (port <= 0 || port > 65535) throw ConfigError("endpoint '" + endpoint + "' has a bad port");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw PeerUnreachable(std::string("send failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

}  // namespace

Connection::Connection(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Connection::Connection(Connection&& other) noexcept { *this = std::move(other); }

Connection& Connection::operator=(Connection&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
    delay_ = other.delay_;
    jitter_ = other.jitter_;
    rng_ = other.rng_;
    recording_ = other.recording_;
    transcript_ = std::move(other.transcript_);
    pending_ = std::move(other.pending_);
  }
  return *this;
}

Connection::~Connection() { close(); }

void Connection::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Connection Connection::connect(const std::string& endpoint, double timeout_s) {
  const auto [host, port] = split_endpoint(endpoint);
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  std::string last_error = "timeout";
  while (true) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) == 0 && res != nullptr) {
      const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
      if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
        ::freeaddrinfo(res);
        return Connection(fd);
      }
      last_error = std::strerror(errno);
      if (fd >= 0) ::close(fd);
      ::freeaddrinfo(res);
    } else {
      last_error = "cannot resolve " + host;
    }
    if (Clock::now() >= deadline) throw PeerUnreachable("cannot connect to " + endpoint + ": " + last_error);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void Connection::set_hop_delay(double delay, double jitter, std::uint64_t seed) {
  delay_ = delay;
  jitter_ = jitter;
  rng_.seed(seed);
}

void Connection::record(bool outgoing, const nlohmann::json& m) {
  if (!recording_) return;
  TranscriptEntry e;
  e.outgoing = outgoing;
  e.type = m.value("type", std::string());
  if (auto it = m.find("tick"); it != m.end() && it->is_number_integer()) e.tick = it->get<std::int64_t>();
  transcript_.push_back(std::move(e));
}

void Connection::send(const nlohmann::json& message) {
  if (fd_ < 0) throw PeerUnreachable("connection closed");
  double wait = delay_;
  if (jitter_ > 0.0) wait += std::uniform_real_distribution<double>(0.0, jitter_)(rng_);
  if (wait > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  const std::string body = message.dump();
  if (body.size() > kMaxMessageBytes) throw ProtocolViolation("message too large");
  std::vector<std::uint8_t> buf(4 + body.size());
  const auto n = static_cast<std::uint32_t>(body.size());
  for (int i = 0; i < 4; ++i) buf[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(n >> (8 * i));
  std::memcpy(buf.data() + 4, body.data(), body.size());
  write_all(fd_, buf.data(), buf.size());
  record(true, message);
}

bool Connection::read_exact(std::uint8_t* dst, std::size_t n, int timeout_ms) {
  // Fills from pending_ first; with a timeout, a partial read is kept in pending_ for the next call.
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
  while (pending_.size() < n) {
    int wait = -1;
    if (timeout_ms >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      wait = static_cast<int>(std::max<long long>(0, left));
    }
    pollfd p{fd_, POLLIN, 0};
    const int pr = ::poll(&p, 1, wait);
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw PeerUnreachable(std::string("poll failed: ") + std::strerror(errno));
    }
    if (pr == 0) return false;
    std::uint8_t chunk[65536];
    const ssize_t r = ::recv(fd_, chunk, sizeof chunk, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw PeerUnreachable(std::string("recv failed: ") + std::strerror(errno));
    }
    if (r == 0) throw PeerUnreachable("peer closed the connection");
    pending_.insert(pending_.end(), chunk, chunk + r);
  }
  std::memcpy(dst, pending_.data(), n);
  return true;
}

std::optional<nlohmann::json> Connection::receive_for(double timeout_s) {
  if (fd_ < 0) throw PeerUnreachable("connection closed");
  const int timeout_ms = timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000.0);
  std::uint8_t head[4];
  if (!read_exact(head, 4, timeout_ms)) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(head[i]) << (8 * i);
  if (n > kMaxMessageBytes) throw ProtocolViolation("announced message length " + std::to_string(n) + " too large");
  std::vector<std::uint8_t> body(4 + n);
  if (!read_exact(body.data(), 4 + n, timeout_ms < 0 ? -1 : std::max(timeout_ms, 1000))) return std::nullopt;
  pending_.erase(pending_.begin(), pending_.begin() + 4 + n);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(body.begin() + 4, body.end());
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolViolation(std::string("bad JSON message: ") + e.what());
  }
  if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) {
    throw ProtocolViolation("message without a type discriminator");
  }
  record(false, m);
  return m;
}

nlohmann::json Connection::receive() { return *receive_for(-1.0); }

Listener::Listener(std::uint16_t port, const std::string& host) : host_(host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw PeerUnreachable(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("bad listen address " + host);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 8) != 0) {
    const std::string err = std::strerror(errno);
    close();
    throw PeerUnreachable("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::Listener(Listener&& other) noexcept { *this = std::move(other); }

Listener& Listener::operator=(Listener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    port_ = other.port_;
    host_ = std::move(other.host_);
    other.fd_ = -1;
  }
  return *this;
}

Listener::~Listener() { close(); }

void Listener::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Connection Listener::accept(double timeout_s) {
  pollfd p{fd_, POLLIN, 0};
  const int pr = ::poll(&p, 1, timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000.0));
  if (pr <= 0) throw PeerUnreachable("no peer connected within " + std::to_string(timeout_s) + " s");
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw PeerUnreachable(std::string("accept: ") + std::strerror(errno));
  return Connection(fd);
}

}  // namespace vilbench
