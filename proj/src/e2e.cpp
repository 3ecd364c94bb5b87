#include "vilbench/e2e.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "vilbench/errors.hpp"

namespace vilbench {

namespace {

constexpr std::array<std::uint8_t, 256> make_crc_table() {
  std::array<std::uint8_t, 256> table{};
  for (int i = 0; i < 256; ++i) {
    auto c = static_cast<std::uint8_t>(i);
    for (int b = 0; b < 8; ++b) c = static_cast<std::uint8_t>((c & 0x80) ? (c << 1) ^ 0x1D : (c << 1));
    table[static_cast<std::size_t>(i)] = c;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();
constexpr std::size_t kCommandPayloadSize = 4 * 8 + 8 + 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::uint8_t crc8_sae_j1850(std::span<const std::uint8_t> bytes) {
  std::uint8_t crc = 0xFF;
  for (std::uint8_t b : bytes) crc = kCrcTable[crc ^ b];
  return crc ^ 0xFF;
}

std::uint8_t frame_crc(std::uint16_t data_id, std::uint8_t counter, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> buf;
  buf.reserve(3 + payload.size());
  buf.push_back(static_cast<std::uint8_t>(data_id >> 8));
  buf.push_back(static_cast<std::uint8_t>(data_id & 0xFF));
  buf.push_back(counter);
  buf.insert(buf.end(), payload.begin(), payload.end());
  return crc8_sae_j1850(buf);
}

E2EFrame encode_frame(std::uint16_t data_id, std::uint8_t counter, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxE2EPayload) {
    throw PayloadTooLong("E2E payload of " + std::to_string(payload.size()) + " bytes exceeds 64");
  }
  E2EFrame f;
  f.data_id = data_id;
  f.counter = counter;
  f.payload.assign(payload.begin(), payload.end());
  f.crc = frame_crc(data_id, counter, payload);
  return f;
}

std::vector<std::uint8_t> serialize_frame(const E2EFrame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + frame.payload.size());
  out.push_back(static_cast<std::uint8_t>(frame.data_id >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.data_id & 0xFF));
  out.push_back(frame.counter);
  out.push_back(static_cast<std::uint8_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  out.push_back(frame.crc);
  return out;
}

E2EFrame parse_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw MalformedFrame("E2E frame shorter than header + crc");
  const std::size_t len = bytes[3];
  if (len > kMaxE2EPayload || bytes.size() != 5 + len) throw MalformedFrame("E2E length byte mismatch");
  E2EFrame f;
  f.data_id = static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]);
  f.counter = bytes[2];
  f.payload.assign(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
  f.crc = bytes.back();
  return f;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0F]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw MalformedFrame("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw MalformedFrame("non-hex character in frame");
  };
  std::vector<std::uint8_t> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  }
  return out;
}

std::vector<std::uint8_t> encode_command_payload(const ControlCommand& cmd) {
  std::vector<std::uint8_t> out;
  out.reserve(kCommandPayloadSize);
  put_u64(out, std::bit_cast<std::uint64_t>(cmd.throttle));
  put_u64(out, std::bit_cast<std::uint64_t>(cmd.brake));
  put_u64(out, std::bit_cast<std::uint64_t>(cmd.steer));
  put_u64(out, std::bit_cast<std::uint64_t>(cmd.issued_at));
  put_u64(out, static_cast<std::uint64_t>(cmd.seq));
  out.push_back(static_cast<std::uint8_t>(cmd.turn_signal));
  return out;
}

std::optional<ControlCommand> decode_command_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() != kCommandPayloadSize) return std::nullopt;
  ControlCommand cmd;
  cmd.throttle = std::bit_cast<double>(get_u64(payload, 0));
  cmd.brake = std::bit_cast<double>(get_u64(payload, 8));
  cmd.steer = std::bit_cast<double>(get_u64(payload, 16));
  cmd.issued_at = std::bit_cast<double>(get_u64(payload, 24));
  cmd.seq = static_cast<std::int64_t>(get_u64(payload, 32));
  const std::uint8_t ts = payload[40];
  if (ts > static_cast<std::uint8_t>(TurnSignal::Hazard)) return std::nullopt;
  cmd.turn_signal = static_cast<TurnSignal>(ts);
  if (!std::isfinite(cmd.throttle) || !std::isfinite(cmd.brake) || !std::isfinite(cmd.steer) ||
      !std::isfinite(cmd.issued_at)) {
    return std::nullopt;
  }
  return cmd;
}

}  // namespace vilbench
