#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vilbench/command.hpp"

namespace vilbench {

inline constexpr std::size_t kMaxE2EPayload = 64;

// Data-ID registry of the vehicle motion gateway.
namespace data_id {
inline constexpr std::uint16_t kControlPrimary = 0x0100;
inline constexpr std::uint16_t kControlSecondary = 0x0101;
inline constexpr std::uint16_t kVehicleState = 0x0200;
inline constexpr std::uint16_t kModeRequest = 0x0300;
inline constexpr std::uint16_t kEmergencyStop = 0x03FF;
}  // namespace data_id

// CRC-8/SAE-J1850: poly 0x1D, init 0xFF, xorout 0xFF, no reflection.
std::uint8_t crc8_sae_j1850(std::span<const std::uint8_t> bytes);

struct E2EFrame {
  std::uint16_t data_id = 0;
  std::uint8_t counter = 0;
  std::vector<std::uint8_t> payload;
  std::uint8_t crc = 0;

  friend bool operator==(const E2EFrame&, const E2EFrame&) = default;
};

// CRC over data_id (big-endian) || counter || payload.
std::uint8_t frame_crc(std::uint16_t data_id, std::uint8_t counter, std::span<const std::uint8_t> payload);

// Throws PayloadTooLong above 64 bytes.
E2EFrame encode_frame(std::uint16_t data_id, std::uint8_t counter, std::span<const std::uint8_t> payload);

// Wire layout: [id_hi][id_lo][counter][len][payload...][crc].
std::vector<std::uint8_t> serialize_frame(const E2EFrame& frame);
// Throws MalformedFrame when the length byte disagrees with the buffer size.
E2EFrame parse_frame(std::span<const std::uint8_t> bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
// Throws MalformedFrame on odd length or non-hex characters.
std::vector<std::uint8_t> from_hex(std::string_view hex);

// Control-command payload: little-endian IEEE-754 throttle, brake, steer, issued_at, then seq (i64)
// and the turn signal byte. 41 bytes.
std::vector<std::uint8_t> encode_command_payload(const ControlCommand& cmd);
// nullopt on size mismatch, non-finite values or an unknown turn signal.
std::optional<ControlCommand> decode_command_payload(std::span<const std::uint8_t> payload);

// Per-data-ID sender state: stamps the alive counter.
class E2ESender {
 public:
  explicit E2ESender(std::uint16_t id) : data_id_(id) {}
  E2EFrame send(std::span<const std::uint8_t> payload) { return encode_frame(data_id_, counter_++, payload); }
  std::uint16_t data_id() const { return data_id_; }

 private:
  std::uint16_t data_id_;
  std::uint8_t counter_ = 0;
};

}  // namespace vilbench
