#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vilbench/e2e.hpp"
#include "vilbench/errors.hpp"
#include "vilbench/gateway.hpp"

using namespace vilbench;

namespace {

std::span<const std::uint8_t> bytes_of(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

TEST(Crc8, CheckValue) {
  const std::string check = "123456789";
  EXPECT_EQ(oracle::crc8_bitwise(bytes_of(check)), 0x4B);
  EXPECT_EQ(crc8_sae_j1850(bytes_of(check)), 0x4B);
}

TEST(Crc8, TableMatchesBitwiseOracle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::uint8_t> buf(rng() % 80);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(crc8_sae_j1850(buf), oracle::crc8_bitwise(buf));
  }
  for (int b = 0; b < 256; ++b) {
    const std::uint8_t one = static_cast<std::uint8_t>(b);
    ASSERT_EQ(crc8_sae_j1850(std::span(&one, 1)), oracle::crc8_bitwise(std::span(&one, 1)));
  }
}

TEST(EncodeFrame, HeaderOnlyCrc) {
  const auto f = encode_frame(0x0100, 0, {});
  const std::uint8_t header[] = {0x01, 0x00, 0x00};
  EXPECT_EQ(f.crc, oracle::crc8_bitwise(header));
}

TEST(EncodeFrame, PayloadChangesCrc) {
  const std::uint8_t a = 0x00, b = 0x01;
  EXPECT_NE(encode_frame(0x0100, 5, std::span(&a, 1)).crc, encode_frame(0x0100, 5, std::span(&b, 1)).crc);
}

TEST(EncodeFrame, PayloadLimit) {
  std::vector<std::uint8_t> ok(64), too_long(65);
  EXPECT_NO_THROW(encode_frame(1, 0, ok));
  EXPECT_THROW(encode_frame(1, 0, too_long), PayloadTooLong);
}

TEST(Wire, LayoutIsBitExact) {
  const std::uint8_t p[] = {0xAA, 0xBB};
  const auto f = encode_frame(0x0101, 7, p);
  const auto w = serialize_frame(f);
  ASSERT_EQ(w.size(), 7u);
  EXPECT_EQ(w[0], 0x01);
  EXPECT_EQ(w[1], 0x01);
  EXPECT_EQ(w[2], 7);
  EXPECT_EQ(w[3], 2);
  EXPECT_EQ(w[4], 0xAA);
  EXPECT_EQ(w[5], 0xBB);
  EXPECT_EQ(w[6], f.crc);
  EXPECT_EQ(parse_frame(w), f);
}

TEST(Wire, MalformedBuffers) {
  const std::uint8_t short_buf[] = {1, 2, 3};
  EXPECT_THROW(parse_frame(short_buf), MalformedFrame);
  const std::uint8_t bad_len[] = {1, 0, 0, 5, 0xAA, 0x00};
  EXPECT_THROW(parse_frame(bad_len), MalformedFrame);
  EXPECT_THROW(from_hex("abc"), MalformedFrame);
  EXPECT_THROW(from_hex("zz"), MalformedFrame);
  const std::vector<std::uint8_t> v = {0x00, 0x7f, 0xff};
  EXPECT_EQ(from_hex(to_hex(v)), v);
}

TEST(CommandPayload, RoundTrip) {
  ControlCommand c;
  c.throttle = 0.25;
  c.brake = 0.0;
  c.steer = -0.1234567;
  c.turn_signal = TurnSignal::Right;
  c.issued_at = 12.34;
  c.seq = 987654321;
  const auto p = encode_command_payload(c);
  EXPECT_EQ(p.size(), 41u);
  EXPECT_EQ(decode_command_payload(p), c);
}

TEST(CommandPayload, RejectsNonFiniteAndBadValues) {
  ControlCommand c;
  c.steer = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(decode_command_payload(encode_command_payload(c)).has_value());
  c.steer = 0.0;
  c.throttle = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(decode_command_payload(encode_command_payload(c)).has_value());
  c.throttle = 0.0;
  auto p = encode_command_payload(c);
  p.back() = 9;  // turn signal
  EXPECT_FALSE(decode_command_payload(p).has_value());
  p.pop_back();
  EXPECT_FALSE(decode_command_payload(p).has_value());
}

TEST(DecodeAndCheck, InSequenceFrameIsOk) {
  GatewayConfig cfg;
  ChannelState st;
  st.consecutive_faults = 2;
  st.last_counter = 9;
  const auto [v, next] = decode_and_check(encode_frame(0x0100, 10, {}), st, 0.05, cfg);
  EXPECT_EQ(v, Verdict::Ok);
  EXPECT_EQ(next.consecutive_faults, 0);
  EXPECT_EQ(next.last_counter, 10);
  EXPECT_EQ(next.last_rx_time, 0.05);
}

TEST(DecodeAndCheck, FirstFrameAcceptsAnyCounter) {
  GatewayConfig cfg;
  EXPECT_EQ(decode_and_check(encode_frame(0x0100, 200, {}), ChannelState{}, 0.01, cfg).first, Verdict::Ok);
}

TEST(DecodeAndCheck, CounterWraps) {
  GatewayConfig cfg;
  ChannelState st;
  st.last_counter = 255;
  EXPECT_EQ(decode_and_check(encode_frame(0x0100, 0, {}), st, 0.01, cfg).first, Verdict::Ok);
}

TEST(DecodeAndCheck, ReplayAndSkipAreCounterFaults) {
  GatewayConfig cfg;
  ChannelState st;
  st.last_counter = 41;
  for (int k = 0; k < 256; ++k) {
    const auto c = static_cast<std::uint8_t>(41 + k);
    const auto [v, next] = decode_and_check(encode_frame(0x0100, c, {}), st, 0.01, cfg);
    EXPECT_EQ(v, k == 1 ? Verdict::Ok : Verdict::CounterFault) << "gap " << k;
    EXPECT_EQ(next.consecutive_faults, k == 1 ? 0 : 1);
    // A frame with a good CRC resynchronises the counter.
    EXPECT_EQ(next.last_counter, c);
  }
}

TEST(DecodeAndCheck, LateFrameIsTimeout) {
  GatewayConfig cfg;
  ChannelState st;
  st.last_counter = 1;
  st.last_rx_time = 1.0;
  EXPECT_EQ(decode_and_check(encode_frame(0x0100, 2, {}), st, 1.0999, cfg).first, Verdict::Ok);
  EXPECT_EQ(decode_and_check(encode_frame(0x0100, 2, {}), st, 1.1, cfg).first, Verdict::Timeout);
}

TEST(DecodeAndCheck, EverySingleBitFlipIsDetected) {
  GatewayConfig cfg;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::uint8_t> payload(rng() % 65);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    const auto counter = static_cast<std::uint8_t>(rng());
    const auto f = encode_frame(static_cast<std::uint16_t>(rng()), counter, payload);
    ChannelState st;
    st.last_counter = static_cast<std::uint8_t>(counter - 1);
    ASSERT_EQ(decode_and_check(f, st, 0.0, cfg).first, Verdict::Ok);
    // Flip on the structured frame so the length field stays consistent.
    const std::size_t bits = 16 + 8 + 8 * payload.size() + 8;
    for (std::size_t bit = 0; bit < bits; ++bit) {
      E2EFrame bad = f;
      if (bit < 16) {
        bad.data_id ^= static_cast<std::uint16_t>(1u << bit);
      } else if (bit < 24) {
        bad.counter ^= static_cast<std::uint8_t>(1u << (bit - 16));
      } else if (bit < 24 + 8 * payload.size()) {
        const std::size_t b = bit - 24;
        bad.payload[b / 8] ^= static_cast<std::uint8_t>(1u << (b % 8));
      } else {
        bad.crc ^= static_cast<std::uint8_t>(1u << (bit - 24 - 8 * payload.size()));
      }
      ASSERT_NE(decode_and_check(bad, st, 0.0, cfg).first, Verdict::Ok) << "frame " << i << " bit " << bit;
    }
  }
}

TEST(E2ESender, CounterIncrementsAndWraps) {
  E2ESender s(0x0100);
  std::uint8_t expected = 0;
  for (int i = 0; i < 600; ++i) {
    EXPECT_EQ(s.send({}).counter, expected);
    ++expected;
  }
}
