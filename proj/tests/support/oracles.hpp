#pragma once

// Reference computations written independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "vilbench/gateway.hpp"

namespace oracle {

// Bit-at-a-time CRC-8, poly 0x1D, init 0xFF, xorout 0xFF, MSB first.
inline std::uint8_t crc8_bitwise(std::span<const std::uint8_t> bytes) {
  std::uint8_t crc = 0xFF;
  for (std::uint8_t b : bytes) {
    for (int bit = 7; bit >= 0; --bit) {
      const bool in = (b >> bit) & 1;
      const bool top = crc & 0x80;
      crc = static_cast<std::uint8_t>(crc << 1);
      if (in != top) crc ^= 0x1D;
    }
  }
  return crc ^ 0xFF;
}

struct P {
  double x, y;
};

// Minimum distance to a polyline by sampling every segment densely, then refining around the best
// sample with a ternary search.
inline double polyline_distance(P p, const std::vector<P>& pts, bool closed) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = closed ? pts.size() : pts.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const P a = pts[i];
    const P b = pts[(i + 1) % pts.size()];
    auto d = [&](double t) { return std::hypot(a.x + t * (b.x - a.x) - p.x, a.y + t * (b.y - a.y) - p.y); };
    double lo = 0.0, hi = 1.0;
    constexpr int kSamples = 200;
    double bt = 0.0, bd = d(0.0);
    for (int k = 1; k <= kSamples; ++k) {
      const double t = static_cast<double>(k) / kSamples;
      if (d(t) < bd) {
        bd = d(t);
        bt = t;
      }
    }
    lo = std::max(0.0, bt - 1.0 / kSamples);
    hi = std::min(1.0, bt + 1.0 / kSamples);
    for (int it = 0; it < 200; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (d(m1) < d(m2)) hi = m2; else lo = m1;
    }
    best = std::min({best, bd, d(0.5 * (lo + hi))});
  }
  return best;
}

// Allowed mode transitions written out as a table: (current, request, source) -> accepted.
// Speed matters only for the SDS handover, which needs standstill.
inline bool transition_allowed(vilbench::GatewayMode cur, vilbench::GatewayMode req, vilbench::ModeSource src,
                               bool below_handover_speed) {
  using M = vilbench::GatewayMode;
  using S = vilbench::ModeSource;
  if (src == S::Bench) {
    if (req == M::EmergencyStop) return true;
    return req == M::ManualDrive && cur == M::EmergencyStop;
  }
  if (cur == M::EmergencyStop) return false;
  if (src == S::Driver) return req == M::ManualDrive;
  return req == M::ExternalControl && cur == M::ManualDrive && below_handover_speed;
}

// Timeline of a person appearing at `onset` in front of a camera with frames at start + n/fps:
// returns the tick time at which the controller first sees the frame and brakes.
inline double brake_time_for_onset(double onset, double fps, double processing, double tick, double stream_start = 0.0) {
  // First frame captured at or after onset. Use exact integer frame indices.
  std::int64_t n = static_cast<std::int64_t>(std::ceil((onset - stream_start) * fps - 1e-9));
  if (n < 0) n = 0;
  const double capture = stream_start + static_cast<double>(n) / fps;
  const double delivery = capture + processing;
  const std::int64_t k = static_cast<std::int64_t>(std::ceil(delivery / tick - 1e-9));
  return static_cast<double>(k) * tick;
}

}  // namespace oracle
