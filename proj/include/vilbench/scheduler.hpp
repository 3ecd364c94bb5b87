#pragma once

#include <cstdint>
#include <numeric>

namespace vilbench {

// Signal classes emitted on fixed cadences: control (pedals, steering) and comfort (turn signal).
struct DueSignals {
  bool control = false;
  bool comfort = false;

  bool empty() const { return !control && !comfort; }
  friend bool operator==(const DueSignals&, const DueSignals&) = default;
};

// Integer-microsecond cadences. The base period is the GCD of the two class periods, so both
// classes land exactly on base ticks.
class Cadence {
 public:
  Cadence() : Cadence(20'000, 50'000) {}
  Cadence(std::int64_t control_us, std::int64_t comfort_us)
      : control_us_(control_us), comfort_us_(comfort_us), base_us_(std::gcd(control_us, comfort_us)) {}

  std::int64_t base_us() const { return base_us_; }
  std::int64_t control_us() const { return control_us_; }
  std::int64_t comfort_us() const { return comfort_us_; }
  double base_period() const { return static_cast<double>(base_us_) * 1e-6; }
  std::int64_t base_ticks_per_control() const { return control_us_ / base_us_; }

  DueSignals due(std::int64_t base_tick) const {
    return {base_tick % (control_us_ / base_us_) == 0, base_tick % (comfort_us_ / base_us_) == 0};
  }

 private:
  std::int64_t control_us_;
  std::int64_t comfort_us_;
  std::int64_t base_us_;
};

// Signals due at a base tick under the default 20 ms / 50 ms cadence on a 10 ms base.
inline DueSignals tick_cadence(std::int64_t tick_index, const Cadence& cadence = Cadence()) {
  return cadence.due(tick_index);
}

}  // namespace vilbench
