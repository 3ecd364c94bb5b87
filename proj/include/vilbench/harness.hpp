#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <vector>

#include "vilbench/nodes.hpp"
#include "vilbench/runlog.hpp"
#include "vilbench/scenario.hpp"
#include "vilbench/transport.hpp"
#include "vilbench/world.hpp"

namespace vilbench {

// Observation and injection points, used by the cockpit server and by tests.
struct RunHooks {
  // Called before the control exchange; may set the driver command or add mode commands.
  std::function<void(ControlInput&)> before_control;
  // Called after each row is recorded, with the world as it was before the step.
  std::function<void(const TickRow&, const WorldState&)> on_tick;
};

struct RunOptions {
  RunHooks hooks;
  bool record_transcript = false;
  std::vector<TranscriptEntry>* transcript_out = nullptr;
  const std::atomic<bool>* stop = nullptr;  // ends the run early between ticks
};

// Runs one scenario in one stage and returns the complete log. Collisions and planning failures end
// the run with a Termination entry and a partial log. Throws ConfigError for invalid configs,
// PeerUnreachable and ProtocolViolation for transport failures in the remote stages.
RunLog run_scenario(const ScenarioConfig& scenario, const StageConfig& stage, const RunOptions& options = {});

// Earliest physical stimulus time for the person seen in a frame captured at `capture_time`.
double stimulus_onset(const ScenarioConfig& scenario, double capture_time);

}  // namespace vilbench
