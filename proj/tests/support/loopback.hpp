#pragma once

// Hosts the CeCaS and gateway nodes on threads over loopback TCP, so remote stages run inside a
// single test process.

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "vilbench/harness.hpp"
#include "vilbench/nodes.hpp"
#include "vilbench/transport.hpp"

namespace testsupport {

class LoopbackNodes {
 public:
  // Binds listeners and starts the node threads needed by `stage.stage`, filling in the endpoints.
  explicit LoopbackNodes(vilbench::StageConfig& stage) {
    using vilbench::Stage;
    if (stage.stage == Stage::Internal) return;
    stage.cecas_endpoint = cecas_.endpoint();
    threads_.emplace_back([this] { guard([this] { vilbench::serve_cecas(cecas_.accept(10.0)); }); });
    if (stage.stage == Stage::Vil) {
      stage.gateway_endpoint = gateway_.endpoint();
      const std::string ep = stage.cecas_endpoint;
      threads_.emplace_back([this, ep] { guard([this, ep] { vilbench::serve_gateway(gateway_.accept(10.0), ep); }); });
    }
  }

  ~LoopbackNodes() { join(); }

  void join() {
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  // First exception raised by a node thread, if any. Call after join().
  std::exception_ptr error() const { return error_; }

 private:
  template <class F>
  void guard(F f) {
    try {
      f();
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }

  vilbench::Listener cecas_{0};
  vilbench::Listener gateway_{0};
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::exception_ptr error_;
};

// Runs a scenario in any stage with nodes on loopback threads.
inline vilbench::RunLog run_loopback(const vilbench::ScenarioConfig& scenario, vilbench::StageConfig stage,
                                     const vilbench::RunOptions& options = {}) {
  LoopbackNodes nodes(stage);
  vilbench::RunLog log = vilbench::run_scenario(scenario, stage, options);
  nodes.join();
  if (nodes.error()) std::rethrow_exception(nodes.error());
  return log;
}

}  // namespace testsupport
