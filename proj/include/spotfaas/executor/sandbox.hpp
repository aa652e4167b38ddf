#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "spotfaas/common/time.hpp"
#include "spotfaas/executor/shared.hpp"
#include "spotfaas/executor/worker.hpp"
#include "spotfaas/functions/registry.hpp"
#include "spotfaas/protocol/messages.hpp"

namespace spotfaas::executor {

enum class SandboxKind : std::uint8_t { inline_threads, process };

SandboxKind parse_sandbox_kind(std::string_view s);

struct SandboxSpec {
  std::uint64_t lease_id = 0;
  std::uint32_t workers = 1;
  std::uint32_t memory_mb = 0;
  std::uint32_t hot_timeout_ms = 100;
  std::uint32_t max_payload = 1 << 20;
  protocol::CodeSubmission code;
  std::string listen_address = "loop:";  // per-worker listeners; port 0 / empty name is auto
  int first_cpu = -1;                    // pin worker i to (first_cpu + i) mod ncpu
  transport::TransportOptions transport;
};

// Workers of one sandbox, running as threads of the calling process.
class WorkerGroup {
 public:
  WorkerGroup(const SandboxSpec& spec, std::shared_ptr<const functions::FunctionTable> table, SandboxBlock& block,
              CoreTable& cores);
  ~WorkerGroup();

  // Opens every worker's listener and starts its thread.
  std::vector<protocol::WorkerInfo> start();
  void join();

 private:
  SandboxSpec spec_;
  std::shared_ptr<const functions::FunctionTable> table_;
  SandboxBlock& block_;
  CoreTable& cores_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::thread> threads_;
};

class Sandbox {
 public:
  virtual ~Sandbox() = default;

  const std::vector<protocol::WorkerInfo>& workers() const noexcept { return workers_; }
  Nanos submit_code_time() const noexcept { return submit_code_; }
  Nanos spawn_workers_time() const noexcept { return spawn_workers_; }
  TimePoint started() const noexcept { return started_; }

  std::vector<WorkerStats> stats() const;
  // Latest activity of any worker, or the start time when idle throughout.
  TimePoint last_activity() const;

  virtual int pid() const noexcept = 0;
  virtual bool alive() = 0;
  // Raises the stop flag; workers finish the invocation in hand and exit.
  // Whatever is still running after grace is killed.
  virtual void stop(std::chrono::milliseconds grace) = 0;

 protected:
  SandboxBlock& block() const noexcept { return *block_region_.as<SandboxBlock>(); }
  void init_block(std::uint32_t workers);

  SharedRegion block_region_;
  std::vector<protocol::WorkerInfo> workers_;
  Nanos submit_code_{0};
  Nanos spawn_workers_{0};
  TimePoint started_;
};

// Threads in the executor process. Cheap to start; used for hermetic tests
// and the loopback backend.
std::unique_ptr<Sandbox> start_inline_sandbox(const SandboxSpec& spec, const SharedRegion& cores);

// A spawned `sandbox` process that maps the block and core table through
// inherited descriptors and reports its worker addresses over a pipe.
// Requires a TCP listen address.
std::unique_ptr<Sandbox> start_process_sandbox(const SandboxSpec& spec, const SharedRegion& cores,
                                               const std::string& sandbox_binary,
                                               std::chrono::milliseconds ready_timeout = std::chrono::seconds(10));

// Path of the sandbox program: $SPOTFAAS_SANDBOX, else "sandbox" next to
// the running executable.
std::string default_sandbox_binary();

// Descriptor numbers the sandbox process receives.
inline constexpr int kReadyFd = 3;
inline constexpr int kBlockFd = 4;
inline constexpr int kCoresFd = 5;
inline constexpr int kCodeFd = 6;

// Entry point of the sandbox program, driven by argv as produced by
// start_process_sandbox.
int sandbox_main(int argc, char** argv);

}  // namespace spotfaas::executor
