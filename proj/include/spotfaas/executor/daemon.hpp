#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spotfaas/executor/accounting.hpp"
#include "spotfaas/executor/sandbox.hpp"
#include "spotfaas/executor/shared.hpp"
#include "spotfaas/protocol/channel.hpp"

namespace spotfaas::executor {

struct ExecutorOptions {
  std::string manager_address;
  std::string listen_address = "loop:";  // where clients submit allocations
  std::uint32_t cores = 1;
  std::uint32_t memory_mb = 1024;
  std::uint32_t default_hot_timeout_ms = 100;
  std::chrono::seconds idle_timeout{30};
  SandboxKind sandbox = SandboxKind::inline_threads;
  std::string sandbox_binary;  // empty: default_sandbox_binary()
  std::chrono::milliseconds flush_interval{1000};
  std::chrono::milliseconds notice_wait{1000};
  std::chrono::milliseconds enforce_interval{20};
  std::chrono::milliseconds teardown_grace{5000};
  bool pin_workers = true;
  transport::TransportOptions transport;
};

struct LeaseView {
  std::uint64_t lease_id = 0;
  std::uint64_t client_id = 0;
  std::uint32_t cores = 0;
  std::uint32_t memory_mb = 0;
  bool running = false;
  int pid = -1;
  std::vector<WorkerStats> workers;
  UsageTotals observed;
  UsageTotals flushed;
};

struct ExecutorCounters {
  std::uint64_t allocations = 0;
  std::uint64_t allocation_errors = 0;
  std::uint64_t teardowns = 0;
  std::uint64_t heartbeats = 0;
  std::uint64_t flushes = 0;
  std::uint64_t flush_failures = 0;
};

// The allocator of one spot executor: registers with the manager, serves
// allocation submissions from clients, runs one sandbox per lease and
// pushes usage into the manager's billing slots.
class ExecutorDaemon {
 public:
  explicit ExecutorDaemon(ExecutorOptions options);
  ~ExecutorDaemon();
  ExecutorDaemon(const ExecutorDaemon&) = delete;
  ExecutorDaemon& operator=(const ExecutorDaemon&) = delete;

  void start();
  // Tears down every sandbox, flushes usage and deregisters.
  void stop();

  std::string address() const;
  std::uint64_t executor_id() const noexcept { return executor_id_; }
  const ExecutorOptions& options() const noexcept { return options_; }

  std::vector<std::uint64_t> leases() const;
  std::optional<LeaseView> lease(std::uint64_t lease_id) const;
  // Includes sandboxes still shutting down.
  std::size_t running_sandboxes() const;
  ExecutorCounters counters() const;
  const CoreTable& core_table() const noexcept { return *cores_.as<CoreTable>(); }
  CoreTable& core_table() noexcept { return *cores_.as<CoreTable>(); }

  // Test hooks: stop heartbeats to simulate a hung executor; force a flush.
  void pause_heartbeats(bool paused) noexcept { heartbeats_paused_.store(paused); }
  bool flush_now();

 private:
  struct LeaseEntry {
    protocol::LeaseNotice notice;
    TimePoint expiry;
    std::unique_ptr<Sandbox> sandbox;
    TimePoint sandbox_started;
    bool finished = false;  // torn down; kept until usage is flushed
    Accountant accountant;
  };
  struct PendingSubmit {
    transport::EndpointId conn = 0;
    std::uint32_t correlation = 0;
    protocol::AllocationSubmit submit;
    TimePoint deadline;
  };

  void control_loop();
  void housekeeping_loop();
  void handle_client(transport::EndpointId conn, protocol::Envelope env);
  // Returns false when the lease notice has not arrived yet.
  bool try_allocate(const PendingSubmit& p, bool final_attempt);
  void handle_manager(protocol::Envelope env);
  void enforce_limits(TimePoint now);
  void teardown(std::uint64_t lease_id, std::optional<protocol::TerminationReason> notify);
  void observe_locked(LeaseEntry& e, TimePoint now);
  void reply(transport::EndpointId conn, protocol::Message m, std::uint32_t correlation);
  void accept_loop();
  void adopt_accepted();
  void handle_client_event(transport::CompletionEvent& e);
  std::string worker_listen_address() const;

  ExecutorOptions options_;
  SharedRegion cores_;
  std::shared_ptr<transport::MemoryDomain> domain_;
  std::shared_ptr<transport::CompletionQueue> client_cq_;
  std::unique_ptr<transport::Listener> listener_;
  std::unique_ptr<protocol::ControlChannel> manager_;
  std::uint64_t executor_id_ = 0;
  std::chrono::milliseconds heartbeat_{500};

  std::map<transport::EndpointId, std::unique_ptr<transport::Endpoint>> clients_;  // control thread only
  std::vector<PendingSubmit> pending_;                                             // control thread only
  std::map<std::uint64_t, protocol::TerminationReason> ended_;                     // control thread only
  // recv events that overtook the acceptor thread's hand-off
  std::vector<std::pair<TimePoint, transport::CompletionEvent>> early_;  // control thread only

  std::mutex accept_mu_;
  std::vector<std::unique_ptr<transport::Endpoint>> accepted_;

  mutable std::mutex mu_;
  std::map<std::uint64_t, LeaseEntry> leases_;
  ExecutorCounters counters_;
  std::uint32_t next_cpu_ = 0;

  std::atomic<bool> running_{false};
  std::atomic<bool> heartbeats_paused_{false};
  std::atomic<std::size_t> stopping_{0};
  std::mutex wake_mu_;
  std::condition_variable wake_;
  std::thread acceptor_;
  std::thread control_;
  std::thread housekeeping_;
};

}  // namespace spotfaas::executor
