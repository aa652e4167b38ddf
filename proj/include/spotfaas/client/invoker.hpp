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

#include "spotfaas/client/buffers.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/common/time.hpp"
#include "spotfaas/protocol/channel.hpp"
#include "spotfaas/protocol/invocation.hpp"

namespace spotfaas::client {

enum class ModeHint : std::uint8_t { executor_default, always_hot, warm_ok, always_warm };

// Hot timeout sent with the allocation for a mode hint.
std::uint32_t hot_timeout_for(ModeHint hint) noexcept;

enum class WaitMode : std::uint8_t { busy, blocking };

struct InvocationResult {
  protocol::ResultStatus status = protocol::ResultStatus::ok;
  std::uint32_t byte_len = 0;
};

// Shared state of one submitted invocation.
class FutureState {
 public:
  enum class Phase : std::uint8_t { pending, done, failed };

  Phase phase() const noexcept { return phase_.load(std::memory_order_acquire); }
  // First completion wins; later ones are ignored.
  bool complete(InvocationResult r);
  bool fail(Errc code, std::string message);

  std::uint16_t invocation_id = 0;

 private:
  friend class InvocationFuture;
  friend class Invoker;
  std::atomic<Phase> phase_{Phase::pending};
  std::atomic<bool> claimed_{false};
  InvocationResult result_;
  Errc error_ = Errc{};
  std::string message_;
  std::mutex mu_;
  std::condition_variable cv_;
};

class Invoker;

class InvocationFuture {
 public:
  InvocationFuture() = default;
  InvocationFuture(std::shared_ptr<FutureState> state, Invoker* owner) : state_(std::move(state)), owner_(owner) {}

  bool valid() const noexcept { return state_ != nullptr; }
  bool ready() const noexcept { return state_ && state_->phase() != FutureState::Phase::pending; }
  std::uint16_t id() const noexcept { return state_->invocation_id; }

  // Waits for the result. Failures (disconnect, cancellation, expiry) are
  // thrown as Error; function-level outcomes come back as a status.
  InvocationResult get(WaitMode mode = WaitMode::busy) const;
  std::optional<InvocationResult> wait_for(std::chrono::nanoseconds timeout, WaitMode mode = WaitMode::blocking) const;

 private:
  std::shared_ptr<FutureState> state_;
  Invoker* owner_ = nullptr;
};

struct InvokerOptions {
  std::string manager_address;
  std::string name = "client";
  std::uint32_t retry_limit = 3;
  // Background completion consumer; when false, completions are consumed by
  // progress() and by get().
  bool background_progress = true;
  std::uint32_t lease_timeout_s = 300;
  std::uint32_t memory_mb_per_worker = 64;
  std::vector<std::byte> token;
  std::chrono::milliseconds submit_wait{10000};  // wait for an idle worker
  transport::TransportOptions transport;
};

struct AllocateOptions {
  std::uint32_t workers = 1;
  std::uint32_t max_payload = 1 << 20;
  ModeHint hint = ModeHint::warm_ok;
  std::uint32_t memory_mb = 0;  // per lease; 0 = memory_mb_per_worker x cores
};

// Cold-start cost of one allocate() call, summed over its leases.
struct AllocationBreakdown {
  Nanos connect{0};        // manager session plus worker connections
  Nanos lease{0};          // allocation requests at the manager
  Nanos submit_code{0};    // submission round trips minus sandbox start
  Nanos spawn_workers{0};  // sandbox start as measured by the executor
  std::vector<std::uint64_t> leases;
};

struct WorkerRef {
  std::uint64_t lease_id = 0;
  std::uint64_t executor_id = 0;
  std::string address;
  std::uint32_t worker_id = 0;
  bool alive = false;
};

struct FailoverResult {
  InvocationResult result;
  std::uint32_t attempts = 0;
};

// Client SDK: leases workers through the manager, keeps connections to them
// and submits invocations by remote write.
class Invoker {
 public:
  explicit Invoker(InvokerOptions options);
  ~Invoker();
  Invoker(const Invoker&) = delete;
  Invoker& operator=(const Invoker&) = delete;

  // Opens the manager session; allocate() does this on first use.
  void connect();
  std::uint64_t client_id() const noexcept { return client_id_; }

  // Leases `workers` cores, splitting the request in halves whenever the
  // manager cannot place it in one piece. All-or-nothing.
  AllocationBreakdown allocate(const protocol::CodeSubmission& code, const AllocateOptions& opts);

  InputBuffer input(std::size_t bytes);
  OutputBuffer output(std::size_t bytes);

  InvocationFuture submit(std::uint16_t function_index, const InputBuffer& in, std::size_t len,
                          const OutputBuffer& out);

  // Consumes completion events and returns how many it handled.
  std::size_t progress(WaitMode mode = WaitMode::busy,
                       std::chrono::nanoseconds timeout = std::chrono::nanoseconds::zero());

  // Resubmits on rejection, failure or disconnect, up to retry_limit
  // attempts; throws retries_exhausted listing every attempt.
  FailoverResult invoke_with_failover(std::uint16_t function_index, const InputBuffer& in, std::size_t len,
                                      const OutputBuffer& out, WaitMode mode = WaitMode::busy);

  // Releases every lease, disconnects workers and cancels pending futures.
  void deallocate();

  std::vector<WorkerRef> workers() const;
  std::size_t live_workers() const;
  std::size_t pending() const;
  std::uint64_t dropped_completions() const noexcept { return dropped_.load(); }
  const InvokerOptions& options() const noexcept { return options_; }
  transport::MetricsSnapshot worker_metrics(std::size_t index) const;
  protocol::ControlChannel* manager() noexcept { return manager_.get(); }

 private:
  friend class InvocationFuture;

  struct Worker {
    std::uint64_t lease_id = 0;
    std::uint64_t executor_id = 0;
    std::string address;
    std::uint32_t worker_id = 0;
    transport::RemoteBufferRef request;
    std::unique_ptr<transport::Endpoint> endpoint;
    TimePoint expiry;
    bool alive = true;
    bool busy = false;
    Errc death = Errc{};
  };
  struct Lease {
    protocol::LeaseGrant grant;
    std::unique_ptr<protocol::ControlChannel> executor;
  };
  struct Pending {
    std::shared_ptr<FutureState> state;
    std::size_t worker = 0;
  };

  // Leases and connects `cores` workers in one grant.
  void lease_once(const protocol::CodeSubmission& code, const AllocateOptions& opts, std::uint32_t cores,
                  AllocationBreakdown& out);
  void release_lease(std::uint64_t lease_id);
  void handle_event(const transport::CompletionEvent& e);
  void fail_worker_locked(std::size_t worker, Errc code, const std::string& why);
  void check_manager_notices();
  void background_loop();
  std::size_t pick_worker_locked(TimePoint now, bool& any_live);
  std::size_t progress_locked(WaitMode mode, std::chrono::nanoseconds timeout);

  InvokerOptions options_;
  std::shared_ptr<transport::MemoryDomain> domain_;
  std::shared_ptr<transport::CompletionQueue> cq_;
  std::unique_ptr<protocol::ControlChannel> manager_;
  std::uint64_t client_id_ = 0;

  mutable std::mutex mu_;  // workers_, leases_, pending_
  std::condition_variable idle_cv_;
  std::vector<Worker> workers_;
  std::map<std::uint64_t, Lease> leases_;
  std::map<std::uint16_t, Pending> pending_;
  std::map<transport::EndpointId, std::size_t> by_endpoint_;
  std::size_t rr_next_ = 0;
  std::uint16_t next_id_ = 0;

  std::mutex progress_mu_;
  TimePoint next_notice_check_;
  std::optional<protocol::CodeSubmission> last_code_;
  AllocateOptions last_opts_;

  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<bool> stopping_{false};
  std::thread background_;
};

}  // namespace spotfaas::client
