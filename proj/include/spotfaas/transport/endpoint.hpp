#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "spotfaas/transport/completion.hpp"
#include "spotfaas/transport/memory.hpp"

namespace spotfaas::transport {

inline constexpr std::uint32_t kDefaultInlineLimit = 128;

enum class EndpointState : std::uint8_t { init, connected, closed };
enum class Backend : std::uint8_t { loopback, tcp };

struct TransportOptions {
  std::uint32_t inline_limit = kDefaultInlineLimit;
  std::chrono::milliseconds connect_timeout{3000};
  std::chrono::milliseconds atomic_timeout{5000};
};

struct MetricsSnapshot {
  std::uint64_t inlined_sends = 0;
  std::uint64_t writes = 0;
  std::uint64_t sends = 0;
  std::uint64_t atomics = 0;
  std::uint64_t bytes_tx = 0;
  std::uint64_t bytes_rx = 0;
  // Instrumentation for zero-copy checks: source pointer handed to the last
  // write and the remote address it targeted.
  std::uint64_t last_write_source = 0;
  std::uint64_t last_write_target = 0;
};

class TransportMetrics {
 public:
  void on_message(std::size_t bytes, std::uint32_t inline_limit) noexcept {
    if (bytes <= inline_limit) inlined_sends.fetch_add(1, std::memory_order_relaxed);
    bytes_tx.fetch_add(bytes, std::memory_order_relaxed);
  }
  MetricsSnapshot snapshot() const noexcept;

  std::atomic<std::uint64_t> inlined_sends{0};
  std::atomic<std::uint64_t> writes{0};
  std::atomic<std::uint64_t> sends{0};
  std::atomic<std::uint64_t> atomics{0};
  std::atomic<std::uint64_t> bytes_tx{0};
  std::atomic<std::uint64_t> bytes_rx{0};
  std::atomic<std::uint64_t> last_write_source{0};
  std::atomic<std::uint64_t> last_write_target{0};
};

EndpointId next_endpoint_id() noexcept;

// One side of a reliable, ordered connection. Single owner: one execution
// context issues operations on a given endpoint.
class Endpoint {
 public:
  Endpoint(std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq, TransportOptions options);
  virtual ~Endpoint() = default;
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  EndpointId id() const noexcept { return id_; }
  std::uint32_t inline_limit() const noexcept { return options_.inline_limit; }
  virtual MetricsSnapshot metrics() const noexcept { return metrics_.snapshot(); }
  const std::shared_ptr<MemoryDomain>& domain() const noexcept { return domain_; }
  const std::shared_ptr<CompletionQueue>& completion_queue() const noexcept { return cq_; }

  virtual EndpointState state() const noexcept = 0;
  virtual Backend backend() const noexcept = 0;

  // Places src at dst on the peer and raises write_received{byte_len, imm}
  // there. Errors are always reported on the local queue; a successful write
  // produces write_done only when signaled. Returns the completion ticket.
  virtual std::uint64_t write_with_immediate(std::span<const std::byte> src, const RemoteBufferRef& dst,
                                             std::uint32_t imm, bool signaled = true) = 0;

  // Two-sided message; raises recv at the peer with a copy of the bytes.
  virtual std::uint64_t send(std::span<const std::byte> message, bool signaled = false) = 0;

  // Atomically adds delta to the 8-byte slot at dst, returning the prior value.
  virtual std::uint64_t fetch_and_add(const RemoteBufferRef& dst, std::uint64_t delta) = 0;

  virtual void disconnect() = 0;

 protected:
  void require_connected() const;
  void require_local(std::span<const std::byte> src) const;

  EndpointId id_;
  std::shared_ptr<MemoryDomain> domain_;
  std::shared_ptr<CompletionQueue> cq_;
  TransportOptions options_;
  TransportMetrics metrics_;
  std::atomic<std::uint64_t> next_ticket_{1};
};

class Listener {
 public:
  virtual ~Listener() = default;

  virtual std::string address() const = 0;

  // Returns nullptr when no peer connects within timeout. Throws
  // queue_closed after close().
  virtual std::unique_ptr<Endpoint> accept(std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq,
                                           std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

// Addresses: "loop:NAME" for the in-process backend, "tcp:HOST:PORT" (or a
// bare "HOST:PORT") for TCP. "loop:" and port 0 pick a fresh name/port.
Backend backend_of(std::string_view address);

std::unique_ptr<Listener> listen(std::string_view address, TransportOptions options = {});

std::unique_ptr<Endpoint> connect(std::string_view address, std::shared_ptr<MemoryDomain> domain,
                                  std::shared_ptr<CompletionQueue> cq, TransportOptions options = {});

}  // namespace spotfaas::transport
