#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace spotfaas::transport {

using EndpointId = std::uint64_t;

enum class EventKind : std::uint8_t { send_done, write_done, recv, write_received, atomic_done };
enum class EventStatus : std::uint8_t { ok, remote_access_error, disconnected };

struct CompletionEvent {
  EventKind kind = EventKind::recv;
  EndpointId endpoint = 0;
  std::uint32_t byte_len = 0;
  std::optional<std::uint32_t> immediate;
  EventStatus status = EventStatus::ok;
  std::uint64_t ticket = 0;   // sender-side ticket for *_done events
  std::uint64_t value = 0;    // previous slot value for atomic_done
  std::vector<std::byte> message;  // recv payload
};

enum class PollMode { busy, blocking };

// Multi-producer, single-consumer event queue. Busy polls never block and
// never take the lock when the queue is empty.
class CompletionQueue {
 public:
  void push(CompletionEvent event);

  // Fills `out` with up to out.size() events. Blocking mode parks until at
  // least one event arrives or `timeout` elapses. Throws queue_closed once
  // the queue is closed and drained.
  std::size_t poll(std::span<CompletionEvent> out, PollMode mode,
                   std::chrono::nanoseconds timeout = std::chrono::nanoseconds::zero());

  std::vector<CompletionEvent> poll(PollMode mode, std::chrono::nanoseconds timeout = std::chrono::nanoseconds::zero());

  std::optional<CompletionEvent> try_pop();

  void close();
  bool closed() const noexcept { return closed_.load(std::memory_order_acquire); }
  std::size_t size() const noexcept { return count_.load(std::memory_order_acquire); }

 private:
  std::size_t drain_locked(std::span<CompletionEvent> out);

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<CompletionEvent> events_;
  std::atomic<std::size_t> count_{0};
  std::atomic<int> waiters_{0};
  std::atomic<bool> closed_{false};
};

}  // namespace spotfaas::transport
