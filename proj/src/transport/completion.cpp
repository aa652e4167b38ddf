#include "spotfaas/transport/completion.hpp"

#include "spotfaas/common/error.hpp"

namespace spotfaas::transport {

void CompletionQueue::push(CompletionEvent event) {
  {
    std::lock_guard lock(mu_);
    if (closed_.load(std::memory_order_relaxed)) return;
    events_.push_back(std::move(event));
    count_.fetch_add(1, std::memory_order_release);
  }
  // waiters_ only changes under mu_, so a consumer that saw an empty queue
  // is already counted here.
  if (waiters_.load(std::memory_order_acquire) > 0) cv_.notify_one();
}

std::size_t CompletionQueue::drain_locked(std::span<CompletionEvent> out) {
  std::size_t n = 0;
  while (n < out.size() && !events_.empty()) {
    out[n++] = std::move(events_.front());
    events_.pop_front();
  }
  count_.fetch_sub(n, std::memory_order_release);
  return n;
}

std::size_t CompletionQueue::poll(std::span<CompletionEvent> out, PollMode mode, std::chrono::nanoseconds timeout) {
  if (out.empty()) return 0;
  if (mode == PollMode::busy) {
    if (count_.load(std::memory_order_acquire) == 0) {
      if (closed_.load(std::memory_order_acquire)) fail(Errc::queue_closed, "completion queue closed");
      return 0;
    }
    std::lock_guard lock(mu_);
    return drain_locked(out);
  }
  std::unique_lock lock(mu_);
  if (events_.empty()) {
    if (closed_.load(std::memory_order_relaxed)) fail(Errc::queue_closed, "completion queue closed");
    waiters_.fetch_add(1, std::memory_order_acq_rel);
    cv_.wait_for(lock, timeout, [&] { return !events_.empty() || closed_.load(std::memory_order_relaxed); });
    waiters_.fetch_sub(1, std::memory_order_acq_rel);
    if (events_.empty() && closed_.load(std::memory_order_relaxed)) {
      fail(Errc::queue_closed, "completion queue closed");
    }
  }
  return drain_locked(out);
}

std::vector<CompletionEvent> CompletionQueue::poll(PollMode mode, std::chrono::nanoseconds timeout) {
  std::vector<CompletionEvent> out(64);
  out.resize(poll(std::span(out), mode, timeout));
  return out;
}

std::optional<CompletionEvent> CompletionQueue::try_pop() {
  if (count_.load(std::memory_order_acquire) == 0) return std::nullopt;
  std::lock_guard lock(mu_);
  if (events_.empty()) return std::nullopt;
  CompletionEvent e = std::move(events_.front());
  events_.pop_front();
  count_.fetch_sub(1, std::memory_order_release);
  return e;
}

void CompletionQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_.store(true, std::memory_order_release);
  }
  cv_.notify_all();
}

}  // namespace spotfaas::transport
