#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <thread>

#include "spotfaas/common/error.hpp"
#include "spotfaas/common/time.hpp"
#include "spotfaas/protocol/messages.hpp"
#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::protocol {

// Request/reply over one control connection. Replies are matched by
// correlation id; messages with correlation 0 are unsolicited notices and
// are queued for next_unsolicited(). Safe for concurrent callers.
class ControlChannel {
 public:
  ControlChannel(std::unique_ptr<transport::Endpoint> endpoint, std::shared_ptr<transport::CompletionQueue> cq);
  ~ControlChannel();

  static std::unique_ptr<ControlChannel> connect(std::string_view address, transport::TransportOptions options = {});

  // Sends and waits for the reply. An ErrorReply is rethrown as Error with
  // its code.
  Envelope request(Message m, std::chrono::milliseconds timeout = std::chrono::seconds(10));

  template <typename T>
  T call(Message m, std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    auto reply = request(std::move(m), timeout);
    if (auto* v = std::get_if<T>(&reply.body)) return std::move(*v);
    fail(Errc::invalid_state, "unexpected reply type");
  }

  void post(Message m, std::uint32_t correlation = 0);

  // Remote atomic on the peer's registered memory; returns the prior value.
  std::uint64_t fetch_and_add(const transport::RemoteBufferRef& dst, std::uint64_t delta);

  std::optional<Envelope> next_unsolicited(std::chrono::milliseconds wait = std::chrono::milliseconds(0));

  bool connected() const noexcept;
  void close();
  const transport::Endpoint& endpoint() const noexcept { return *endpoint_; }

 private:
  // Consumes completion events; caller holds poll_mu_.
  void pump(std::chrono::nanoseconds wait);

  std::unique_ptr<transport::Endpoint> endpoint_;
  std::shared_ptr<transport::CompletionQueue> cq_;
  std::mutex send_mu_;
  std::mutex poll_mu_;
  std::mutex state_mu_;
  std::map<std::uint32_t, Envelope> replies_;
  std::deque<Envelope> unsolicited_;
  std::atomic<bool> peer_gone_{false};
  std::atomic<std::uint32_t> next_correlation_{1};
};

[[noreturn]] void throw_error_reply(const ErrorReply& e);

}  // namespace spotfaas::protocol
