#include "spotfaas/protocol/channel.hpp"

namespace spotfaas::protocol {

ControlChannel::ControlChannel(std::unique_ptr<transport::Endpoint> endpoint,
                               std::shared_ptr<transport::CompletionQueue> cq)
    : endpoint_(std::move(endpoint)), cq_(std::move(cq)) {}

ControlChannel::~ControlChannel() { close(); }

std::unique_ptr<ControlChannel> ControlChannel::connect(std::string_view address,
                                                        transport::TransportOptions options) {
  auto domain = std::make_shared<transport::MemoryDomain>();
  auto cq = std::make_shared<transport::CompletionQueue>();
  auto ep = transport::connect(address, domain, cq, options);
  return std::make_unique<ControlChannel>(std::move(ep), cq);
}

void throw_error_reply(const ErrorReply& e) { throw Error(static_cast<Errc>(e.code), e.message); }

void ControlChannel::post(Message m, std::uint32_t correlation) {
  auto frame = encode(Envelope{correlation, std::move(m)});
  std::lock_guard lock(send_mu_);
  endpoint_->send(frame);
}

std::uint64_t ControlChannel::fetch_and_add(const transport::RemoteBufferRef& dst, std::uint64_t delta) {
  std::lock_guard lock(send_mu_);
  return endpoint_->fetch_and_add(dst, delta);
}

void ControlChannel::pump(std::chrono::nanoseconds wait) {
  transport::CompletionEvent events[16];
  auto n = cq_->poll(std::span(events), transport::PollMode::blocking, wait);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = events[i];
    if (e.kind != transport::EventKind::recv) continue;
    if (e.status == transport::EventStatus::disconnected) {
      peer_gone_.store(true);
      continue;
    }
    Envelope env;
    try {
      env = decode(e.message);
    } catch (const Error&) {
      continue;
    }
    std::lock_guard lock(state_mu_);
    if (env.correlation == 0) {
      unsolicited_.push_back(std::move(env));
    } else {
      replies_.insert_or_assign(env.correlation, std::move(env));
    }
  }
}

Envelope ControlChannel::request(Message m, std::chrono::milliseconds timeout) {
  std::uint32_t corr;
  do {
    corr = next_correlation_.fetch_add(1);
  } while (corr == 0);
  post(std::move(m), corr);
  auto deadline = Clock::now() + timeout;
  while (true) {
    {
      std::lock_guard lock(state_mu_);
      auto it = replies_.find(corr);
      if (it != replies_.end()) {
        auto env = std::move(it->second);
        replies_.erase(it);
        if (auto* err = std::get_if<ErrorReply>(&env.body)) throw_error_reply(*err);
        return env;
      }
    }
    if (peer_gone_.load()) fail(Errc::not_connected, "control peer disconnected");
    auto now = Clock::now();
    if (now >= deadline) fail(Errc::timeout, "control request timed out");
    std::unique_lock poll(poll_mu_, std::try_to_lock);
    if (poll.owns_lock()) {
      pump(std::min<Clock::duration>(deadline - now, std::chrono::milliseconds(20)));
    } else {
      std::this_thread::yield();
    }
  }
}

std::optional<Envelope> ControlChannel::next_unsolicited(std::chrono::milliseconds wait) {
  auto take = [&]() -> std::optional<Envelope> {
    std::lock_guard lock(state_mu_);
    if (unsolicited_.empty()) return std::nullopt;
    auto env = std::move(unsolicited_.front());
    unsolicited_.pop_front();
    return env;
  };
  if (auto env = take()) return env;
  if (cq_->size() == 0 && wait.count() == 0) return std::nullopt;
  {
    std::unique_lock poll(poll_mu_, std::try_to_lock);
    if (poll.owns_lock()) pump(wait);
  }
  return take();
}

bool ControlChannel::connected() const noexcept {
  return !peer_gone_.load() && endpoint_->state() == transport::EndpointState::connected;
}

void ControlChannel::close() { endpoint_->disconnect(); }

}  // namespace spotfaas::protocol
