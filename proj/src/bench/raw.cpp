#include "spotfaas/bench/raw.hpp"

#include <chrono>

#include "spotfaas/common/bytes.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/transport/completion.hpp"

namespace spotfaas::bench {

using namespace std::chrono_literals;
using transport::EventKind;
using transport::EventStatus;

namespace {

std::vector<std::byte> encode_ref(const transport::RemoteBufferRef& r) {
  std::vector<std::byte> out(16);
  store_le(out.data(), r.address, 8);
  store_le(out.data() + 8, r.key, 4);
  store_le(out.data() + 12, r.length, 4);
  return out;
}

transport::RemoteBufferRef decode_ref(const std::vector<std::byte>& m) {
  if (m.size() != 16) fail(Errc::truncated_frame, "bad buffer announcement");
  return {load_le(m.data(), 8), static_cast<std::uint32_t>(load_le(m.data() + 8, 4)),
          static_cast<std::uint32_t>(load_le(m.data() + 12, 4))};
}

// Waits for the peer's buffer announcement.
transport::RemoteBufferRef await_ref(transport::CompletionQueue& cq, std::chrono::milliseconds timeout) {
  auto until = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < until) {
    // One event at a time so an early echo write behind the announcement stays queued.
    transport::CompletionEvent e;
    if (cq.poll(std::span(&e, 1), transport::PollMode::blocking, 50ms) == 0) continue;
    if (e.kind != EventKind::recv) fail(Errc::invariant_violation, "write before buffer announcement");
    if (e.status != EventStatus::ok) fail(Errc::not_connected, "peer left during setup");
    return decode_ref(e.message);
  }
  fail(Errc::timeout, "no buffer announcement from peer");
}

}  // namespace

RawEchoServer::RawEchoServer(std::string listen_address, std::size_t max_payload, transport::TransportOptions options)
    : max_payload_(max_payload),
      options_(options),
      domain_(std::make_shared<transport::MemoryDomain>()),
      listener_(transport::listen(listen_address, options)) {
  acceptor_ = std::thread([this] { accept_loop(); });
}

RawEchoServer::~RawEchoServer() { stop(); }

void RawEchoServer::stop() {
  if (stop_.exchange(true)) return;
  listener_->close();
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard lock(mu_);
  for (auto& t : sessions_) t.join();
  sessions_.clear();
}

void RawEchoServer::accept_loop() {
  while (!stop_.load()) {
    auto cq = std::make_shared<transport::CompletionQueue>();
    std::unique_ptr<transport::Endpoint> ep;
    try {
      ep = listener_->accept(domain_, cq, 50ms);
    } catch (const Error&) {
      return;
    }
    if (!ep) continue;
    std::lock_guard lock(mu_);
    sessions_.emplace_back([this, ep = std::move(ep), cq]() mutable { serve(std::move(ep), cq); });
  }
}

void RawEchoServer::serve(std::unique_ptr<transport::Endpoint> ep, std::shared_ptr<transport::CompletionQueue> cq) {
  PageBuffer buf(max_payload_);
  auto reg = domain_->register_region({buf.data(), buf.capacity()});
  try {
    ep->send(encode_ref(reg.remote(0, max_payload_)));
    auto client = await_ref(*cq, 5s);
    transport::CompletionEvent events[16];
    bool gone = false;
    while (!gone && !stop_.load(std::memory_order_relaxed)) {
      auto n = cq->poll(std::span(events), transport::PollMode::busy);
      if (n == 0) {
        std::this_thread::yield();
        continue;
      }
      for (std::size_t i = 0; i < n; ++i) {
        auto& e = events[i];
        if (e.kind == EventKind::write_received && e.status == EventStatus::ok) {
          auto dst = client;
          dst.length = e.byte_len;
          ep->write_with_immediate({buf.data(), e.byte_len}, dst, e.byte_len, false);
        } else if (e.kind == EventKind::recv && e.status == EventStatus::disconnected) {
          gone = true;
        }
      }
    }
  } catch (const Error&) {
  }
  ep->disconnect();
  domain_->deregister(reg);
}

RawEchoClient::RawEchoClient(const std::string& address, std::size_t max_payload, transport::TransportOptions options)
    : max_payload_(max_payload),
      domain_(std::make_shared<transport::MemoryDomain>()),
      cq_(std::make_shared<transport::CompletionQueue>()),
      in_(max_payload),
      out_(max_payload) {
  in_reg_ = domain_->register_region({in_.data(), in_.capacity()});
  out_reg_ = domain_->register_region({out_.data(), out_.capacity()});
  ep_ = transport::connect(address, domain_, cq_, options);
  ep_->send(encode_ref(out_reg_.remote(0, max_payload_)));
  server_ = await_ref(*cq_, 5s);
}

RawEchoClient::~RawEchoClient() {
  if (ep_) ep_->disconnect();
  domain_->deregister(in_reg_);
  domain_->deregister(out_reg_);
}

void RawEchoClient::post(std::size_t len) {
  if (len > max_payload_) fail(Errc::buffer_too_small, "payload exceeds the echo buffer");
  auto dst = server_;
  dst.length = static_cast<std::uint32_t>(len);
  outstanding_ = true;
  ep_->write_with_immediate({in_.data(), len}, dst, static_cast<std::uint32_t>(len), false);
}

bool RawEchoClient::poll() {
  if (!outstanding_) return true;
  transport::CompletionEvent events[4];
  auto n = cq_->poll(std::span(events), transport::PollMode::busy);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = events[i];
    if (e.kind == EventKind::write_received && e.status == EventStatus::ok) {
      outstanding_ = false;
    } else if (e.status != EventStatus::ok) {
      fail(Errc::disconnected, "echo peer failed");
    }
  }
  return !outstanding_;
}

void RawEchoClient::echo(std::size_t len) {
  post(len);
  while (!poll()) std::this_thread::yield();
}

}  // namespace spotfaas::bench
