#include "spotfaas/transport/endpoint.hpp"

#include <string>

#include "loopback.hpp"
#include "tcp.hpp"
#include "spotfaas/common/error.hpp"

namespace spotfaas::transport {

MetricsSnapshot TransportMetrics::snapshot() const noexcept {
  MetricsSnapshot s;
  s.inlined_sends = inlined_sends.load(std::memory_order_relaxed);
  s.writes = writes.load(std::memory_order_relaxed);
  s.sends = sends.load(std::memory_order_relaxed);
  s.atomics = atomics.load(std::memory_order_relaxed);
  s.bytes_tx = bytes_tx.load(std::memory_order_relaxed);
  s.bytes_rx = bytes_rx.load(std::memory_order_relaxed);
  s.last_write_source = last_write_source.load(std::memory_order_relaxed);
  s.last_write_target = last_write_target.load(std::memory_order_relaxed);
  return s;
}

EndpointId next_endpoint_id() noexcept {
  static std::atomic<EndpointId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Endpoint::Endpoint(std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq, TransportOptions options)
    : id_(next_endpoint_id()), domain_(std::move(domain)), cq_(std::move(cq)), options_(options) {
  if (!domain_ || !cq_) fail(Errc::invalid_argument, "endpoint needs a memory domain and a completion queue");
}

void Endpoint::require_connected() const {
  if (state() != EndpointState::connected) fail(Errc::not_connected, "endpoint is not connected");
}

void Endpoint::require_local(std::span<const std::byte> src) const {
  if (!src.empty() && !domain_->contains_local(src.data(), src.size())) {
    fail(Errc::invalid_argument, "source range is not inside a registered buffer");
  }
}

Backend backend_of(std::string_view address) {
  if (address.starts_with("loop:")) return Backend::loopback;
  return Backend::tcp;
}

std::unique_ptr<Listener> listen(std::string_view address, TransportOptions options) {
  if (backend_of(address) == Backend::loopback) return detail::loopback_listen(address.substr(5), options);
  return detail::tcp_listen(address, options);
}

std::unique_ptr<Endpoint> connect(std::string_view address, std::shared_ptr<MemoryDomain> domain,
                                  std::shared_ptr<CompletionQueue> cq, TransportOptions options) {
  if (backend_of(address) == Backend::loopback) {
    return detail::loopback_connect(address.substr(5), std::move(domain), std::move(cq), options);
  }
  return detail::tcp_connect(address, std::move(domain), std::move(cq), options);
}

}  // namespace spotfaas::transport
