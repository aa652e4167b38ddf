#include "loopback.hpp"

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <string>
#include <unordered_map>

#include "spotfaas/common/error.hpp"

namespace spotfaas::transport::detail {
namespace {

struct Side {
  std::shared_ptr<MemoryDomain> domain;
  std::shared_ptr<CompletionQueue> cq;
  EndpointId id = 0;
  std::atomic<bool> open{false};
  std::atomic<std::uint64_t> bytes_rx{0};
};

struct Link {
  Side side[2];
};

class LoopbackEndpoint final : public Endpoint {
 public:
  LoopbackEndpoint(std::shared_ptr<Link> link, int self, std::shared_ptr<MemoryDomain> domain,
                   std::shared_ptr<CompletionQueue> cq, TransportOptions options)
      : Endpoint(std::move(domain), std::move(cq), options), link_(std::move(link)), self_(self) {
    Side& me = link_->side[self_];
    me.domain = domain_;
    me.cq = cq_;
    me.id = id_;
    me.open.store(true, std::memory_order_release);
  }

  ~LoopbackEndpoint() override { disconnect(); }

  EndpointState state() const noexcept override {
    bool up = link_->side[self_].open.load(std::memory_order_acquire) &&
              link_->side[1 - self_].open.load(std::memory_order_acquire);
    return up ? EndpointState::connected : EndpointState::closed;
  }

  Backend backend() const noexcept override { return Backend::loopback; }

  MetricsSnapshot metrics() const noexcept override {
    auto s = metrics_.snapshot();
    s.bytes_rx = link_->side[self_].bytes_rx.load(std::memory_order_relaxed);
    return s;
  }

  std::uint64_t write_with_immediate(std::span<const std::byte> src, const RemoteBufferRef& dst, std::uint32_t imm,
                                     bool signaled) override {
    require_connected();
    require_local(src);
    if (src.size() > dst.length) fail(Errc::invalid_argument, "write larger than destination reference");
    auto ticket = next_ticket_.fetch_add(1, std::memory_order_relaxed);
    auto len = static_cast<std::uint32_t>(src.size());
    metrics_.writes.fetch_add(1, std::memory_order_relaxed);
    metrics_.on_message(len, options_.inline_limit);
    metrics_.last_write_source.store(reinterpret_cast<std::uint64_t>(src.data()), std::memory_order_relaxed);
    metrics_.last_write_target.store(dst.address, std::memory_order_relaxed);

    Side& peer = link_->side[1 - self_];
    if (!peer.open.load(std::memory_order_acquire)) {
      cq_->push({EventKind::write_done, id_, 0, imm, EventStatus::disconnected, ticket, 0, {}});
      return ticket;
    }
    std::byte* target = peer.domain->resolve_remote(dst.address, dst.key, len);
    if (target == nullptr) {
      cq_->push({EventKind::write_done, id_, 0, imm, EventStatus::remote_access_error, ticket, 0, {}});
      return ticket;
    }
    if (len > 0) std::memcpy(target, src.data(), len);
    peer.bytes_rx.fetch_add(len, std::memory_order_relaxed);
    peer.cq->push({EventKind::write_received, peer.id, len, imm, EventStatus::ok, 0, 0, {}});
    if (signaled) cq_->push({EventKind::write_done, id_, len, imm, EventStatus::ok, ticket, 0, {}});
    return ticket;
  }

  std::uint64_t send(std::span<const std::byte> message, bool signaled) override {
    require_connected();
    auto ticket = next_ticket_.fetch_add(1, std::memory_order_relaxed);
    auto len = static_cast<std::uint32_t>(message.size());
    metrics_.sends.fetch_add(1, std::memory_order_relaxed);
    metrics_.on_message(len, options_.inline_limit);
    Side& peer = link_->side[1 - self_];
    if (!peer.open.load(std::memory_order_acquire)) {
      cq_->push({EventKind::send_done, id_, 0, std::nullopt, EventStatus::disconnected, ticket, 0, {}});
      return ticket;
    }
    peer.bytes_rx.fetch_add(len, std::memory_order_relaxed);
    peer.cq->push({EventKind::recv, peer.id, len, std::nullopt, EventStatus::ok, 0, 0,
                   std::vector<std::byte>(message.begin(), message.end())});
    if (signaled) cq_->push({EventKind::send_done, id_, len, std::nullopt, EventStatus::ok, ticket, 0, {}});
    return ticket;
  }

  std::uint64_t fetch_and_add(const RemoteBufferRef& dst, std::uint64_t delta) override {
    require_connected();
    if (dst.address % 8 != 0) fail(Errc::alignment, "fetch_and_add slot is not 8-byte aligned");
    Side& peer = link_->side[1 - self_];
    if (!peer.open.load(std::memory_order_acquire)) fail(Errc::not_connected, "peer disconnected");
    std::byte* slot = peer.domain->resolve_remote(dst.address, dst.key, 8);
    if (slot == nullptr) fail(Errc::remote_error, "fetch_and_add: remote access error");
    metrics_.atomics.fetch_add(1, std::memory_order_relaxed);
    auto ticket = next_ticket_.fetch_add(1, std::memory_order_relaxed);
    auto prior = std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(slot)).fetch_add(delta);
    cq_->push({EventKind::atomic_done, id_, 8, std::nullopt, EventStatus::ok, ticket, prior, {}});
    return prior;
  }

  void disconnect() override {
    Side& me = link_->side[self_];
    if (!me.open.exchange(false, std::memory_order_acq_rel)) return;
    Side& peer = link_->side[1 - self_];
    if (peer.open.load(std::memory_order_acquire)) {
      peer.cq->push({EventKind::recv, peer.id, 0, std::nullopt, EventStatus::disconnected, 0, 0, {}});
    }
  }

 private:
  std::shared_ptr<Link> link_;
  int self_;
};

struct PendingConnect {
  std::shared_ptr<Link> link;
  bool accepted = false;
};

struct ListenerState {
  std::string name;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::shared_ptr<PendingConnect>> pending;
  bool closed = false;
};

class Registry {
 public:
  static Registry& instance() {
    static Registry r;
    return r;
  }

  std::shared_ptr<ListenerState> bind(std::string_view requested) {
    std::lock_guard lock(mu_);
    std::string name(requested);
    if (name.empty()) name = "anon-" + std::to_string(++anon_);
    if (auto it = listeners_.find(name); it != listeners_.end() && !it->second.expired()) {
      fail(Errc::duplicate, "loopback address already bound: " + name);
    }
    auto state = std::make_shared<ListenerState>();
    state->name = name;
    listeners_[name] = state;
    return state;
  }

  std::shared_ptr<ListenerState> find(const std::string& name) {
    std::lock_guard lock(mu_);
    auto it = listeners_.find(name);
    return it == listeners_.end() ? nullptr : it->second.lock();
  }

  void unbind(const std::string& name) {
    std::lock_guard lock(mu_);
    listeners_.erase(name);
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::weak_ptr<ListenerState>> listeners_;
  std::uint64_t anon_ = 0;
};

class LoopbackListener final : public Listener {
 public:
  LoopbackListener(std::shared_ptr<ListenerState> state, TransportOptions options)
      : state_(std::move(state)), options_(options) {}
  ~LoopbackListener() override { close(); }

  std::string address() const override { return "loop:" + state_->name; }

  std::unique_ptr<Endpoint> accept(std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq,
                                   std::chrono::milliseconds timeout) override {
    std::unique_lock lock(state_->mu);
    state_->cv.wait_for(lock, timeout, [&] { return !state_->pending.empty() || state_->closed; });
    if (state_->closed) fail(Errc::queue_closed, "listener closed");
    if (state_->pending.empty()) return nullptr;
    auto pc = state_->pending.front();
    state_->pending.pop_front();
    auto ep = std::make_unique<LoopbackEndpoint>(pc->link, 1, std::move(domain), std::move(cq), options_);
    pc->accepted = true;
    state_->cv.notify_all();
    return ep;
  }

  void close() override {
    {
      std::lock_guard lock(state_->mu);
      if (state_->closed) return;
      state_->closed = true;
      state_->pending.clear();
    }
    state_->cv.notify_all();
    Registry::instance().unbind(state_->name);
  }

 private:
  std::shared_ptr<ListenerState> state_;
  TransportOptions options_;
};

}  // namespace

std::unique_ptr<Listener> loopback_listen(std::string_view name, TransportOptions options) {
  return std::make_unique<LoopbackListener>(Registry::instance().bind(name), options);
}

std::unique_ptr<Endpoint> loopback_connect(std::string_view name, std::shared_ptr<MemoryDomain> domain,
                                           std::shared_ptr<CompletionQueue> cq, TransportOptions options) {
  std::string key(name);
  auto state = Registry::instance().find(key);
  if (!state) fail(Errc::connect_failed, "no loopback listener at loop:" + key);

  auto link = std::make_shared<Link>();
  auto ep = std::make_unique<LoopbackEndpoint>(link, 0, std::move(domain), std::move(cq), options);
  auto pc = std::make_shared<PendingConnect>();
  pc->link = link;

  std::unique_lock lock(state->mu);
  if (state->closed) fail(Errc::connect_failed, "loopback listener closed: " + key);
  state->pending.push_back(pc);
  state->cv.notify_all();
  bool ok = state->cv.wait_for(lock, options.connect_timeout, [&] { return pc->accepted || state->closed; });
  if (!ok || !pc->accepted) {
    std::erase(state->pending, pc);
    lock.unlock();
    fail(Errc::connect_failed, "loopback connect to " + key + " was not accepted");
  }
  return ep;
}

}  // namespace spotfaas::transport::detail
