#include "spotfaas/manager/server.hpp"

#include <algorithm>

#include "spotfaas/common/error.hpp"
#include "spotfaas/common/time.hpp"

namespace spotfaas::manager {

using namespace protocol;
using namespace std::chrono_literals;

ManagerServer::ManagerServer(ManagerOptions options)
    : options_(std::move(options)),
      domain_(std::make_shared<transport::MemoryDomain>()),
      cq_(std::make_shared<transport::CompletionQueue>()),
      ledger_(domain_),
      rm_(options_.config, options_.verifier) {}

ManagerServer::~ManagerServer() { stop(); }

void ManagerServer::start() {
  if (running_.exchange(true)) return;
  listener_ = transport::listen(options_.listen_address, options_.transport);
  acceptor_ = std::thread([this] { accept_loop(); });
  loop_ = std::thread([this] { serve_loop(); });
}

void ManagerServer::stop() {
  if (!running_.exchange(false)) return;
  listener_->close();
  conn_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  cq_->close();
  if (loop_.joinable()) loop_.join();
  std::lock_guard lock(conn_mu_);
  connections_.clear();
}

std::string ManagerServer::address() const { return listener_ ? listener_->address() : std::string(); }

void ManagerServer::accept_loop() {
  while (running_.load()) {
    std::unique_ptr<transport::Endpoint> ep;
    try {
      ep = listener_->accept(domain_, cq_, 100ms);
    } catch (const Error&) {
      return;
    }
    if (!ep) continue;
    auto conn = std::make_unique<Connection>();
    auto id = ep->id();
    conn->endpoint = std::move(ep);
    {
      std::lock_guard lock(conn_mu_);
      connections_.emplace(id, std::move(conn));
    }
    conn_cv_.notify_all();
  }
}

ManagerServer::Connection* ManagerServer::find_connection(transport::EndpointId id) {
  std::unique_lock lock(conn_mu_);
  // An accepted endpoint can deliver its first message before the acceptor
  // has published it.
  conn_cv_.wait_for(lock, 200ms, [&] { return connections_.contains(id) || !running_.load(); });
  auto it = connections_.find(id);
  return it == connections_.end() ? nullptr : it->second.get();
}

ManagerServer::Connection* ManagerServer::connection_of(Role role, std::uint64_t id) {
  std::lock_guard lock(conn_mu_);
  for (auto& [eid, c] : connections_) {
    if (c->role == role && c->id == id && c->endpoint->state() == transport::EndpointState::connected) {
      return c.get();
    }
  }
  return nullptr;
}

void ManagerServer::drop(transport::EndpointId id) {
  std::unique_ptr<Connection> gone;
  {
    std::lock_guard lock(conn_mu_);
    auto it = connections_.find(id);
    if (it == connections_.end()) return;
    gone = std::move(it->second);
    connections_.erase(it);
  }
}

void ManagerServer::send(Connection& conn, Message m, std::uint32_t correlation) {
  try {
    conn.endpoint->send(encode(Envelope{correlation, std::move(m)}));
    std::lock_guard lock(state_mu_);
    ++counters_.tx;
  } catch (const Error&) {
    // peer already gone; its disconnect event will clean up
  }
}

void ManagerServer::deliver(const std::vector<Notice>& notices) {
  for (const auto& n : notices) {
    if (n.target & Notice::client) {
      if (auto* c = connection_of(Role::client, n.message.client_id)) send(*c, n.message);
    }
    if (n.target & Notice::executor) {
      if (auto* c = connection_of(Role::executor, n.message.executor_id)) send(*c, n.message);
    }
  }
}

void ManagerServer::serve_loop() {
  std::vector<transport::CompletionEvent> events(32);
  while (running_.load()) {
    auto wait = std::chrono::nanoseconds(kSweepInterval);
    {
      std::lock_guard lock(state_mu_);
      if (auto next = rm_.next_deadline()) {
        wait = std::clamp<std::chrono::nanoseconds>(*next - Clock::now(), 0ns, wait);
      }
      if (rm_.pending_verifications() > 0) wait = std::min<std::chrono::nanoseconds>(wait, 5ms);
    }
    std::size_t n;
    try {
      n = cq_->poll(std::span(events), transport::PollMode::blocking, wait);
    } catch (const Error&) {
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& e = events[i];
      if (e.kind != transport::EventKind::recv) continue;
      auto* conn = find_connection(e.endpoint);
      if (conn == nullptr) continue;
      if (e.status == transport::EventStatus::disconnected) {
        drop(e.endpoint);
        continue;
      }
      Envelope env;
      try {
        env = decode(e.message);
      } catch (const Error& err) {
        send(*conn, ErrorReply{static_cast<std::uint16_t>(err.code()), err.what()});
        continue;
      }
      auto correlation = env.correlation;
      try {
        handle(*conn, std::move(env));
      } catch (const Error& err) {
        send(*conn, ErrorReply{static_cast<std::uint16_t>(err.code()), err.what()}, correlation);
      }
    }
    std::vector<Notice> notices;
    {
      std::lock_guard lock(state_mu_);
      notices = rm_.tick(Clock::now());
    }
    deliver(notices);
  }
}

void ManagerServer::handle(Connection& conn, Envelope env) {
  auto corr = env.correlation;
  auto now = Clock::now();
  bool is_executor_msg = std::holds_alternative<ExecutorRegister>(env.body) ||
                         std::holds_alternative<Heartbeat>(env.body) ||
                         std::holds_alternative<ExecutorDeregister>(env.body) ||
                         std::holds_alternative<LeaseReleased>(env.body);
  {
    std::lock_guard lock(state_mu_);
    if (std::holds_alternative<Heartbeat>(env.body)) {
      ++counters_.heartbeat_rx;
    } else if (is_executor_msg) {
      ++counters_.executor_rx;
    } else {
      ++counters_.client_rx;
    }
  }
  auto require = [&](Role r) {
    if (conn.role != r) fail(Errc::invalid_state, "message not valid for this connection");
  };

  std::visit(
      [&](auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ClientHello>) {
          std::uint64_t id;
          {
            std::lock_guard lock(state_mu_);
            id = rm_.register_client(m.name);
          }
          ledger_.open(id);
          conn.role = Role::client;
          conn.id = id;
          send(conn, ClientWelcome{id}, corr);
        } else if constexpr (std::is_same_v<T, AllocationRequest>) {
          require(Role::client);
          LeaseGrant grant;
          {
            std::lock_guard lock(state_mu_);
            grant = rm_.request_lease(conn.id, m, now, unix_millis_now());
          }
          LeaseNotice notice{grant.lease_id, conn.id, grant.cores, grant.memory_mb, grant.expiry_unix_ms, {}};
          auto slots = ledger_.slots(conn.id);
          std::copy(slots.begin(), slots.end(), notice.billing.begin());
          if (auto* ex = connection_of(Role::executor, grant.executor_id)) send(*ex, notice);
          send(conn, grant, corr);
        } else if constexpr (std::is_same_v<T, LeaseRelease>) {
          require(Role::client);
          std::uint64_t executor_id;
          {
            std::lock_guard lock(state_mu_);
            const auto& l = rm_.lease(m.lease_id);
            if (l.client_id != conn.id) fail(Errc::not_found, "lease belongs to another client");
            executor_id = l.executor_id;
            rm_.release_lease(m.lease_id);
          }
          if (auto* ex = connection_of(Role::executor, executor_id)) {
            send(*ex, LeaseTermination{m.lease_id, conn.id, executor_id, TerminationReason::released});
          }
          send(conn, Ack{}, corr);
        } else if constexpr (std::is_same_v<T, BillingQuery>) {
          auto u = ledger_.read(m.client_id);
          send(conn, BillingReport{m.client_id, u.t_a_milli, u.t_c_ms, u.t_h_ms}, corr);
        } else if constexpr (std::is_same_v<T, ExecutorRegister>) {
          std::uint64_t id;
          {
            std::lock_guard lock(state_mu_);
            id = rm_.register_executor(m.descriptor, now);
          }
          conn.role = Role::executor;
          conn.id = id;
          send(conn, ExecutorRegistered{id, static_cast<std::uint32_t>(options_.config.heartbeat.count())}, corr);
        } else if constexpr (std::is_same_v<T, Heartbeat>) {
          require(Role::executor);
          std::lock_guard lock(state_mu_);
          rm_.heartbeat(conn.id, m.free_cores, m.free_memory_mb, now);
        } else if constexpr (std::is_same_v<T, ExecutorDeregister>) {
          require(Role::executor);
          std::vector<Notice> notices;
          {
            std::lock_guard lock(state_mu_);
            notices = rm_.deregister_executor(conn.id, now);
          }
          deliver(notices);
          send(conn, Ack{}, corr);
          conn.role = Role::unknown;
        } else if constexpr (std::is_same_v<T, LeaseReleased>) {
          require(Role::executor);
          std::uint64_t client_id = 0;
          {
            std::lock_guard lock(state_mu_);
            const auto& l = rm_.lease(m.lease_id);
            if (l.executor_id != conn.id) fail(Errc::not_found, "lease runs on another executor");
            if (l.state != LeaseState::active) return;
            client_id = l.client_id;
            rm_.release_lease(m.lease_id,
                              m.reason == TerminationReason::expired ? LeaseState::expired : LeaseState::released);
          }
          if (auto* c = connection_of(Role::client, client_id)) {
            send(*c, LeaseTermination{m.lease_id, client_id, conn.id, m.reason});
          }
        } else {
          fail(Errc::unknown_type, "manager does not handle this message");
        }
      },
      env.body);
}

MessageCounters ManagerServer::counters() const {
  std::lock_guard lock(state_mu_);
  return counters_;
}

std::vector<ExecutorSnapshot> ManagerServer::executors() const {
  std::vector<ExecutorSnapshot> out;
  std::vector<std::uint64_t> ids;
  {
    std::lock_guard lock(state_mu_);
    ids = rm_.executor_ids();
  }
  for (auto id : ids) {
    if (auto s = executor(id)) out.push_back(*s);
  }
  return out;
}

std::optional<ExecutorSnapshot> ManagerServer::executor(std::uint64_t id) const {
  std::lock_guard lock(state_mu_);
  try {
    const auto& rec = rm_.executor(id);
    return ExecutorSnapshot{id,
                            rec.descriptor.address,
                            rec.status,
                            rec.capacity_cores,
                            rec.descriptor.free_cores,
                            rec.descriptor.free_memory_mb,
                            rec.dead_at,
                            rm_.active_leases(id).size()};
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<Lease> ManagerServer::lease(std::uint64_t lease_id) const {
  std::lock_guard lock(state_mu_);
  try {
    return rm_.lease(lease_id);
  } catch (const Error&) {
    return std::nullopt;
  }
}

bool ManagerServer::conserved() const {
  std::lock_guard lock(state_mu_);
  return rm_.conserved();
}

Usage ManagerServer::usage(std::uint64_t client_id) const { return ledger_.read(client_id); }

Femto ManagerServer::cost(std::uint64_t client_id) const { return cost_femto(options_.rates, usage(client_id)); }

}  // namespace spotfaas::manager
