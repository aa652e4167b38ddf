#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>

#include "spotfaas/manager/billing.hpp"
#include "spotfaas/manager/resource_manager.hpp"
#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::manager {

// Longest the serve loop sleeps between expiry and liveness sweeps.
inline constexpr std::chrono::milliseconds kSweepInterval{50};

struct ManagerOptions {
  std::string listen_address = "loop:";
  ManagerConfig config;
  Rates rates;
  std::shared_ptr<TokenVerifier> verifier;
  transport::TransportOptions transport;
};

struct MessageCounters {
  std::uint64_t client_rx = 0;
  std::uint64_t executor_rx = 0;     // excluding heartbeats
  std::uint64_t heartbeat_rx = 0;
  std::uint64_t tx = 0;
};

struct ExecutorSnapshot {
  std::uint64_t executor_id = 0;
  std::string address;
  ExecutorStatus status = ExecutorStatus::alive;
  std::uint32_t capacity_cores = 0;
  std::uint32_t free_cores = 0;
  std::uint32_t free_memory_mb = 0;
  std::optional<TimePoint> dead_at;
  std::size_t active_leases = 0;
};

// Network front end of the resource manager: one serialized loop owning the
// state machine, plus an acceptor thread.
class ManagerServer {
 public:
  explicit ManagerServer(ManagerOptions options);
  ~ManagerServer();
  ManagerServer(const ManagerServer&) = delete;
  ManagerServer& operator=(const ManagerServer&) = delete;

  void start();
  void stop();

  std::string address() const;
  const Rates& rates() const noexcept { return options_.rates; }

  MessageCounters counters() const;
  std::vector<ExecutorSnapshot> executors() const;
  std::optional<ExecutorSnapshot> executor(std::uint64_t id) const;
  std::optional<Lease> lease(std::uint64_t lease_id) const;
  bool conserved() const;
  Usage usage(std::uint64_t client_id) const;
  Femto cost(std::uint64_t client_id) const;

 private:
  enum class Role : std::uint8_t { unknown, client, executor };
  struct Connection {
    std::unique_ptr<transport::Endpoint> endpoint;
    Role role = Role::unknown;
    std::uint64_t id = 0;  // client or executor id
  };

  void accept_loop();
  void serve_loop();
  void handle(Connection& conn, protocol::Envelope env);
  void deliver(const std::vector<Notice>& notices);
  void send(Connection& conn, protocol::Message m, std::uint32_t correlation = 0);
  Connection* find_connection(transport::EndpointId id);
  Connection* connection_of(Role role, std::uint64_t id);
  void drop(transport::EndpointId id);

  ManagerOptions options_;
  std::shared_ptr<transport::MemoryDomain> domain_;
  std::shared_ptr<transport::CompletionQueue> cq_;
  std::unique_ptr<transport::Listener> listener_;
  BillingLedger ledger_;

  mutable std::mutex state_mu_;  // guards rm_ and counters_
  ResourceManager rm_;
  MessageCounters counters_;

  std::mutex conn_mu_;
  std::condition_variable conn_cv_;
  std::unordered_map<transport::EndpointId, std::unique_ptr<Connection>> connections_;

  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::thread loop_;
};

}  // namespace spotfaas::manager
