#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spotfaas/common/time.hpp"
#include "spotfaas/manager/auth.hpp"
#include "spotfaas/protocol/messages.hpp"

namespace spotfaas::manager {

using protocol::ExecutorDescriptor;
using protocol::TerminationReason;

enum class ExecutorStatus : std::uint8_t { alive, suspect, dead };
enum class LeaseState : std::uint8_t { active, expired, released, terminated_by_eviction };

const char* to_string(ExecutorStatus s) noexcept;
const char* to_string(LeaseState s) noexcept;

struct ManagerConfig {
  std::chrono::milliseconds heartbeat{500};
  std::uint32_t dead_after_missed = 3;
  double oversubscription = 1.0;
};

struct Lease {
  std::uint64_t lease_id = 0;
  std::uint64_t client_id = 0;
  std::uint64_t executor_id = 0;
  std::uint32_t cores = 0;
  std::uint32_t memory_mb = 0;
  TimePoint granted_at;
  TimePoint expiry;
  std::uint64_t expiry_unix_ms = 0;
  LeaseState state = LeaseState::active;
};

struct ExecutorRecord {
  ExecutorDescriptor descriptor;  // free_* track the manager's own accounting
  std::uint32_t capacity_cores = 0;
  std::uint32_t capacity_memory_mb = 0;
  std::uint32_t reported_free_cores = 0;
  std::uint32_t reported_free_memory_mb = 0;
  TimePoint last_heartbeat;
  ExecutorStatus status = ExecutorStatus::alive;
  std::optional<TimePoint> dead_at;
};

// A message the server must deliver: to the lease's client, its executor,
// or both.
struct Notice {
  enum Target : std::uint8_t { client = 1, executor = 2, both = 3 };
  Target target = both;
  protocol::LeaseTermination message;
};

// Registry, lease table and liveness tracking. Single writer; time is passed
// in so tests can drive it deterministically.
class ResourceManager {
 public:
  explicit ResourceManager(ManagerConfig config = {}, std::shared_ptr<TokenVerifier> verifier = allow_all());

  const ManagerConfig& config() const noexcept { return config_; }

  std::uint64_t register_executor(ExecutorDescriptor desc, TimePoint now);
  std::vector<Notice> deregister_executor(std::uint64_t executor_id, TimePoint now);

  std::uint64_t register_client(std::string name);
  bool has_client(std::uint64_t client_id) const noexcept { return clients_.contains(client_id); }

  // now_unix_ms is the wall clock at `now`, used for the expiry on the wire.
  protocol::LeaseGrant request_lease(std::uint64_t client_id, const protocol::AllocationRequest& req, TimePoint now,
                                     std::uint64_t now_unix_ms);
  void release_lease(std::uint64_t lease_id, LeaseState final_state = LeaseState::released);
  std::vector<Notice> expire_leases(TimePoint now);

  void heartbeat(std::uint64_t executor_id, std::uint32_t free_cores, std::uint32_t free_memory_mb, TimePoint now);
  std::vector<Notice> liveness_sweep(TimePoint now);

  // Revokes optimistic grants whose token check has come back negative.
  std::vector<Notice> poll_verifications();

  // Expiry, liveness and verification work in one call.
  std::vector<Notice> tick(TimePoint now);
  std::optional<TimePoint> next_deadline() const;

  const Lease& lease(std::uint64_t lease_id) const;
  const ExecutorRecord& executor(std::uint64_t executor_id) const;
  std::vector<std::uint64_t> executor_ids() const;
  std::vector<std::uint64_t> active_leases(std::uint64_t executor_id) const;
  std::size_t pending_verifications() const noexcept { return pending_.size(); }

  // Checks total = free + sum(active grants) on every executor.
  bool conserved() const;

 private:
  std::vector<Notice> terminate_executor_leases(std::uint64_t executor_id, TerminationReason reason);
  void give_back(const Lease& l);

  ManagerConfig config_;
  std::shared_ptr<TokenVerifier> verifier_;
  std::map<std::uint64_t, ExecutorRecord> executors_;
  std::map<std::uint64_t, Lease> leases_;
  std::map<std::uint64_t, std::string> clients_;
  std::map<std::uint64_t, std::shared_future<bool>> pending_;  // lease -> token verdict
  std::uint64_t cursor_ = 0;  // executor id where the next placement scan starts
  std::uint64_t next_executor_ = 1;
  std::uint64_t next_lease_ = 1;
  std::uint64_t next_client_ = 1;
};

}  // namespace spotfaas::manager
