#include "spotfaas/manager/resource_manager.hpp"

#include <cmath>

#include "spotfaas/common/error.hpp"

namespace spotfaas::manager {

const char* to_string(ExecutorStatus s) noexcept {
  switch (s) {
    case ExecutorStatus::alive: return "alive";
    case ExecutorStatus::suspect: return "suspect";
    case ExecutorStatus::dead: return "dead";
  }
  return "?";
}

const char* to_string(LeaseState s) noexcept {
  switch (s) {
    case LeaseState::active: return "active";
    case LeaseState::expired: return "expired";
    case LeaseState::released: return "released";
    case LeaseState::terminated_by_eviction: return "terminated_by_eviction";
  }
  return "?";
}

ResourceManager::ResourceManager(ManagerConfig config, std::shared_ptr<TokenVerifier> verifier)
    : config_(config), verifier_(std::move(verifier)) {
  if (config_.heartbeat.count() <= 0 || config_.dead_after_missed == 0) {
    fail(Errc::invalid_argument, "heartbeat interval and miss threshold must be positive");
  }
  if (!(config_.oversubscription >= 1.0)) fail(Errc::invalid_argument, "oversubscription factor must be >= 1");
  if (!verifier_) verifier_ = allow_all();
}

std::uint64_t ResourceManager::register_executor(ExecutorDescriptor desc, TimePoint now) {
  if (desc.total_cores == 0 || desc.total_memory_mb == 0 || desc.address.empty()) {
    fail(Errc::invariant_violation, "executor descriptor needs an address and positive capacity");
  }
  for (const auto& [id, rec] : executors_) {
    if (rec.status != ExecutorStatus::dead && rec.descriptor.address == desc.address) {
      fail(Errc::duplicate, "executor already registered at " + desc.address);
    }
  }
  ExecutorRecord rec;
  auto id = next_executor_++;
  rec.capacity_cores = static_cast<std::uint32_t>(std::floor(desc.total_cores * config_.oversubscription));
  rec.capacity_memory_mb = static_cast<std::uint32_t>(std::floor(desc.total_memory_mb * config_.oversubscription));
  rec.reported_free_cores = desc.free_cores;
  rec.reported_free_memory_mb = desc.free_memory_mb;
  rec.descriptor = std::move(desc);
  rec.descriptor.executor_id = id;
  rec.descriptor.free_cores = rec.capacity_cores;
  rec.descriptor.free_memory_mb = rec.capacity_memory_mb;
  rec.last_heartbeat = now;
  executors_.emplace(id, std::move(rec));
  return id;
}

std::vector<Notice> ResourceManager::deregister_executor(std::uint64_t executor_id, TimePoint) {
  if (!executors_.contains(executor_id)) fail(Errc::not_found, "unknown executor " + std::to_string(executor_id));
  auto notices = terminate_executor_leases(executor_id, TerminationReason::evicted);
  for (auto& n : notices) n.target = Notice::client;
  executors_.erase(executor_id);
  return notices;
}

std::uint64_t ResourceManager::register_client(std::string name) {
  auto id = next_client_++;
  clients_.emplace(id, std::move(name));
  return id;
}

protocol::LeaseGrant ResourceManager::request_lease(std::uint64_t client_id, const protocol::AllocationRequest& req,
                                                    TimePoint now, std::uint64_t now_unix_ms) {
  if (!has_client(client_id)) fail(Errc::not_found, "unknown client " + std::to_string(client_id));
  protocol::validate(req);
  auto verdict = verifier_->verify(client_id, req.token);
  bool decided = verdict.wait_for(std::chrono::seconds(0)) == std::future_status::ready;
  if (decided && !verdict.get()) fail(Errc::auth_denied, "allocation token rejected");

  ExecutorRecord* chosen = nullptr;
  auto scan = [&](auto first, auto last) {
    for (auto it = first; it != last && chosen == nullptr; ++it) {
      auto& rec = it->second;
      if (rec.status == ExecutorStatus::dead) continue;
      if (rec.descriptor.free_cores >= req.cores && rec.descriptor.free_memory_mb >= req.memory_mb) chosen = &rec;
    }
  };
  auto start = executors_.lower_bound(cursor_);
  scan(start, executors_.end());
  scan(executors_.begin(), start);
  if (chosen == nullptr) {
    fail(Errc::insufficient_resources, "no executor has " + std::to_string(req.cores) + " cores and " +
                                           std::to_string(req.memory_mb) + " MiB free");
  }

  Lease l;
  l.lease_id = next_lease_++;
  l.client_id = client_id;
  l.executor_id = chosen->descriptor.executor_id;
  l.cores = req.cores;
  l.memory_mb = req.memory_mb;
  l.granted_at = now;
  l.expiry = now + std::chrono::seconds(req.timeout_s);
  l.expiry_unix_ms = now_unix_ms + std::uint64_t(req.timeout_s) * 1000;
  chosen->descriptor.free_cores -= req.cores;
  chosen->descriptor.free_memory_mb -= req.memory_mb;
  cursor_ = l.executor_id + 1;
  if (!decided) pending_.emplace(l.lease_id, verdict);

  protocol::LeaseGrant g;
  g.lease_id = l.lease_id;
  g.executor_id = l.executor_id;
  g.expiry_unix_ms = l.expiry_unix_ms;
  g.cores = l.cores;
  g.memory_mb = l.memory_mb;
  for (std::uint32_t i = 0; i < l.cores; ++i) g.endpoints.push_back({chosen->descriptor.address, i});
  leases_.emplace(l.lease_id, l);
  return g;
}

void ResourceManager::give_back(const Lease& l) {
  auto it = executors_.find(l.executor_id);
  if (it == executors_.end()) return;
  it->second.descriptor.free_cores += l.cores;
  it->second.descriptor.free_memory_mb += l.memory_mb;
}

void ResourceManager::release_lease(std::uint64_t lease_id, LeaseState final_state) {
  auto it = leases_.find(lease_id);
  if (it == leases_.end()) fail(Errc::not_found, "unknown lease " + std::to_string(lease_id));
  if (it->second.state != LeaseState::active) {
    fail(Errc::invalid_state, "lease " + std::to_string(lease_id) + " is already " + to_string(it->second.state));
  }
  if (final_state == LeaseState::active) fail(Errc::invalid_argument, "release needs a terminal state");
  it->second.state = final_state;
  give_back(it->second);
  pending_.erase(lease_id);
}

std::vector<Notice> ResourceManager::expire_leases(TimePoint now) {
  std::vector<Notice> out;
  for (auto& [id, l] : leases_) {
    if (l.state != LeaseState::active || l.expiry > now) continue;
    l.state = LeaseState::expired;
    give_back(l);
    pending_.erase(id);
    out.push_back({Notice::both, {id, l.client_id, l.executor_id, TerminationReason::expired}});
  }
  return out;
}

void ResourceManager::heartbeat(std::uint64_t executor_id, std::uint32_t free_cores, std::uint32_t free_memory_mb,
                                TimePoint now) {
  auto it = executors_.find(executor_id);
  if (it == executors_.end()) fail(Errc::not_found, "heartbeat from unknown executor " + std::to_string(executor_id));
  auto& rec = it->second;
  if (rec.status == ExecutorStatus::dead) fail(Errc::invalid_state, "executor was declared dead; register again");
  rec.last_heartbeat = now;
  rec.status = ExecutorStatus::alive;
  rec.reported_free_cores = free_cores;
  rec.reported_free_memory_mb = free_memory_mb;
}

std::vector<Notice> ResourceManager::terminate_executor_leases(std::uint64_t executor_id, TerminationReason reason) {
  std::vector<Notice> out;
  for (auto& [id, l] : leases_) {
    if (l.executor_id != executor_id || l.state != LeaseState::active) continue;
    l.state = LeaseState::terminated_by_eviction;
    give_back(l);
    pending_.erase(id);
    out.push_back({Notice::both, {id, l.client_id, l.executor_id, reason}});
  }
  return out;
}

std::vector<Notice> ResourceManager::liveness_sweep(TimePoint now) {
  std::vector<Notice> out;
  for (auto& [id, rec] : executors_) {
    if (rec.status == ExecutorStatus::dead) continue;
    auto missed = static_cast<std::uint64_t>((now - rec.last_heartbeat) / config_.heartbeat);
    if (missed >= config_.dead_after_missed) {
      rec.status = ExecutorStatus::dead;
      rec.dead_at = now;
      auto notices = terminate_executor_leases(id, TerminationReason::evicted);
      out.insert(out.end(), notices.begin(), notices.end());
    } else {
      rec.status = missed >= 1 ? ExecutorStatus::suspect : ExecutorStatus::alive;
    }
  }
  return out;
}

std::vector<Notice> ResourceManager::poll_verifications() {
  std::vector<Notice> out;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->second.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
      ++it;
      continue;
    }
    bool ok = it->second.get();
    auto lease_id = it->first;
    it = pending_.erase(it);
    if (ok) continue;
    auto& l = leases_.at(lease_id);
    if (l.state != LeaseState::active) continue;
    l.state = LeaseState::terminated_by_eviction;
    give_back(l);
    out.push_back({Notice::both, {lease_id, l.client_id, l.executor_id, TerminationReason::revoked}});
  }
  return out;
}

std::vector<Notice> ResourceManager::tick(TimePoint now) {
  auto out = poll_verifications();
  auto expired = expire_leases(now);
  out.insert(out.end(), expired.begin(), expired.end());
  auto dead = liveness_sweep(now);
  out.insert(out.end(), dead.begin(), dead.end());
  return out;
}

std::optional<TimePoint> ResourceManager::next_deadline() const {
  std::optional<TimePoint> next;
  auto consider = [&](TimePoint t) {
    if (!next || t < *next) next = t;
  };
  for (const auto& [id, l] : leases_) {
    if (l.state == LeaseState::active) consider(l.expiry);
  }
  for (const auto& [id, rec] : executors_) {
    if (rec.status == ExecutorStatus::dead) continue;
    consider(rec.last_heartbeat + config_.heartbeat * config_.dead_after_missed);
    if (rec.status == ExecutorStatus::alive) consider(rec.last_heartbeat + config_.heartbeat);
  }
  return next;
}

const Lease& ResourceManager::lease(std::uint64_t lease_id) const {
  auto it = leases_.find(lease_id);
  if (it == leases_.end()) fail(Errc::not_found, "unknown lease " + std::to_string(lease_id));
  return it->second;
}

const ExecutorRecord& ResourceManager::executor(std::uint64_t executor_id) const {
  auto it = executors_.find(executor_id);
  if (it == executors_.end()) fail(Errc::not_found, "unknown executor " + std::to_string(executor_id));
  return it->second;
}

std::vector<std::uint64_t> ResourceManager::executor_ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, rec] : executors_) out.push_back(id);
  return out;
}

std::vector<std::uint64_t> ResourceManager::active_leases(std::uint64_t executor_id) const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, l] : leases_) {
    if (l.executor_id == executor_id && l.state == LeaseState::active) out.push_back(id);
  }
  return out;
}

bool ResourceManager::conserved() const {
  for (const auto& [id, rec] : executors_) {
    std::uint64_t cores = rec.descriptor.free_cores, mem = rec.descriptor.free_memory_mb;
    for (const auto& [lid, l] : leases_) {
      if (l.executor_id == id && l.state == LeaseState::active) {
        cores += l.cores;
        mem += l.memory_mb;
      }
    }
    if (cores != rec.capacity_cores || mem != rec.capacity_memory_mb) return false;
  }
  return true;
}

}  // namespace spotfaas::manager
