#include "spotfaas/executor/daemon.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "spotfaas/common/error.hpp"

namespace spotfaas::executor {

using namespace protocol;
using namespace std::chrono_literals;

ExecutorDaemon::ExecutorDaemon(ExecutorOptions options) : options_(std::move(options)) {
  if (options_.cores == 0 || options_.memory_mb == 0) fail(Errc::invalid_argument, "executor needs cores and memory");
  if (options_.cores > kMaxWorkers) fail(Errc::invalid_argument, "too many cores for one executor");
  if (options_.sandbox_binary.empty()) options_.sandbox_binary = default_sandbox_binary();
  cores_ = SharedRegion(sizeof(CoreTable));
  auto* table = new (cores_.data()) CoreTable{};
  table->capacity.store(static_cast<std::int32_t>(options_.cores));
}

ExecutorDaemon::~ExecutorDaemon() { stop(); }

void ExecutorDaemon::start() {
  if (running_.load()) return;
  domain_ = std::make_shared<transport::MemoryDomain>();
  client_cq_ = std::make_shared<transport::CompletionQueue>();
  listener_ = transport::listen(options_.listen_address, options_.transport);
  manager_ = ControlChannel::connect(options_.manager_address, options_.transport);
  ExecutorDescriptor d{0, listener_->address(), options_.cores, options_.memory_mb, options_.cores, options_.memory_mb};
  auto reg = manager_->call<ExecutorRegistered>(ExecutorRegister{d});
  executor_id_ = reg.executor_id;
  heartbeat_ = std::chrono::milliseconds(std::max<std::uint32_t>(reg.heartbeat_ms, 1));
  running_.store(true);
  acceptor_ = std::thread([this] { accept_loop(); });
  control_ = std::thread([this] { control_loop(); });
  housekeeping_ = std::thread([this] { housekeeping_loop(); });
}

void ExecutorDaemon::stop() {
  if (!running_.exchange(false)) return;
  wake_.notify_all();
  // the control thread tears down sandboxes on its way out, so spawned
  // processes never outlive the thread that created them
  if (control_.joinable()) control_.join();
  if (housekeeping_.joinable()) housekeeping_.join();
  if (acceptor_.joinable()) acceptor_.join();
  flush_now();
  try {
    manager_->request(ExecutorDeregister{executor_id_}, 2s);
  } catch (const Error& e) {
    spdlog::warn("executor {}: deregister failed: {}", executor_id_, e.what());
  }
  manager_->close();
  listener_->close();
  clients_.clear();
  accepted_.clear();
}

std::string ExecutorDaemon::address() const { return listener_ ? listener_->address() : std::string(); }

std::string ExecutorDaemon::worker_listen_address() const {
  auto a = listener_->address();
  if (transport::backend_of(a) == transport::Backend::loopback) return "loop:";
  auto colon = a.rfind(':');
  auto host = a.substr(0, colon);
  if (!host.starts_with("tcp:")) host = "tcp:" + host;
  return host + ":0";
}

void ExecutorDaemon::accept_loop() {
  while (running_.load()) {
    std::unique_ptr<transport::Endpoint> ep;
    try {
      ep = listener_->accept(domain_, client_cq_, 20ms);
    } catch (const Error&) {
      return;
    }
    if (!ep) continue;
    {
      std::lock_guard lock(accept_mu_);
      accepted_.push_back(std::move(ep));
    }
    // wakes the control loop, which ignores events that are not recv
    transport::CompletionEvent wake;
    wake.kind = transport::EventKind::send_done;
    client_cq_->push(std::move(wake));
  }
}

void ExecutorDaemon::adopt_accepted() {
  std::lock_guard lock(accept_mu_);
  for (auto& ep : accepted_) {
    auto id = ep->id();
    clients_.emplace(id, std::move(ep));
  }
  accepted_.clear();
}

void ExecutorDaemon::handle_client_event(transport::CompletionEvent& e) {
  if (e.status == transport::EventStatus::disconnected) {
    clients_.erase(e.endpoint);
    std::erase_if(pending_, [&](const PendingSubmit& p) { return p.conn == e.endpoint; });
    return;
  }
  Envelope env;
  try {
    env = decode(e.message);
  } catch (const Error& err) {
    reply(e.endpoint, ErrorReply{static_cast<std::uint16_t>(err.code()), err.what()}, 0);
    return;
  }
  handle_client(e.endpoint, std::move(env));
}

void ExecutorDaemon::control_loop() {
  transport::CompletionEvent events[16];
  auto next_enforce = Clock::now();
  bool manager_lost = false;
  while (running_.load()) {
    auto n = client_cq_->poll(std::span(events), transport::PollMode::blocking, 2ms);
    adopt_accepted();
    if (!early_.empty()) {
      auto now = Clock::now();
      std::vector<std::pair<TimePoint, transport::CompletionEvent>> still;
      for (auto& [at, e] : early_) {
        if (clients_.contains(e.endpoint))
          handle_client_event(e);
        else if (now - at < 1s)
          still.emplace_back(at, std::move(e));
      }
      early_ = std::move(still);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& e = events[i];
      if (e.kind != transport::EventKind::recv) continue;
      if (!clients_.contains(e.endpoint)) {
        early_.emplace_back(Clock::now(), std::move(e));
        continue;
      }
      handle_client_event(e);
    }

    try {
      while (auto env = manager_->next_unsolicited(0ms)) handle_manager(std::move(*env));
    } catch (const Error&) {
    }
    if (!manager_->connected() && !manager_lost) {
      manager_lost = true;
      spdlog::warn("executor {}: lost the manager connection", executor_id_);
    }

    auto now = Clock::now();
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (try_allocate(*it, now >= it->deadline)) {
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
    if (now >= next_enforce) {
      enforce_limits(now);
      next_enforce = now + options_.enforce_interval;
    }
  }

  std::vector<std::uint64_t> ids;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, e] : leases_) {
      if (!e.finished) ids.push_back(id);
    }
  }
  for (auto id : ids) teardown(id, std::nullopt);
}

void ExecutorDaemon::housekeeping_loop() {
  auto next_hb = Clock::now();
  auto next_flush = Clock::now() + options_.flush_interval;
  while (running_.load()) {
    {
      std::unique_lock lock(wake_mu_);
      wake_.wait_until(lock, std::min(next_hb, next_flush), [&] { return !running_.load(); });
    }
    if (!running_.load()) break;
    auto now = Clock::now();
    if (now >= next_hb) {
      next_hb = std::max(next_hb + heartbeat_, now);
      if (!heartbeats_paused_.load()) {
        std::uint32_t used_cores = 0, used_mem = 0;
        {
          std::lock_guard lock(mu_);
          for (auto& [id, e] : leases_) {
            if (e.finished) continue;
            used_cores += e.notice.cores;
            used_mem += e.notice.memory_mb;
          }
          ++counters_.heartbeats;
        }
        try {
          manager_->post(Heartbeat{executor_id_, options_.cores - std::min(used_cores, options_.cores),
                                   options_.memory_mb - std::min(used_mem, options_.memory_mb)});
        } catch (const Error&) {
        }
      }
    }
    if (now >= next_flush) {
      flush_now();
      next_flush = now + options_.flush_interval;
    }
  }
}

void ExecutorDaemon::observe_locked(LeaseEntry& e, TimePoint now) {
  if (!e.sandbox) return;
  Nanos compute{0}, hot{0};
  for (const auto& w : e.sandbox->stats()) {
    compute += w.compute;
    hot += w.hot_idle;
  }
  e.accountant.observe(usage_totals(e.notice.memory_mb, now - e.sandbox_started, compute, hot));
}

bool ExecutorDaemon::flush_now() {
  struct Job {
    std::uint64_t lease_id;
    std::array<RemoteBufferRef, 3> slots;
    UsageTotals delta;
    UsageTotals delivered;
  };
  std::vector<Job> jobs;
  {
    std::lock_guard lock(mu_);
    auto now = Clock::now();
    for (auto& [id, e] : leases_) {
      observe_locked(e, now);
      auto p = e.accountant.pending();
      if (p != UsageTotals{}) jobs.push_back({id, e.notice.billing, p, {}});
    }
  }
  bool ok = true;
  for (auto& j : jobs) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (j.delta.v[s] == 0) continue;
      try {
        manager_->fetch_and_add(j.slots[s], j.delta.v[s]);
        j.delivered.v[s] = j.delta.v[s];
      } catch (const Error&) {
        ok = false;
      }
    }
  }
  std::lock_guard lock(mu_);
  ++counters_.flushes;
  if (!ok) ++counters_.flush_failures;
  for (auto& j : jobs) {
    auto it = leases_.find(j.lease_id);
    if (it == leases_.end()) continue;
    for (std::size_t s = 0; s < 3; ++s) it->second.accountant.commit(s, j.delivered.v[s]);
  }
  std::erase_if(leases_, [](const auto& kv) { return kv.second.finished && kv.second.accountant.idle(); });
  return ok;
}

void ExecutorDaemon::reply(transport::EndpointId conn, Message m, std::uint32_t correlation) {
  auto it = clients_.find(conn);
  if (it == clients_.end()) return;
  try {
    it->second->send(encode(Envelope{correlation, std::move(m)}));
  } catch (const Error&) {
  }
}

void ExecutorDaemon::handle_client(transport::EndpointId conn, Envelope env) {
  if (auto* s = std::get_if<AllocationSubmit>(&env.body)) {
    PendingSubmit p{conn, env.correlation, std::move(*s), Clock::now() + options_.notice_wait};
    if (!try_allocate(p, false)) pending_.push_back(std::move(p));
    return;
  }
  reply(conn, ErrorReply{static_cast<std::uint16_t>(Errc::unknown_type), "executor only accepts allocation submits"},
        env.correlation);
}

bool ExecutorDaemon::try_allocate(const PendingSubmit& p, bool final_attempt) {
  const auto& s = p.submit;
  auto refuse = [&](Errc code, const std::string& msg) {
    {
      std::lock_guard lock(mu_);
      ++counters_.allocation_errors;
    }
    reply(p.conn, ErrorReply{static_cast<std::uint16_t>(code), msg}, p.correlation);
    return true;
  };
  auto lease_name = "lease " + std::to_string(s.lease_id);

  SandboxSpec spec;
  {
    std::lock_guard lock(mu_);
    auto it = leases_.find(s.lease_id);
    if (it == leases_.end()) {
      if (auto ended = ended_.find(s.lease_id); ended != ended_.end()) {
        return refuse(Errc::lease_expired, lease_name + " has already ended");
      }
      if (!final_attempt) return false;
      return refuse(Errc::not_found, lease_name + " is unknown to this executor");
    }
    auto& e = it->second;
    if (e.notice.client_id != s.client_id) return refuse(Errc::auth_denied, lease_name + " belongs to another client");
    if (e.sandbox || e.finished) return refuse(Errc::duplicate, lease_name + " already has a sandbox");
    if (e.expiry <= Clock::now()) return refuse(Errc::lease_expired, lease_name + " has expired");
    if (s.max_payload_bytes == 0 || s.max_payload_bytes > (256u << 20)) {
      return refuse(Errc::invalid_argument, "max payload must be in (0, 256 MiB]");
    }
    spec.lease_id = s.lease_id;
    spec.workers = e.notice.cores;
    spec.memory_mb = e.notice.memory_mb;
    if (options_.pin_workers) {
      spec.first_cpu = static_cast<int>(next_cpu_);
      next_cpu_ += e.notice.cores;
    }
  }
  spec.hot_timeout_ms = s.hot_timeout_ms == kExecutorDefaultHot ? options_.default_hot_timeout_ms : s.hot_timeout_ms;
  spec.max_payload = s.max_payload_bytes;
  spec.code = s.code;
  spec.listen_address = worker_listen_address();
  spec.transport = options_.transport;

  std::unique_ptr<Sandbox> sandbox;
  try {
    sandbox = options_.sandbox == SandboxKind::process
                  ? start_process_sandbox(spec, cores_, options_.sandbox_binary)
                  : start_inline_sandbox(spec, cores_);
  } catch (const Error& err) {
    spdlog::warn("executor {}: allocation for {} failed: {}", executor_id_, lease_name, err.what());
    {
      std::lock_guard lock(mu_);
      leases_.erase(s.lease_id);
    }
    ended_[s.lease_id] = TerminationReason::released;
    try {
      manager_->post(LeaseReleased{s.lease_id, TerminationReason::released});
    } catch (const Error&) {
    }
    return refuse(err.code(), err.what());
  }

  AllocationReply r;
  r.lease_id = s.lease_id;
  r.workers = sandbox->workers();
  r.submit_code_ns = static_cast<std::uint64_t>(sandbox->submit_code_time().count());
  r.spawn_workers_ns = static_cast<std::uint64_t>(sandbox->spawn_workers_time().count());
  {
    std::lock_guard lock(mu_);
    auto& e = leases_.at(s.lease_id);
    e.sandbox_started = sandbox->started();
    e.sandbox = std::move(sandbox);
    ++counters_.allocations;
  }
  reply(p.conn, std::move(r), p.correlation);
  return true;
}

void ExecutorDaemon::handle_manager(Envelope env) {
  if (auto* n = std::get_if<LeaseNotice>(&env.body)) {
    std::lock_guard lock(mu_);
    auto& e = leases_[n->lease_id];
    e.notice = *n;
    e.expiry = steady_from_unix_millis(n->expiry_unix_ms);
  } else if (auto* t = std::get_if<LeaseTermination>(&env.body)) {
    teardown(t->lease_id, std::nullopt);
    ended_[t->lease_id] = t->reason;
  } else if (auto* err = std::get_if<ErrorReply>(&env.body)) {
    spdlog::warn("executor {}: manager reported error {}: {}", executor_id_, err->code, err->message);
  }
}

void ExecutorDaemon::enforce_limits(TimePoint now) {
  std::vector<std::pair<std::uint64_t, std::optional<TerminationReason>>> doomed;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, e] : leases_) {
      if (e.finished) continue;
      if (e.expiry <= now) {
        doomed.emplace_back(id, e.sandbox ? std::optional(TerminationReason::expired) : std::nullopt);
      } else if (e.sandbox && !e.sandbox->alive()) {
        doomed.emplace_back(id, TerminationReason::evicted);
      } else if (e.sandbox && now - e.sandbox->last_activity() >= options_.idle_timeout) {
        doomed.emplace_back(id, TerminationReason::idle);
      }
    }
  }
  for (auto& [id, reason] : doomed) {
    teardown(id, reason);
    ended_[id] = reason.value_or(TerminationReason::expired);
  }
}

void ExecutorDaemon::teardown(std::uint64_t lease_id, std::optional<TerminationReason> notify) {
  std::unique_ptr<Sandbox> sandbox;
  std::uint32_t memory_mb = 0;
  TimePoint started;
  {
    std::lock_guard lock(mu_);
    auto it = leases_.find(lease_id);
    if (it == leases_.end() || it->second.finished) return;
    auto& e = it->second;
    observe_locked(e, Clock::now());
    e.finished = true;
    sandbox = std::move(e.sandbox);
    if (sandbox) stopping_.fetch_add(1);
    memory_mb = e.notice.memory_mb;
    started = e.sandbox_started;
    ++counters_.teardowns;
  }
  if (sandbox) {
    sandbox->stop(options_.teardown_grace);
    auto end = Clock::now();
    Nanos compute{0}, hot{0};
    for (const auto& w : sandbox->stats()) {
      compute += w.compute;
      hot += w.hot_idle;
    }
    sandbox.reset();
    std::lock_guard lock(mu_);
    stopping_.fetch_sub(1);
    if (auto it = leases_.find(lease_id); it != leases_.end()) {
      it->second.accountant.observe(usage_totals(memory_mb, end - started, compute, hot));
    }
  }
  {
    std::lock_guard lock(mu_);
    if (auto it = leases_.find(lease_id); it != leases_.end() && it->second.accountant.idle()) leases_.erase(it);
  }
  if (notify) {
    try {
      manager_->post(LeaseReleased{lease_id, *notify});
    } catch (const Error&) {
    }
  }
}

std::vector<std::uint64_t> ExecutorDaemon::leases() const {
  std::lock_guard lock(mu_);
  std::vector<std::uint64_t> out;
  for (const auto& [id, e] : leases_) {
    if (!e.finished) out.push_back(id);
  }
  return out;
}

std::optional<LeaseView> ExecutorDaemon::lease(std::uint64_t lease_id) const {
  std::lock_guard lock(mu_);
  auto it = leases_.find(lease_id);
  if (it == leases_.end()) return std::nullopt;
  const auto& e = it->second;
  LeaseView v;
  v.lease_id = lease_id;
  v.client_id = e.notice.client_id;
  v.cores = e.notice.cores;
  v.memory_mb = e.notice.memory_mb;
  v.running = e.sandbox != nullptr;
  if (e.sandbox) {
    v.pid = e.sandbox->pid();
    v.workers = e.sandbox->stats();
  }
  v.observed = e.accountant.observed();
  v.flushed = e.accountant.flushed();
  return v;
}

std::size_t ExecutorDaemon::running_sandboxes() const {
  std::lock_guard lock(mu_);
  return stopping_.load() + static_cast<std::size_t>(std::count_if(
                                leases_.begin(), leases_.end(), [](const auto& kv) { return kv.second.sandbox != nullptr; }));
}

ExecutorCounters ExecutorDaemon::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

}  // namespace spotfaas::executor
