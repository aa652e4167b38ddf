#include "spotfaas/client/invoker.hpp"

#include <algorithm>

namespace spotfaas::client {

using namespace protocol;
using namespace std::chrono_literals;
using transport::EventKind;
using transport::EventStatus;

std::uint32_t hot_timeout_for(ModeHint hint) noexcept {
  switch (hint) {
    case ModeHint::always_hot: return kAlwaysHot;
    case ModeHint::warm_ok: return 100;
    case ModeHint::always_warm: return 0;
    case ModeHint::executor_default: break;
  }
  return kExecutorDefaultHot;
}

bool FutureState::complete(InvocationResult r) {
  if (claimed_.exchange(true)) return false;
  {
    std::lock_guard lock(mu_);
    result_ = r;
    phase_.store(Phase::done, std::memory_order_release);
  }
  cv_.notify_all();
  return true;
}

bool FutureState::fail(Errc code, std::string message) {
  if (claimed_.exchange(true)) return false;
  {
    std::lock_guard lock(mu_);
    error_ = code;
    message_ = std::move(message);
    phase_.store(Phase::failed, std::memory_order_release);
  }
  cv_.notify_all();
  return true;
}

std::optional<InvocationResult> InvocationFuture::wait_for(std::chrono::nanoseconds timeout, WaitMode mode) const {
  if (!state_) fail(Errc::invalid_state, "future has no state");
  auto deadline = Clock::now() + timeout;
  auto& s = *state_;
  while (s.phase() == FutureState::Phase::pending) {
    auto now = Clock::now();
    if (now >= deadline) return std::nullopt;
    if (owner_->options_.background_progress) {
      if (mode == WaitMode::busy) {
        std::this_thread::yield();
      } else {
        std::unique_lock lock(s.mu_);
        s.cv_.wait_until(lock, deadline, [&] { return s.phase() != FutureState::Phase::pending; });
      }
    } else {
      owner_->progress(mode, mode == WaitMode::busy ? 0ns : std::min<std::chrono::nanoseconds>(deadline - now, 10ms));
      if (mode == WaitMode::busy && s.phase() == FutureState::Phase::pending) std::this_thread::yield();
    }
  }
  if (s.phase() == FutureState::Phase::failed) throw Error(s.error_, s.message_);
  return s.result_;
}

InvocationResult InvocationFuture::get(WaitMode mode) const {
  while (true) {
    if (auto r = wait_for(std::chrono::hours(1), mode)) return *r;
  }
}

Invoker::Invoker(InvokerOptions options)
    : options_(std::move(options)),
      domain_(std::make_shared<transport::MemoryDomain>()),
      cq_(std::make_shared<transport::CompletionQueue>()) {
  if (options_.retry_limit == 0) fail(Errc::invalid_argument, "retry limit must be at least 1");
  if (options_.background_progress) background_ = std::thread([this] { background_loop(); });
}

Invoker::~Invoker() {
  try {
    deallocate();
  } catch (const Error&) {
  }
  stopping_.store(true);
  if (background_.joinable()) background_.join();
  if (manager_) manager_->close();
}

void Invoker::connect() {
  if (manager_) return;
  manager_ = ControlChannel::connect(options_.manager_address, options_.transport);
  client_id_ = manager_->call<ClientWelcome>(ClientHello{options_.name}).client_id;
}

InputBuffer Invoker::input(std::size_t bytes) { return InputBuffer(domain_, bytes); }
OutputBuffer Invoker::output(std::size_t bytes) { return OutputBuffer(domain_, bytes); }

AllocationBreakdown Invoker::allocate(const CodeSubmission& code, const AllocateOptions& opts) {
  if (opts.workers == 0) fail(Errc::invalid_argument, "allocate needs at least one worker");
  AllocationBreakdown bd;
  auto t0 = Clock::now();
  connect();
  bd.connect += Clock::now() - t0;
  std::uint32_t remaining = opts.workers;
  std::uint32_t chunk = opts.workers;
  try {
    while (remaining > 0) {
      auto size = std::min(chunk, remaining);
      try {
        lease_once(code, opts, size, bd);
        remaining -= size;
      } catch (const Error& e) {
        if (e.code() != Errc::insufficient_resources || size == 1) throw;
        chunk = size / 2;
      }
    }
  } catch (...) {
    for (auto id : bd.leases) release_lease(id);
    throw;
  }
  last_code_ = code;
  last_opts_ = opts;
  return bd;
}

void Invoker::lease_once(const CodeSubmission& code, const AllocateOptions& opts, std::uint32_t cores,
                         AllocationBreakdown& bd) {
  auto memory = opts.memory_mb != 0 ? opts.memory_mb : options_.memory_mb_per_worker * cores;
  auto t0 = Clock::now();
  auto grant = manager_->call<LeaseGrant>(AllocationRequest{cores, memory, options_.lease_timeout_s, options_.token});
  auto t1 = Clock::now();
  bd.lease += t1 - t0;
  try {
    if (grant.endpoints.empty()) fail(Errc::no_endpoints, "grant without endpoints");
    auto exec = ControlChannel::connect(grant.endpoints.front().address, options_.transport);
    auto reply = exec->call<AllocationReply>(
        AllocationSubmit{grant.lease_id, client_id_, hot_timeout_for(opts.hint), opts.max_payload, code}, 30s);
    auto t2 = Clock::now();
    auto spawn = Nanos(reply.spawn_workers_ns);
    bd.spawn_workers += spawn;
    bd.submit_code += std::max(Nanos(0), (t2 - t1) - spawn);

    std::vector<Worker> fresh;
    for (const auto& w : reply.workers) {
      Worker wk;
      wk.lease_id = grant.lease_id;
      wk.executor_id = grant.executor_id;
      wk.address = w.address;
      wk.worker_id = w.worker_id;
      wk.request = w.request;
      wk.expiry = steady_from_unix_millis(grant.expiry_unix_ms);
      wk.endpoint = transport::connect(w.address, domain_, cq_, options_.transport);
      fresh.push_back(std::move(wk));
    }
    bd.connect += Clock::now() - t2;

    std::lock_guard lock(mu_);
    for (auto& w : fresh) {
      by_endpoint_[w.endpoint->id()] = workers_.size();
      workers_.push_back(std::move(w));
    }
    leases_[grant.lease_id] = Lease{grant, std::move(exec)};
  } catch (...) {
    try {
      manager_->request(LeaseRelease{grant.lease_id}, 2s);
    } catch (const Error&) {
    }
    throw;
  }
  bd.leases.push_back(grant.lease_id);
}

void Invoker::release_lease(std::uint64_t lease_id) {
  std::unique_ptr<ControlChannel> exec;
  std::vector<std::unique_ptr<transport::Endpoint>> endpoints;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      auto& w = workers_[i];
      if (w.lease_id != lease_id || !w.endpoint) continue;
      fail_worker_locked(i, Errc::cancelled, "lease released");
      by_endpoint_.erase(w.endpoint->id());
      endpoints.push_back(std::move(w.endpoint));
    }
    if (auto it = leases_.find(lease_id); it != leases_.end()) {
      exec = std::move(it->second.executor);
      leases_.erase(it);
    }
  }
  for (auto& ep : endpoints) ep->disconnect();
  if (exec) exec->close();
  if (manager_) {
    try {
      manager_->request(LeaseRelease{lease_id}, 2s);
    } catch (const Error&) {
      // already ended at the manager
    }
  }
}

void Invoker::deallocate() {
  std::vector<std::uint64_t> ids;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, l] : leases_) ids.push_back(id);
    for (std::size_t i = 0; i < workers_.size(); ++i) fail_worker_locked(i, Errc::cancelled, "deallocated");
  }
  for (auto id : ids) release_lease(id);
  std::lock_guard lock(mu_);
  workers_.clear();
  by_endpoint_.clear();
  rr_next_ = 0;
}

void Invoker::fail_worker_locked(std::size_t index, Errc code, const std::string& why) {
  auto& w = workers_[index];
  if (w.alive) {
    w.alive = false;
    w.death = code;
  }
  w.busy = false;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->second.worker == index) {
      it->second.state->fail(code, why);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  idle_cv_.notify_all();
}

std::size_t Invoker::pick_worker_locked(TimePoint now, bool& any_live) {
  any_live = false;
  auto n = workers_.size();
  for (std::size_t k = 0; k < n; ++k) {
    auto i = (rr_next_ + k) % n;
    auto& w = workers_[i];
    if (w.alive && w.expiry <= now) fail_worker_locked(i, Errc::lease_expired, "lease expired");
    if (!w.alive) continue;
    any_live = true;
    if (!w.busy) {
      rr_next_ = i + 1;
      return i;
    }
  }
  return n;
}

InvocationFuture Invoker::submit(std::uint16_t function_index, const InputBuffer& in, std::size_t len,
                                 const OutputBuffer& out) {
  auto message = in.message(len);
  auto deadline = Clock::now() + options_.submit_wait;
  std::unique_lock lock(mu_);
  std::size_t index;
  while (true) {
    bool any_live;
    index = pick_worker_locked(Clock::now(), any_live);
    if (index < workers_.size()) break;
    if (!any_live) {
      bool expired = std::any_of(workers_.begin(), workers_.end(),
                                 [](const Worker& w) { return w.death == Errc::lease_expired; });
      if (expired) fail(Errc::lease_expired, "every lease has expired; allocate again");
      fail(Errc::no_endpoints, "no live workers");
    }
    if (Clock::now() >= deadline) fail(Errc::timeout, "no idle worker");
    if (options_.background_progress) {
      idle_cv_.wait_for(lock, 5ms);
    } else {
      lock.unlock();
      progress(WaitMode::busy);
      std::this_thread::yield();
      lock.lock();
    }
  }
  auto& w = workers_[index];
  if (message.size() > w.request.length) {
    fail(Errc::buffer_too_small, "payload exceeds the worker's request buffer");
  }
  if (pending_.size() >= 0xFFFF) fail(Errc::insufficient_resources, "too many pending invocations");
  do {
    ++next_id_;
  } while (pending_.contains(next_id_));
  auto state = std::make_shared<FutureState>();
  state->invocation_id = next_id_;
  pending_[next_id_] = Pending{state, index};
  w.busy = true;
  auto* ep = w.endpoint.get();
  auto dst = w.request;
  dst.length = static_cast<std::uint32_t>(message.size());
  lock.unlock();

  write_header(in.header_slot(), InvocationHeader{out.remote().address, out.remote().key});
  try {
    ep->write_with_immediate(message, dst, pack_immediate(InvocationImmediate{state->invocation_id, function_index}),
                             false);
  } catch (const Error& e) {
    std::lock_guard relock(mu_);
    if (pending_.erase(state->invocation_id) > 0) {
      workers_[index].busy = false;
      state->fail(e.code(), e.what());
    }
    if (e.code() == Errc::not_connected) fail_worker_locked(index, Errc::disconnected, e.what());
  }
  return InvocationFuture(state, this);
}

void Invoker::handle_event(const transport::CompletionEvent& e) {
  std::lock_guard lock(mu_);
  auto wit = by_endpoint_.find(e.endpoint);
  if (e.kind == EventKind::write_received && e.status == EventStatus::ok && e.immediate) {
    auto r = unpack_result_immediate(*e.immediate);
    auto it = pending_.find(r.invocation_id);
    if (it == pending_.end() || wit == by_endpoint_.end() || it->second.worker != wit->second) {
      dropped_.fetch_add(1);
      return;
    }
    it->second.state->complete({r.result(), e.byte_len});
    workers_[it->second.worker].busy = false;
    pending_.erase(it);
    idle_cv_.notify_all();
    return;
  }
  if (wit == by_endpoint_.end()) return;
  auto index = wit->second;
  if (e.kind == EventKind::recv && e.status == EventStatus::disconnected) {
    fail_worker_locked(index, Errc::disconnected, "worker disconnected");
  } else if (e.kind == EventKind::write_done && e.status != EventStatus::ok) {
    if (e.status == EventStatus::disconnected) {
      fail_worker_locked(index, Errc::disconnected, "worker disconnected");
      return;
    }
    for (auto it = pending_.begin(); it != pending_.end(); ++it) {
      if (it->second.worker != index) continue;
      it->second.state->fail(Errc::remote_error, "request write was refused by the worker");
      pending_.erase(it);
      workers_[index].busy = false;
      idle_cv_.notify_all();
      break;
    }
  }
}

std::size_t Invoker::progress_locked(WaitMode mode, std::chrono::nanoseconds timeout) {
  transport::CompletionEvent events[32];
  std::size_t n;
  try {
    n = cq_->poll(std::span(events),
                  mode == WaitMode::busy ? transport::PollMode::busy : transport::PollMode::blocking, timeout);
  } catch (const Error&) {
    return 0;
  }
  for (std::size_t i = 0; i < n; ++i) handle_event(events[i]);
  auto now = Clock::now();
  if (now >= next_notice_check_) {
    next_notice_check_ = now + 10ms;
    check_manager_notices();
  }
  return n;
}

std::size_t Invoker::progress(WaitMode mode, std::chrono::nanoseconds timeout) {
  if (options_.background_progress) {
    // the background consumer owns the queue
    if (mode == WaitMode::blocking) std::this_thread::sleep_for(std::min<std::chrono::nanoseconds>(timeout, 1ms));
    return 0;
  }
  std::unique_lock lock(progress_mu_, std::try_to_lock);
  if (!lock.owns_lock()) return 0;
  return progress_locked(mode, timeout);
}

void Invoker::check_manager_notices() {
  if (!manager_) return;
  try {
    while (auto env = manager_->next_unsolicited(0ms)) {
      auto* t = std::get_if<LeaseTermination>(&env->body);
      if (t == nullptr) continue;
      auto code = t->reason == TerminationReason::revoked   ? Errc::auth_denied
                  : t->reason == TerminationReason::evicted ? Errc::disconnected
                                                            : Errc::lease_expired;
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < workers_.size(); ++i) {
        if (workers_[i].lease_id == t->lease_id) fail_worker_locked(i, code, "lease terminated by the manager");
      }
    }
  } catch (const Error&) {
  }
}

void Invoker::background_loop() {
  std::lock_guard lock(progress_mu_);
  while (!stopping_.load()) progress_locked(WaitMode::blocking, 20ms);
}

FailoverResult Invoker::invoke_with_failover(std::uint16_t function_index, const InputBuffer& in, std::size_t len,
                                             const OutputBuffer& out, WaitMode mode) {
  std::string log;
  std::uint32_t attempts = 0;
  while (attempts < options_.retry_limit) {
    ++attempts;
    try {
      if (live_workers() == 0 && last_code_) allocate(*last_code_, last_opts_);
      auto r = submit(function_index, in, len, out).get(mode);
      if (r.status == ResultStatus::ok) return {r, attempts};
      log += "attempt " + std::to_string(attempts) + ": " + to_string(r.status) + "; ";
    } catch (const Error& e) {
      log += "attempt " + std::to_string(attempts) + ": " + e.what() + "; ";
    }
  }
  fail(Errc::retries_exhausted, "gave up after " + std::to_string(attempts) + " attempts: " + log);
}

std::vector<WorkerRef> Invoker::workers() const {
  std::lock_guard lock(mu_);
  std::vector<WorkerRef> out;
  for (const auto& w : workers_) out.push_back({w.lease_id, w.executor_id, w.address, w.worker_id, w.alive});
  return out;
}

std::size_t Invoker::live_workers() const {
  std::lock_guard lock(mu_);
  auto now = Clock::now();
  return static_cast<std::size_t>(
      std::count_if(workers_.begin(), workers_.end(), [&](const Worker& w) { return w.alive && w.expiry > now; }));
}

std::size_t Invoker::pending() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

transport::MetricsSnapshot Invoker::worker_metrics(std::size_t index) const {
  std::lock_guard lock(mu_);
  if (index >= workers_.size() || !workers_[index].endpoint) fail(Errc::not_found, "no such worker");
  return workers_[index].endpoint->metrics();
}

}  // namespace spotfaas::client
