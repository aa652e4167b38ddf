#include "spotfaas/executor/worker.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <thread>

#include "spotfaas/common/error.hpp"

namespace spotfaas::executor {

using namespace std::chrono_literals;
using protocol::ResultStatus;
using transport::EventKind;
using transport::EventStatus;

// How often a warm worker looks at the stop flag while waiting.
constexpr auto kStopCheck = 5ms;

Worker::Worker(WorkerConfig config, std::shared_ptr<const functions::FunctionTable> table, WorkerSlot& slot,
               CoreTable& cores, const std::atomic<std::uint32_t>& stop)
    : config_(std::move(config)), table_(std::move(table)), slot_(slot), cores_(cores), stop_(stop) {}

Worker::~Worker() {
  if (listener_) listener_->close();
}

protocol::WorkerInfo Worker::prepare() {
  domain_ = std::make_shared<transport::MemoryDomain>();
  cq_ = std::make_shared<transport::CompletionQueue>();
  request_ = PageBuffer(kRequestOffset + protocol::kInvocationHeaderSize + config_.max_payload);
  output_ = PageBuffer(std::max<std::size_t>(config_.max_payload, 1));
  request_reg_ = domain_->register_region(request_.whole());
  output_reg_ = domain_->register_region(output_.whole());
  listener_ = transport::listen(config_.listen_address, config_.transport);
  slot_.last_activity_ns.store(monotonic_ns(), std::memory_order_relaxed);
  slot_.mode.store(static_cast<std::uint32_t>(WorkerMode::warm), std::memory_order_relaxed);
  return {listener_->address(), config_.worker_id,
          request_reg_.remote(kRequestOffset, protocol::kInvocationHeaderSize + config_.max_payload)};
}

void Worker::run() {
  if (config_.pin_cpu >= 0) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(config_.pin_cpu, &set);
    // best effort; placement is an optimisation only
    (void)pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
  }
  while (!stop_.load(std::memory_order_relaxed)) {
    std::unique_ptr<transport::Endpoint> ep;
    try {
      ep = listener_->accept(domain_, cq_, 50ms);
    } catch (const Error&) {
      break;
    }
    if (!ep) continue;
    slot_.connected.store(1, std::memory_order_relaxed);
    serve(*ep);
    slot_.connected.store(0, std::memory_order_relaxed);
    ep->disconnect();
    while (cq_->try_pop()) {
    }
  }
  slot_.mode.store(static_cast<std::uint32_t>(WorkerMode::stopped), std::memory_order_relaxed);
}

void Worker::serve(transport::Endpoint& ep) {
  const bool always_hot = config_.hot_timeout_ms == protocol::kAlwaysHot;
  const bool never_hot = config_.hot_timeout_ms == 0;
  const auto hot_timeout = std::chrono::milliseconds(always_hot ? 0 : config_.hot_timeout_ms);

  Mode mode = Mode::warm;
  bool holding = false;
  if (always_hot) {
    cores_.force_acquire();
    holding = true;
    mode = Mode::hot;
  }
  auto set_mode = [&](Mode m) {
    mode = m;
    slot_.mode.store(static_cast<std::uint32_t>(m == Mode::hot ? WorkerMode::hot : WorkerMode::warm),
                     std::memory_order_relaxed);
  };
  set_mode(mode);

  std::uint64_t hot_idle = slot_.hot_idle_ns.load(std::memory_order_relaxed);
  std::uint64_t warm_wait = slot_.warm_wait_ns.load(std::memory_order_relaxed);
  auto mark = Clock::now();
  auto last_done = mark;
  transport::CompletionEvent events[16];
  bool peer_gone = false;

  while (!peer_gone && !stop_.load(std::memory_order_relaxed)) {
    std::size_t n;
    if (mode == Mode::hot) {
      n = cq_->poll(std::span(events), transport::PollMode::busy);
      auto now = Clock::now();
      hot_idle += static_cast<std::uint64_t>((now - mark).count());
      slot_.hot_idle_ns.store(hot_idle, std::memory_order_relaxed);
      mark = now;
      if (n == 0) {
        if (!always_hot && now - last_done >= hot_timeout) {
          cores_.release();
          holding = false;
          set_mode(Mode::warm);
          slot_.to_warm.fetch_add(1, std::memory_order_relaxed);
        } else {
          std::this_thread::yield();
        }
        continue;
      }
    } else {
      auto t0 = Clock::now();
      try {
        n = cq_->poll(std::span(events), transport::PollMode::blocking, kStopCheck);
      } catch (const Error&) {
        break;
      }
      warm_wait += static_cast<std::uint64_t>((Clock::now() - t0).count());
      slot_.warm_wait_ns.store(warm_wait, std::memory_order_relaxed);
    }

    for (std::size_t i = 0; i < n; ++i) {
      auto& e = events[i];
      if (e.kind == EventKind::write_received && e.status == EventStatus::ok && e.immediate) {
        if (mode == Mode::warm) {
          if (!cores_.try_acquire()) {
            auto imm = protocol::unpack_invocation_immediate(*e.immediate);
            slot_.rejections.fetch_add(1, std::memory_order_relaxed);
            if (e.byte_len >= protocol::kInvocationHeaderSize) {
              auto h = protocol::read_header(
                  std::span<const std::byte, protocol::kInvocationHeaderSize>(request_.data() + kRequestOffset,
                                                                              protocol::kInvocationHeaderSize));
              respond(ep, h, imm.invocation_id, ResultStatus::rejected, 0);
            }
            continue;
          }
          holding = true;
        }
        handle_request(ep, e, mode);
        if (never_hot) {
          cores_.release();
          holding = false;
        } else {
          set_mode(Mode::hot);
        }
        last_done = mark = Clock::now();
      } else if (e.kind == EventKind::write_done && e.status != EventStatus::ok) {
        on_write_error(ep, e);
      } else if (e.kind == EventKind::recv && e.status == EventStatus::disconnected) {
        peer_gone = true;
      }
    }
  }
  if (holding) cores_.release();
  set_mode(Mode::warm);
}

void Worker::handle_request(transport::Endpoint& ep, const transport::CompletionEvent& e, Mode mode) {
  auto imm = protocol::unpack_invocation_immediate(*e.immediate);
  if (e.byte_len < protocol::kInvocationHeaderSize ||
      e.byte_len > protocol::kInvocationHeaderSize + config_.max_payload) {
    slot_.errors.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  auto view = protocol::unpack_request(std::span<const std::byte>(request_.data() + kRequestOffset, e.byte_len));
  (mode == Mode::hot ? slot_.hot_served : slot_.warm_served).fetch_add(1, std::memory_order_relaxed);
  slot_.invocations.fetch_add(1, std::memory_order_relaxed);

  auto fn = table_->lookup(imm.function_index);
  if (fn == nullptr) {
    respond(ep, view.header, imm.invocation_id, ResultStatus::unknown_function, 0);
    return;
  }
  auto t0 = Clock::now();
  std::uint32_t len;
  try {
    len = fn(const_cast<std::byte*>(view.payload.data()), static_cast<std::uint32_t>(view.payload.size()),
             output_.data());
  } catch (...) {
    len = functions::kFunctionError;
  }
  auto t1 = Clock::now();
  slot_.compute_ns.fetch_add(static_cast<std::uint64_t>((t1 - t0).count()), std::memory_order_relaxed);
  slot_.last_activity_ns.store(monotonic_ns(), std::memory_order_relaxed);

  if (len == functions::kFunctionError) {
    slot_.errors.fetch_add(1, std::memory_order_relaxed);
    respond(ep, view.header, imm.invocation_id, ResultStatus::function_error, 0);
  } else if (len > config_.max_payload) {
    respond(ep, view.header, imm.invocation_id, ResultStatus::output_overflow, 0);
  } else {
    respond(ep, view.header, imm.invocation_id, ResultStatus::ok, len);
  }
}

void Worker::respond(transport::Endpoint& ep, const protocol::InvocationHeader& h, std::uint16_t id,
                     ResultStatus status, std::uint32_t len) {
  auto imm = protocol::pack_immediate(protocol::make_result(id, status));
  try {
    auto ticket = ep.write_with_immediate(std::span<const std::byte>(output_.data(), len),
                                          {h.result_address, h.result_key, len}, imm, false);
    if (len > 0) {
      sent_[sent_next_] = {ticket, id, h};
      sent_next_ = (sent_next_ + 1) % sent_.size();
    }
  } catch (const Error&) {
    slot_.errors.fetch_add(1, std::memory_order_relaxed);
  }
}

void Worker::on_write_error(transport::Endpoint& ep, const transport::CompletionEvent& e) {
  if (e.status != EventStatus::remote_access_error) return;
  for (auto& s : sent_) {
    if (s.ticket == e.ticket && s.ticket != 0) {
      s.ticket = 0;
      // the result did not fit the client's buffer; tell it with an empty write
      respond(ep, s.header, s.id, ResultStatus::output_overflow, 0);
      return;
    }
  }
}

}  // namespace spotfaas::executor
