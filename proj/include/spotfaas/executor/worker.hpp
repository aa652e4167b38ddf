#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "spotfaas/common/page_buffer.hpp"
#include "spotfaas/executor/shared.hpp"
#include "spotfaas/functions/registry.hpp"
#include "spotfaas/protocol/invocation.hpp"
#include "spotfaas/protocol/messages.hpp"
#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::executor {

// Request slot offset inside the worker's page-aligned receive buffer. The
// 12-byte header then ends on a 16-byte boundary, so payload doubles are
// aligned for the function.
inline constexpr std::size_t kRequestOffset = 4;

struct WorkerConfig {
  std::uint32_t worker_id = 0;
  std::string listen_address = "loop:";
  std::uint32_t hot_timeout_ms = 100;  // protocol::kAlwaysHot disables fallback
  std::uint32_t max_payload = 1 << 20;
  int pin_cpu = -1;  // negative: leave placement to the OS
  transport::TransportOptions transport;
};

// One worker: its own listener, endpoint, queue and buffers. prepare() runs
// on the spawning thread; run() is the worker's loop and returns once stop
// is raised or the listener closes.
class Worker {
 public:
  Worker(WorkerConfig config, std::shared_ptr<const functions::FunctionTable> table, WorkerSlot& slot,
         CoreTable& cores, const std::atomic<std::uint32_t>& stop);
  ~Worker();

  protocol::WorkerInfo prepare();
  void run();

 private:
  enum class Mode { warm, hot };

  void serve(transport::Endpoint& ep);
  void handle_request(transport::Endpoint& ep, const transport::CompletionEvent& e, Mode mode);
  void respond(transport::Endpoint& ep, const protocol::InvocationHeader& h, std::uint16_t id,
               protocol::ResultStatus status, std::uint32_t len);
  void on_write_error(transport::Endpoint& ep, const transport::CompletionEvent& e);

  WorkerConfig config_;
  std::shared_ptr<const functions::FunctionTable> table_;
  WorkerSlot& slot_;
  CoreTable& cores_;
  const std::atomic<std::uint32_t>& stop_;

  std::shared_ptr<transport::MemoryDomain> domain_;
  std::shared_ptr<transport::CompletionQueue> cq_;
  std::unique_ptr<transport::Listener> listener_;
  PageBuffer request_;
  PageBuffer output_;
  transport::RegisteredBuffer request_reg_;
  transport::RegisteredBuffer output_reg_;

  // Recent unsignaled result writes, so an asynchronous access error can be
  // turned into an output_overflow notice for the right invocation.
  struct Sent {
    std::uint64_t ticket = 0;
    std::uint16_t id = 0;
    protocol::InvocationHeader header;
  };
  std::array<Sent, 64> sent_{};
  std::size_t sent_next_ = 0;
};

}  // namespace spotfaas::executor
