#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spotfaas/common/page_buffer.hpp"
#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::bench {

// Transport-only echo: bounces every write straight back with no function
// dispatch. Baseline for dispatch overhead and link saturation.
class RawEchoServer {
 public:
  RawEchoServer(std::string listen_address, std::size_t max_payload, transport::TransportOptions options = {});
  ~RawEchoServer();
  RawEchoServer(const RawEchoServer&) = delete;
  RawEchoServer& operator=(const RawEchoServer&) = delete;

  std::string address() const { return listener_->address(); }
  void stop();

 private:
  void accept_loop();
  void serve(std::unique_ptr<transport::Endpoint> ep, std::shared_ptr<transport::CompletionQueue> cq);

  std::size_t max_payload_;
  transport::TransportOptions options_;
  std::shared_ptr<transport::MemoryDomain> domain_;
  std::unique_ptr<transport::Listener> listener_;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> sessions_;
};

class RawEchoClient {
 public:
  RawEchoClient(const std::string& address, std::size_t max_payload, transport::TransportOptions options = {});
  ~RawEchoClient();
  RawEchoClient(const RawEchoClient&) = delete;
  RawEchoClient& operator=(const RawEchoClient&) = delete;

  std::span<std::byte> input() const noexcept { return {in_.data(), max_payload_}; }
  std::span<const std::byte> output() const noexcept { return {out_.data(), max_payload_}; }

  // Sends len bytes; the echo lands in output().
  void post(std::size_t len);
  // True once the echo of the last post has landed. Throws on disconnect.
  bool poll();
  // post + busy wait.
  void echo(std::size_t len);
  transport::MetricsSnapshot metrics() const { return ep_->metrics(); }

 private:
  std::size_t max_payload_;
  std::shared_ptr<transport::MemoryDomain> domain_;
  std::shared_ptr<transport::CompletionQueue> cq_;
  PageBuffer in_, out_;
  transport::RegisteredBuffer in_reg_, out_reg_;
  std::unique_ptr<transport::Endpoint> ep_;
  transport::RemoteBufferRef server_;
  bool outstanding_ = false;
};

}  // namespace spotfaas::bench
