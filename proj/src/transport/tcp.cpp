#include "tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <deque>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "spotfaas/common/error.hpp"
#include "spotfaas/transport/tcp_frame.hpp"

namespace spotfaas::transport::detail {
namespace {

using tcp::FrameHeader;
using tcp::FrameType;

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

HostPort parse_address(std::string_view address) {
  if (address.starts_with("tcp:")) address.remove_prefix(4);
  auto colon = address.rfind(':');
  if (colon == std::string_view::npos) fail(Errc::invalid_argument, "tcp address needs HOST:PORT");
  HostPort hp;
  hp.host = std::string(address.substr(0, colon));
  if (hp.host.empty()) hp.host = "127.0.0.1";
  auto port_text = std::string(address.substr(colon + 1));
  try {
    auto port = std::stoul(port_text);
    if (port > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    fail(Errc::invalid_argument, "bad tcp port: " + port_text);
  }
  return hp;
}

sockaddr_in resolve(const HostPort& hp) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(hp.port);
  if (inet_pton(AF_INET, hp.host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(hp.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    fail(Errc::connect_failed, "cannot resolve host " + hp.host);
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return sa;
}

void tune_socket(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

std::string errno_text() { return std::strerror(errno); }

struct AtomicWaiter {
  std::promise<std::pair<EventStatus, std::uint64_t>> result;
};

class TcpEndpoint final : public Endpoint {
 public:
  TcpEndpoint(int fd, std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq,
              TransportOptions options)
      : Endpoint(std::move(domain), std::move(cq), options), fd_(fd) {
    tune_socket(fd_);
    state_.store(EndpointState::connected, std::memory_order_release);
    reader_ = std::thread([this] { reader_loop(); });
  }

  ~TcpEndpoint() override {
    disconnect();
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
  }

  EndpointState state() const noexcept override { return state_.load(std::memory_order_acquire); }
  Backend backend() const noexcept override { return Backend::tcp; }

  MetricsSnapshot metrics() const noexcept override {
    auto s = metrics_.snapshot();
    s.bytes_rx = bytes_rx_.load(std::memory_order_relaxed);
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

    FrameHeader h{FrameType::write_imm, signaled ? tcp::kFlagSignaled : std::uint8_t{0}, dst.address, dst.key, imm,
                  len};
    bool sent;
    {
      std::lock_guard lock(send_mu_);
      if (signaled) {
        std::lock_guard p(pending_mu_);
        signaled_tickets_.emplace_back(ticket, len);
      }
      sent = flush_control_locked(true) && send_frame_locked(h, src);
    }
    after_send();
    if (!sent) fail_unsent_ticket(signaled ? ticket : 0, imm, EventKind::write_done);
    return ticket;
  }

  std::uint64_t send(std::span<const std::byte> message, bool signaled) override {
    require_connected();
    auto ticket = next_ticket_.fetch_add(1, std::memory_order_relaxed);
    auto len = static_cast<std::uint32_t>(message.size());
    metrics_.sends.fetch_add(1, std::memory_order_relaxed);
    metrics_.on_message(len, options_.inline_limit);
    FrameHeader h{FrameType::send, 0, 0, 0, 0, len};
    bool sent;
    {
      std::lock_guard lock(send_mu_);
      sent = flush_control_locked(true) && send_frame_locked(h, message);
    }
    after_send();
    if (!sent) {
      cq_->push({EventKind::send_done, id_, 0, std::nullopt, EventStatus::disconnected, ticket, 0, {}});
    } else if (signaled) {
      cq_->push({EventKind::send_done, id_, len, std::nullopt, EventStatus::ok, ticket, 0, {}});
    }
    return ticket;
  }

  std::uint64_t fetch_and_add(const RemoteBufferRef& dst, std::uint64_t delta) override {
    require_connected();
    if (dst.address % 8 != 0) fail(Errc::alignment, "fetch_and_add slot is not 8-byte aligned");
    metrics_.atomics.fetch_add(1, std::memory_order_relaxed);
    auto waiter = std::make_shared<AtomicWaiter>();
    auto result = waiter->result.get_future();
    std::array<std::byte, 8> payload{};
    store_le(payload.data(), delta, 8);
    FrameHeader h{FrameType::atomic_faa, 0, dst.address, dst.key, 0, 8};
    bool sent;
    {
      std::lock_guard lock(send_mu_);
      {
        std::lock_guard p(pending_mu_);
        if (reader_done_) fail(Errc::not_connected, "peer disconnected");
        atomics_.push_back(waiter);
      }
      sent = flush_control_locked(true) && send_frame_locked(h, payload);
    }
    after_send();
    if (!sent) fail(Errc::not_connected, "peer disconnected");
    if (result.wait_for(options_.atomic_timeout) != std::future_status::ready) {
      fail(Errc::timeout, "fetch_and_add reply timed out");
    }
    auto [status, prior] = result.get();
    if (status == EventStatus::disconnected) fail(Errc::not_connected, "peer disconnected during fetch_and_add");
    if (status != EventStatus::ok) fail(Errc::remote_error, "fetch_and_add: remote access error");
    return prior;
  }

  void disconnect() override {
    auto expected = EndpointState::connected;
    if (!state_.compare_exchange_strong(expected, EndpointState::closed)) return;
    closing_.store(true, std::memory_order_release);
    {
      std::unique_lock lock(send_mu_, std::try_to_lock);
      if (lock.owns_lock()) {
        FrameHeader h{FrameType::disconnect, 0, 0, 0, 0, 0};
        send_frame_locked(h, {});
      }
    }
    ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  bool send_frame_locked(const FrameHeader& h, std::span<const std::byte> payload) {
    auto header = tcp::encode(h);
    iovec iov[2];
    iov[0] = {header.data(), header.size()};
    iov[1] = {const_cast<std::byte*>(payload.data()), payload.size()};
    return send_iov(iov, payload.empty() ? 1 : 2, 0) == SendResult::done;
  }

  enum class SendResult { done, would_block, failed };

  // Sends every byte of iov (blocking) or as much as possible (MSG_DONTWAIT).
  // On would_block, iov is advanced past what was written.
  SendResult send_iov(iovec* iov, int count, int flags, std::size_t* written = nullptr) {
    msghdr msg{};
    msg.msg_iov = iov;
    msg.msg_iovlen = static_cast<std::size_t>(count);
    while (msg.msg_iovlen > 0) {
      ssize_t n = ::sendmsg(fd_, &msg, flags | MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) return SendResult::would_block;
        return SendResult::failed;
      }
      if (written != nullptr) *written += static_cast<std::size_t>(n);
      auto left = static_cast<std::size_t>(n);
      while (msg.msg_iovlen > 0 && left >= msg.msg_iov->iov_len) {
        left -= msg.msg_iov->iov_len;
        ++msg.msg_iov;
        --msg.msg_iovlen;
      }
      if (msg.msg_iovlen > 0) {
        msg.msg_iov->iov_base = static_cast<char*>(msg.msg_iov->iov_base) + left;
        msg.msg_iov->iov_len -= left;
      }
    }
    return SendResult::done;
  }

  // Control frames (acks, atomic replies) are produced by the reader thread,
  // which must never block on a full socket; they are staged here and pushed
  // out by whichever thread holds send_mu_.
  void queue_control(const FrameHeader& h, std::span<const std::byte> payload) {
    auto header = tcp::encode(h);
    {
      std::lock_guard lock(control_mu_);
      control_out_.insert(control_out_.end(), header.begin(), header.end());
      control_out_.insert(control_out_.end(), payload.begin(), payload.end());
      control_pending_.store(control_out_.size(), std::memory_order_release);
    }
    try_flush_control();
  }

  void try_flush_control() {
    std::unique_lock lock(send_mu_, std::try_to_lock);
    if (!lock.owns_lock()) return;
    flush_control_locked(false);
  }

  void after_send() {
    if (control_pending_.load(std::memory_order_acquire) > 0) try_flush_control();
  }

  // Requires send_mu_. Returns false when the socket failed.
  bool flush_control_locked(bool blocking) {
    if (control_pending_.load(std::memory_order_acquire) == 0) return true;
    std::vector<std::byte> out;
    {
      std::lock_guard lock(control_mu_);
      out.swap(control_out_);
      control_pending_.store(0, std::memory_order_release);
    }
    if (out.empty()) return true;
    iovec iov{out.data(), out.size()};
    std::size_t written = 0;
    auto r = send_iov(&iov, 1, blocking ? 0 : MSG_DONTWAIT, &written);
    if (r == SendResult::would_block) {
      std::lock_guard lock(control_mu_);
      control_out_.insert(control_out_.begin(), out.begin() + static_cast<std::ptrdiff_t>(written), out.end());
      control_pending_.store(control_out_.size(), std::memory_order_release);
      return true;
    }
    return r == SendResult::done;
  }

  bool read_exact(void* dst, std::size_t n) {
    auto* p = static_cast<char*>(dst);
    while (n > 0) {
      ssize_t r = ::recv(fd_, p, n, 0);
      if (r == 0) return false;
      if (r < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      p += r;
      n -= static_cast<std::size_t>(r);
    }
    return true;
  }

  bool drain(std::size_t n) {
    std::array<char, 65536> scratch;
    while (n > 0) {
      auto chunk = std::min(n, scratch.size());
      if (!read_exact(scratch.data(), chunk)) return false;
      n -= chunk;
    }
    return true;
  }

  void reader_loop() {
    std::array<std::byte, tcp::kHeaderSize> raw{};
    bool graceful = false;
    while (true) {
      if (control_pending_.load(std::memory_order_acquire) > 0) {
        pollfd p{fd_, POLLIN | POLLOUT, 0};
        if (::poll(&p, 1, 100) < 0 && errno != EINTR) break;
        if (p.revents & POLLOUT) try_flush_control();
        if (!(p.revents & (POLLIN | POLLHUP | POLLERR))) continue;
      }
      if (!read_exact(raw.data(), raw.size())) break;
      FrameHeader h;
      try {
        h = tcp::decode(raw.data());
      } catch (const Error&) {
        break;
      }
      if (!handle_frame(h, graceful)) break;
    }
    on_peer_gone(graceful);
  }

  bool handle_frame(const FrameHeader& h, bool& graceful) {
    switch (h.type) {
      case FrameType::write_imm: {
        std::byte* target = domain_->resolve_remote(h.dst_addr, h.rkey, h.len);
        bool signaled = (h.flags & tcp::kFlagSignaled) != 0;
        if (target == nullptr) {
          if (!drain(h.len)) return false;
          std::uint8_t flags = tcp::kAckError | (signaled ? tcp::kAckWasSignaled : 0);
          queue_control({FrameType::write_ack, flags, h.dst_addr, h.rkey, h.imm, 0}, {});
          return true;
        }
        if (h.len > 0 && !read_exact(target, h.len)) return false;
        bytes_rx_.fetch_add(h.len, std::memory_order_relaxed);
        cq_->push({EventKind::write_received, id_, h.len, h.imm, EventStatus::ok, 0, 0, {}});
        if (signaled) queue_control({FrameType::write_ack, tcp::kAckWasSignaled, h.dst_addr, h.rkey, h.imm, 0}, {});
        return true;
      }
      case FrameType::send: {
        std::vector<std::byte> message(h.len);
        if (h.len > 0 && !read_exact(message.data(), h.len)) return false;
        bytes_rx_.fetch_add(h.len, std::memory_order_relaxed);
        cq_->push({EventKind::recv, id_, h.len, std::nullopt, EventStatus::ok, 0, 0, std::move(message)});
        return true;
      }
      case FrameType::atomic_faa: {
        std::array<std::byte, 8> payload{};
        if (h.len != 8 || !read_exact(payload.data(), 8)) return false;
        std::byte* slot = h.dst_addr % 8 == 0 ? domain_->resolve_remote(h.dst_addr, h.rkey, 8) : nullptr;
        std::array<std::byte, 8> reply{};
        std::uint8_t flags = 0;
        if (slot == nullptr) {
          flags = tcp::kAckError;
        } else {
          auto prior = std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(slot))
                           .fetch_add(load_le(payload.data(), 8));
          store_le(reply.data(), prior, 8);
        }
        queue_control({FrameType::atomic_reply, flags, h.dst_addr, h.rkey, 0, 8}, reply);
        return true;
      }
      case FrameType::atomic_reply: {
        std::array<std::byte, 8> payload{};
        if (h.len != 8 || !read_exact(payload.data(), 8)) return false;
        std::shared_ptr<AtomicWaiter> waiter;
        {
          std::lock_guard p(pending_mu_);
          if (!atomics_.empty()) {
            waiter = atomics_.front();
            atomics_.pop_front();
          }
        }
        auto status = (h.flags & tcp::kAckError) ? EventStatus::remote_access_error : EventStatus::ok;
        auto prior = load_le(payload.data(), 8);
        cq_->push({EventKind::atomic_done, id_, 8, std::nullopt, status, 0, prior, {}});
        if (waiter) waiter->result.set_value({status, prior});
        return true;
      }
      case FrameType::write_ack: {
        std::uint64_t ticket = 0;
        std::uint32_t len = 0;
        if (h.flags & tcp::kAckWasSignaled) {
          std::lock_guard p(pending_mu_);
          if (!signaled_tickets_.empty()) {
            std::tie(ticket, len) = signaled_tickets_.front();
            signaled_tickets_.pop_front();
          }
        }
        auto status = (h.flags & tcp::kAckError) ? EventStatus::remote_access_error : EventStatus::ok;
        cq_->push({EventKind::write_done, id_, status == EventStatus::ok ? len : 0, h.imm, status, ticket, 0, {}});
        return true;
      }
      case FrameType::disconnect:
        graceful = true;
        return false;
    }
    return false;
  }

  void on_peer_gone(bool /*graceful*/) {
    state_.store(EndpointState::closed, std::memory_order_release);
    std::deque<std::pair<std::uint64_t, std::uint32_t>> tickets;
    std::deque<std::shared_ptr<AtomicWaiter>> atomics;
    {
      std::lock_guard p(pending_mu_);
      reader_done_ = true;
      tickets.swap(signaled_tickets_);
      atomics.swap(atomics_);
    }
    for (auto& w : atomics) w->result.set_value({EventStatus::disconnected, 0});
    if (closing_.load(std::memory_order_acquire)) return;
    for (auto [t, len] : tickets) {
      cq_->push({EventKind::write_done, id_, 0, std::nullopt, EventStatus::disconnected, t, 0, {}});
    }
    cq_->push({EventKind::recv, id_, 0, std::nullopt, EventStatus::disconnected, 0, 0, {}});
  }

  // A frame that never left: report it unless the reader already failed it.
  void fail_unsent_ticket(std::uint64_t ticket, std::uint32_t imm, EventKind kind) {
    std::lock_guard p(pending_mu_);
    if (ticket != 0) {
      if (!reader_done_) return;
      std::erase_if(signaled_tickets_, [&](const auto& t) { return t.first == ticket; });
    }
    cq_->push({kind, id_, 0, imm, EventStatus::disconnected, ticket, 0, {}});
  }

  int fd_;
  std::atomic<EndpointState> state_{EndpointState::init};
  std::atomic<bool> closing_{false};
  std::mutex send_mu_;
  std::mutex control_mu_;
  std::vector<std::byte> control_out_;
  std::atomic<std::size_t> control_pending_{0};
  std::mutex pending_mu_;
  std::deque<std::pair<std::uint64_t, std::uint32_t>> signaled_tickets_;
  std::deque<std::shared_ptr<AtomicWaiter>> atomics_;
  bool reader_done_ = false;
  std::atomic<std::uint64_t> bytes_rx_{0};
  std::thread reader_;
};

class TcpListener final : public Listener {
 public:
  TcpListener(int fd, std::string host, TransportOptions options)
      : fd_(fd), wake_fd_(::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK)), host_(std::move(host)), options_(options) {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    port_ = ntohs(sa.sin_port);
  }

  ~TcpListener() override {
    close();
    ::close(fd_);
    ::close(wake_fd_);
  }

  std::string address() const override { return "tcp:" + host_ + ":" + std::to_string(port_); }

  std::unique_ptr<Endpoint> accept(std::shared_ptr<MemoryDomain> domain, std::shared_ptr<CompletionQueue> cq,
                                   std::chrono::milliseconds timeout) override {
    if (closed_.load()) fail(Errc::queue_closed, "listener closed");
    pollfd fds[2] = {{fd_, POLLIN, 0}, {wake_fd_, POLLIN, 0}};
    int r = ::poll(fds, 2, static_cast<int>(timeout.count()));
    if (closed_.load()) fail(Errc::queue_closed, "listener closed");
    if (r <= 0 || !(fds[0].revents & POLLIN)) return nullptr;
    int conn = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (conn < 0) return nullptr;
    return std::make_unique<TcpEndpoint>(conn, std::move(domain), std::move(cq), options_);
  }

  void close() override {
    if (closed_.exchange(true)) return;
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof(one));
  }

 private:
  int fd_;
  int wake_fd_;
  std::string host_;
  std::uint16_t port_ = 0;
  TransportOptions options_;
  std::atomic<bool> closed_{false};
};

}  // namespace

std::unique_ptr<Listener> tcp_listen(std::string_view address, TransportOptions options) {
  auto hp = parse_address(address);
  auto sa = resolve(hp);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) fail(Errc::connect_failed, "socket: " + errno_text());
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0 || ::listen(fd, 128) < 0) {
    auto text = errno_text();
    ::close(fd);
    fail(Errc::connect_failed, "listen on " + std::string(address) + ": " + text);
  }
  return std::make_unique<TcpListener>(fd, hp.host, options);
}

std::unique_ptr<Endpoint> tcp_connect(std::string_view address, std::shared_ptr<MemoryDomain> domain,
                                      std::shared_ptr<CompletionQueue> cq, TransportOptions options) {
  auto hp = parse_address(address);
  auto sa = resolve(hp);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) fail(Errc::connect_failed, "socket: " + errno_text());
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0) {
    auto text = errno_text();
    ::close(fd);
    fail(Errc::connect_failed, "connect to " + std::string(address) + ": " + text);
  }
  return std::make_unique<TcpEndpoint>(fd, std::move(domain), std::move(cq), options);
}

}  // namespace spotfaas::transport::detail
