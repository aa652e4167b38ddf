#include "spotfaas/executor/shared.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>
#include <utility>

#include "spotfaas/common/error.hpp"

namespace spotfaas::executor {

namespace {

void* map_fd(int fd, std::size_t bytes) {
  void* p = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  if (p == MAP_FAILED) fail(Errc::spawn_failed, std::string("mmap: ") + std::strerror(errno));
  return p;
}

}  // namespace

SharedRegion::SharedRegion(std::size_t bytes) : size_(bytes) {
  fd_ = ::memfd_create("spotfaas-shared", MFD_CLOEXEC);
  if (fd_ < 0) fail(Errc::spawn_failed, std::string("memfd_create: ") + std::strerror(errno));
  if (::ftruncate(fd_, static_cast<off_t>(bytes)) != 0) {
    ::close(fd_);
    fail(Errc::spawn_failed, std::string("ftruncate: ") + std::strerror(errno));
  }
  data_ = map_fd(fd_, bytes);
}

SharedRegion SharedRegion::adopt(int fd, std::size_t bytes) {
  SharedRegion r;
  r.fd_ = fd;
  r.size_ = bytes;
  r.data_ = map_fd(fd, bytes);
  return r;
}

SharedRegion::~SharedRegion() { release(); }

SharedRegion::SharedRegion(SharedRegion&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)),
      size_(std::exchange(other.size_, 0)),
      data_(std::exchange(other.data_, nullptr)) {}

SharedRegion& SharedRegion::operator=(SharedRegion&& other) noexcept {
  if (this != &other) {
    release();
    fd_ = std::exchange(other.fd_, -1);
    size_ = std::exchange(other.size_, 0);
    data_ = std::exchange(other.data_, nullptr);
  }
  return *this;
}

void SharedRegion::release() noexcept {
  if (data_ != nullptr) ::munmap(data_, size_);
  if (fd_ >= 0) ::close(fd_);
  data_ = nullptr;
  fd_ = -1;
}

WorkerStats snapshot(const WorkerSlot& s, std::uint32_t worker_id) noexcept {
  constexpr auto r = std::memory_order_relaxed;
  WorkerStats w;
  w.worker_id = worker_id;
  w.mode = static_cast<WorkerMode>(s.mode.load(r));
  w.connected = s.connected.load(r) != 0;
  w.invocations = s.invocations.load(r);
  w.rejections = s.rejections.load(r);
  w.errors = s.errors.load(r);
  w.hot_served = s.hot_served.load(r);
  w.warm_served = s.warm_served.load(r);
  w.to_warm = s.to_warm.load(r);
  w.compute = Nanos(s.compute_ns.load(r));
  w.hot_idle = Nanos(s.hot_idle_ns.load(r));
  w.warm_wait = Nanos(s.warm_wait_ns.load(r));
  w.last_activity_ns = s.last_activity_ns.load(r);
  return w;
}

}  // namespace spotfaas::executor
