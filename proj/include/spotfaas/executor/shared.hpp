#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>

#include "spotfaas/common/time.hpp"

namespace spotfaas::executor {

// Anonymous shared mapping backed by a memfd, so a spawned sandbox can map
// the same pages by inheriting the descriptor.
class SharedRegion {
 public:
  SharedRegion() = default;
  // Creates a fresh zeroed region.
  explicit SharedRegion(std::size_t bytes);
  // Maps an inherited descriptor; takes ownership of fd.
  static SharedRegion adopt(int fd, std::size_t bytes);
  ~SharedRegion();

  SharedRegion(SharedRegion&& other) noexcept;
  SharedRegion& operator=(SharedRegion&& other) noexcept;
  SharedRegion(const SharedRegion&) = delete;
  SharedRegion& operator=(const SharedRegion&) = delete;

  int fd() const noexcept { return fd_; }
  std::size_t size() const noexcept { return size_; }
  void* data() const noexcept { return data_; }

  template <typename T>
  T* as() const noexcept {
    return std::launder(static_cast<T*>(data_));
  }

 private:
  void release() noexcept;

  int fd_ = -1;
  std::size_t size_ = 0;
  void* data_ = nullptr;
};

static_assert(std::atomic<std::uint64_t>::is_always_lock_free);
static_assert(std::atomic<std::int32_t>::is_always_lock_free);

inline std::uint64_t monotonic_ns() noexcept {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count());
}

// Executor-wide core occupancy. Hot workers hold a core for as long as they
// poll; a warm worker must win a free core before running an invocation.
struct CoreTable {
  std::atomic<std::int32_t> capacity{0};
  std::atomic<std::int32_t> in_use{0};
  std::atomic<std::uint64_t> admission_checks{0};

  bool try_acquire() noexcept {
    admission_checks.fetch_add(1, std::memory_order_relaxed);
    auto cur = in_use.load(std::memory_order_relaxed);
    while (cur < capacity.load(std::memory_order_relaxed)) {
      if (in_use.compare_exchange_weak(cur, cur + 1, std::memory_order_acq_rel)) return true;
    }
    return false;
  }
  // Always-hot workers take their core unconditionally.
  void force_acquire() noexcept { in_use.fetch_add(1, std::memory_order_acq_rel); }
  void release() noexcept { in_use.fetch_sub(1, std::memory_order_acq_rel); }
};

enum class WorkerMode : std::uint32_t { starting = 0, warm = 1, hot = 2, stopped = 3 };

// Counters of one worker. Written only by that worker, read by the
// allocator's accounting flush.
struct alignas(64) WorkerSlot {
  std::atomic<std::uint32_t> mode{0};
  std::atomic<std::uint32_t> connected{0};
  std::atomic<std::uint64_t> invocations{0};
  std::atomic<std::uint64_t> rejections{0};
  std::atomic<std::uint64_t> errors{0};
  std::atomic<std::uint64_t> hot_served{0};
  std::atomic<std::uint64_t> warm_served{0};
  std::atomic<std::uint64_t> to_warm{0};  // hot -> warm transitions
  std::atomic<std::uint64_t> compute_ns{0};
  std::atomic<std::uint64_t> hot_idle_ns{0};
  std::atomic<std::uint64_t> warm_wait_ns{0};
  std::atomic<std::uint64_t> last_activity_ns{0};
};

inline constexpr std::uint32_t kMaxWorkers = 256;

struct SandboxBlock {
  std::atomic<std::uint32_t> stop{0};
  std::atomic<std::uint32_t> ready_workers{0};
  std::uint32_t workers = 0;
  std::uint64_t started_ns = 0;
  WorkerSlot slots[kMaxWorkers];
};

struct WorkerStats {
  std::uint32_t worker_id = 0;
  WorkerMode mode = WorkerMode::starting;
  bool connected = false;
  std::uint64_t invocations = 0;
  std::uint64_t rejections = 0;
  std::uint64_t errors = 0;
  std::uint64_t hot_served = 0;
  std::uint64_t warm_served = 0;
  std::uint64_t to_warm = 0;
  Nanos compute{0};
  Nanos hot_idle{0};
  Nanos warm_wait{0};
  std::uint64_t last_activity_ns = 0;
};

WorkerStats snapshot(const WorkerSlot& slot, std::uint32_t worker_id) noexcept;

}  // namespace spotfaas::executor
