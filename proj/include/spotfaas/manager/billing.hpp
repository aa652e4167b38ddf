#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spotfaas/common/page_buffer.hpp"
#include "spotfaas/transport/memory.hpp"

namespace spotfaas::manager {

using transport::RemoteBufferRef;

// Prices in pico-dollars per unit: per GB-second, per compute second, per
// hot-polling second.
struct Rates {
  std::uint64_t alloc_pico_per_gb_s = 10'000'000;  // 1e-5 $
  std::uint64_t compute_pico_per_s = 100'000'000;  // 1e-4 $
  std::uint64_t hot_pico_per_s = 50'000'000;       // 5e-5 $

  // "Ca,Cc,Ch" in dollars, e.g. "1e-5,1e-4,5e-5".
  static Rates parse(std::string_view text);
};

struct Usage {
  std::uint64_t t_a_milli = 0;  // GB-seconds x 1000
  std::uint64_t t_c_ms = 0;
  std::uint64_t t_h_ms = 0;
  friend bool operator==(const Usage&, const Usage&) = default;
};

using Femto = unsigned __int128;

// Ca*t_a + Cc*t_c + Ch*t_h in femto-dollars. pico-$ per unit times
// milli-units is exact.
constexpr Femto cost_femto(const Rates& r, const Usage& u) noexcept {
  return Femto(r.alloc_pico_per_gb_s) * u.t_a_milli + Femto(r.compute_pico_per_s) * u.t_c_ms +
         Femto(r.hot_pico_per_s) * u.t_h_ms;
}

inline double femto_to_dollars(Femto f) noexcept { return static_cast<double>(f) * 1e-15; }

enum BillingSlot : std::size_t { kAllocSlot = 0, kComputeSlot = 1, kHotSlot = 2 };

// Per-client accumulators living in registered memory so executors can add
// to them with remote fetch-and-add.
class BillingLedger {
 public:
  explicit BillingLedger(std::shared_ptr<transport::MemoryDomain> domain);
  ~BillingLedger();
  BillingLedger(const BillingLedger&) = delete;
  BillingLedger& operator=(const BillingLedger&) = delete;

  std::array<RemoteBufferRef, 3> open(std::uint64_t client_id);
  std::array<RemoteBufferRef, 3> slots(std::uint64_t client_id) const;
  Usage read(std::uint64_t client_id) const;

 private:
  struct Arena {
    PageBuffer memory;
    transport::RegisteredBuffer registration;
  };
  static constexpr std::size_t kSlotBytes = 3 * sizeof(std::uint64_t);
  static constexpr std::size_t kClientsPerArena = kPageSize / kSlotBytes;

  std::pair<const Arena*, std::size_t> locate(std::uint64_t client_id) const;

  std::shared_ptr<transport::MemoryDomain> domain_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Arena>> arenas_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

}  // namespace spotfaas::manager
