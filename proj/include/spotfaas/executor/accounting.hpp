#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include "spotfaas/common/time.hpp"

namespace spotfaas::executor {

// Cumulative usage of one lease in the ledger's units: t_a in GB-s x 1000,
// t_c and t_h in milliseconds. Slot order matches the ledger.
struct UsageTotals {
  std::array<std::uint64_t, 3> v{};
  std::uint64_t alloc_milli() const noexcept { return v[0]; }
  std::uint64_t compute_ms() const noexcept { return v[1]; }
  std::uint64_t hot_ms() const noexcept { return v[2]; }
  friend bool operator==(const UsageTotals&, const UsageTotals&) = default;
};

// Floors every quantity, so repeated conversion of growing totals never
// double counts: only differences of floors are ever sent.
UsageTotals usage_totals(std::uint32_t memory_mb, Nanos alive, Nanos compute, Nanos hot_idle) noexcept;

// Tracks what has been observed and what has reached the ledger. A failed
// remote add leaves its delta pending for the next flush.
class Accountant {
 public:
  // Totals only grow; smaller observations are ignored per slot.
  void observe(const UsageTotals& totals) noexcept;

  UsageTotals observed() const noexcept { return observed_; }
  UsageTotals flushed() const noexcept { return flushed_; }
  UsageTotals pending() const noexcept;
  bool idle() const noexcept { return pending() == UsageTotals{}; }

  // Sends each non-zero pending delta through add(slot, delta), which
  // throws on failure. Returns true when nothing remains pending.
  bool flush(const std::function<void(std::size_t slot, std::uint64_t delta)>& add);

  // Records a delta as delivered; used when the add happened elsewhere.
  void commit(std::size_t slot, std::uint64_t delta) noexcept { flushed_.v[slot] += delta; }

 private:
  UsageTotals observed_;
  UsageTotals flushed_;
};

}  // namespace spotfaas::executor
