#include "spotfaas/executor/accounting.hpp"

#include <algorithm>

#include "spotfaas/common/error.hpp"

namespace spotfaas::executor {

UsageTotals usage_totals(std::uint32_t memory_mb, Nanos alive, Nanos compute, Nanos hot_idle) noexcept {
  auto ms = [](Nanos d) { return static_cast<std::uint64_t>(std::max<std::int64_t>(0, d.count()) / 1'000'000); };
  UsageTotals t;
  // MiB x ms / 1024 = GB-s x 1000
  t.v[0] = static_cast<std::uint64_t>(memory_mb) * ms(alive) / 1024;
  t.v[1] = ms(compute);
  t.v[2] = ms(hot_idle);
  return t;
}

void Accountant::observe(const UsageTotals& totals) noexcept {
  for (std::size_t i = 0; i < 3; ++i) observed_.v[i] = std::max(observed_.v[i], totals.v[i]);
}

UsageTotals Accountant::pending() const noexcept {
  UsageTotals p;
  for (std::size_t i = 0; i < 3; ++i) p.v[i] = observed_.v[i] - flushed_.v[i];
  return p;
}

bool Accountant::flush(const std::function<void(std::size_t, std::uint64_t)>& add) {
  bool all = true;
  auto p = pending();
  for (std::size_t i = 0; i < 3; ++i) {
    if (p.v[i] == 0) continue;
    try {
      add(i, p.v[i]);
      flushed_.v[i] += p.v[i];
    } catch (const Error&) {
      all = false;
    }
  }
  return all;
}

}  // namespace spotfaas::executor
