#include "spotfaas/manager/billing.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "spotfaas/common/error.hpp"

namespace spotfaas::manager {
namespace {

std::uint64_t dollars_to_pico(std::string_view text) {
  std::string s(text);
  std::size_t used = 0;
  long double v;
  try {
    v = std::stold(s, &used);
  } catch (const std::exception&) {
    fail(Errc::invalid_argument, "bad rate: " + s);
  }
  if (used != s.size() || v < 0) fail(Errc::invalid_argument, "bad rate: " + s);
  return static_cast<std::uint64_t>(std::llround(v * 1e12L));
}

}  // namespace

Rates Rates::parse(std::string_view text) {
  Rates r;
  auto c1 = text.find(',');
  auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
  if (c2 == std::string_view::npos) fail(Errc::invalid_argument, "rates must be Ca,Cc,Ch");
  r.alloc_pico_per_gb_s = dollars_to_pico(text.substr(0, c1));
  r.compute_pico_per_s = dollars_to_pico(text.substr(c1 + 1, c2 - c1 - 1));
  r.hot_pico_per_s = dollars_to_pico(text.substr(c2 + 1));
  return r;
}

BillingLedger::BillingLedger(std::shared_ptr<transport::MemoryDomain> domain) : domain_(std::move(domain)) {}

BillingLedger::~BillingLedger() {
  for (auto& a : arenas_) domain_->deregister(a->registration);
}

std::array<RemoteBufferRef, 3> BillingLedger::open(std::uint64_t client_id) {
  {
    std::lock_guard lock(mu_);
    if (!index_.contains(client_id)) {
      auto n = index_.size();
      if (n / kClientsPerArena >= arenas_.size()) {
        auto arena = std::make_unique<Arena>();
        arena->memory = PageBuffer(kPageSize);
        arena->registration = domain_->register_region(arena->memory.whole());
        arenas_.push_back(std::move(arena));
      }
      index_.emplace(client_id, n);
    }
  }
  return slots(client_id);
}

std::pair<const BillingLedger::Arena*, std::size_t> BillingLedger::locate(std::uint64_t client_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(client_id);
  if (it == index_.end()) fail(Errc::not_found, "no billing slots for client " + std::to_string(client_id));
  return {arenas_[it->second / kClientsPerArena].get(), (it->second % kClientsPerArena) * kSlotBytes};
}

std::array<RemoteBufferRef, 3> BillingLedger::slots(std::uint64_t client_id) const {
  auto [arena, offset] = locate(client_id);
  std::array<RemoteBufferRef, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = arena->registration.remote(offset + 8 * i, 8);
  return out;
}

Usage BillingLedger::read(std::uint64_t client_id) const {
  auto [arena, offset] = locate(client_id);
  auto load = [&](std::size_t i) {
    auto* p = reinterpret_cast<std::uint64_t*>(arena->memory.data() + offset + 8 * i);
    return std::atomic_ref<std::uint64_t>(*p).load();
  };
  return {load(kAllocSlot), load(kComputeSlot), load(kHotSlot)};
}

}  // namespace spotfaas::manager
