#include "spotfaas/transport/memory.hpp"

#include <random>
#include <string>

#include "spotfaas/common/error.hpp"

namespace spotfaas::transport {

MemoryDomain::MemoryDomain() {
  // Keys of different domains should not collide by accident, so a stale
  // reference carried over from another process is rejected.
  std::random_device rd;
  next_key_ = (rd() & 0x7FFFFFF0u) | 0x10u;
}

RegisteredBuffer MemoryDomain::register_region(std::span<std::byte> region) {
  if (region.empty()) fail(Errc::invalid_argument, "register: empty region");
  auto address = reinterpret_cast<std::uint64_t>(region.data());
  if (address % kPageSize != 0) {
    fail(Errc::alignment, "register: region at 0x" + std::to_string(address) + " is not page-aligned");
  }
  std::unique_lock lock(mu_);
  RegisteredBuffer out;
  out.id = next_id_++;
  out.address = address;
  out.length = region.size();
  out.remote_key = next_key_++;
  out.local_key = next_key_++;
  by_rkey_.emplace(out.remote_key, Entry{out.id, out.address, out.length, out.local_key});
  return out;
}

void MemoryDomain::deregister(const RegisteredBuffer& buffer) {
  std::unique_lock lock(mu_);
  by_rkey_.erase(buffer.remote_key);
}

std::byte* MemoryDomain::resolve_remote(std::uint64_t address, std::uint32_t rkey, std::size_t len) const noexcept {
  std::shared_lock lock(mu_);
  auto it = by_rkey_.find(rkey);
  if (it == by_rkey_.end()) return nullptr;
  const Entry& e = it->second;
  if (address < e.address) return nullptr;
  auto offset = address - e.address;
  if (offset > e.length || len > e.length - offset) return nullptr;
  return reinterpret_cast<std::byte*>(address);
}

bool MemoryDomain::contains_local(const std::byte* p, std::size_t len) const noexcept {
  auto address = reinterpret_cast<std::uint64_t>(p);
  std::shared_lock lock(mu_);
  for (const auto& [key, e] : by_rkey_) {
    if (address >= e.address && address - e.address <= e.length && len <= e.length - (address - e.address)) {
      return true;
    }
  }
  return false;
}

std::size_t MemoryDomain::registrations() const {
  std::shared_lock lock(mu_);
  return by_rkey_.size();
}

}  // namespace spotfaas::transport
