#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <span>

#include "spotfaas/common/page_buffer.hpp"

namespace spotfaas::transport {

using spotfaas::kPageSize;

// (address, access key, length) naming a region that a peer may write into.
struct RemoteBufferRef {
  std::uint64_t address = 0;
  std::uint32_t key = 0;
  std::uint32_t length = 0;

  friend bool operator==(const RemoteBufferRef&, const RemoteBufferRef&) = default;
};

struct RegisteredBuffer {
  std::uint64_t id = 0;
  std::uint64_t address = 0;
  std::size_t length = 0;
  std::uint32_t local_key = 0;
  std::uint32_t remote_key = 0;

  std::byte* data() const noexcept { return reinterpret_cast<std::byte*>(address); }
  std::span<std::byte> bytes() const noexcept { return {data(), length}; }

  RemoteBufferRef remote() const noexcept { return remote(0, length); }
  RemoteBufferRef remote(std::size_t offset, std::size_t len) const noexcept {
    return {address + offset, remote_key, static_cast<std::uint32_t>(len)};
  }
};

// Registration table of one process-level protection domain. Incoming remote
// operations are validated against it; nothing outside a live registration
// is ever touched by the transport.
class MemoryDomain {
 public:
  MemoryDomain();

  // Region must start on a page boundary and be non-empty.
  RegisteredBuffer register_region(std::span<std::byte> region);
  void deregister(const RegisteredBuffer& buffer);

  // Pointer to [address, address+len) when rkey names a live registration
  // covering that range; nullptr otherwise.
  std::byte* resolve_remote(std::uint64_t address, std::uint32_t rkey, std::size_t len) const noexcept;

  bool contains_local(const std::byte* p, std::size_t len) const noexcept;

  std::size_t registrations() const;

 private:
  struct Entry {
    std::uint64_t id;
    std::uint64_t address;
    std::size_t length;
    std::uint32_t local_key;
  };

  mutable std::shared_mutex mu_;
  std::map<std::uint32_t, Entry> by_rkey_;
  std::uint32_t next_key_;
  std::uint64_t next_id_ = 1;
};

}  // namespace spotfaas::transport
