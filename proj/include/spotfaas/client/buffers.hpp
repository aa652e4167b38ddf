#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "spotfaas/common/page_buffer.hpp"
#include "spotfaas/protocol/invocation.hpp"
#include "spotfaas/transport/memory.hpp"

namespace spotfaas::client {

// Offset of the header slot in an input region; user data then starts 16
// bytes into the page.
inline constexpr std::size_t kHeaderSlotOffset = 4;

// Registered input region with a hidden header slot directly in front of the
// user data, so header and payload leave in a single write.
class InputBuffer {
 public:
  InputBuffer(std::shared_ptr<transport::MemoryDomain> domain, std::size_t bytes);
  ~InputBuffer();
  InputBuffer(InputBuffer&&) noexcept = default;
  InputBuffer& operator=(InputBuffer&&) noexcept = default;

  std::size_t capacity() const noexcept { return capacity_; }
  std::span<std::byte> bytes() const noexcept { return {data_.data() + kHeaderSlotOffset + 12, capacity_}; }
  template <typename T>
  std::span<T> as() const noexcept {
    return {reinterpret_cast<T*>(bytes().data()), capacity_ / sizeof(T)};
  }

  std::span<std::byte, protocol::kInvocationHeaderSize> header_slot() const noexcept {
    return std::span<std::byte, protocol::kInvocationHeaderSize>(data_.data() + kHeaderSlotOffset,
                                                                 protocol::kInvocationHeaderSize);
  }
  // Header slot plus the first len bytes of user data.
  std::span<const std::byte> message(std::size_t len) const;
  // Header plus user data capacity.
  std::size_t region_size() const noexcept { return protocol::kInvocationHeaderSize + capacity_; }

 private:
  std::shared_ptr<transport::MemoryDomain> domain_;
  PageBuffer data_;
  transport::RegisteredBuffer reg_;
  std::size_t capacity_ = 0;
};

class OutputBuffer {
 public:
  // bytes must be positive.
  OutputBuffer(std::shared_ptr<transport::MemoryDomain> domain, std::size_t bytes);
  ~OutputBuffer();
  OutputBuffer(OutputBuffer&&) noexcept = default;
  OutputBuffer& operator=(OutputBuffer&&) noexcept = default;

  std::size_t capacity() const noexcept { return capacity_; }
  std::span<std::byte> bytes() const noexcept { return {data_.data(), capacity_}; }
  template <typename T>
  std::span<T> as() const noexcept {
    return {reinterpret_cast<T*>(data_.data()), capacity_ / sizeof(T)};
  }
  transport::RemoteBufferRef remote() const noexcept { return reg_.remote(0, capacity_); }

 private:
  std::shared_ptr<transport::MemoryDomain> domain_;
  PageBuffer data_;
  transport::RegisteredBuffer reg_;
  std::size_t capacity_ = 0;
};

}  // namespace spotfaas::client
