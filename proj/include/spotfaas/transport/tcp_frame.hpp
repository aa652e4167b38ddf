#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "spotfaas/common/bytes.hpp"
#include "spotfaas/common/error.hpp"

namespace spotfaas::transport::tcp {

inline constexpr std::uint16_t kMagic = 0x7FAA;
inline constexpr std::size_t kHeaderSize = 24;

enum class FrameType : std::uint8_t {
  write_imm = 1,
  send = 2,
  atomic_faa = 3,
  atomic_reply = 4,
  disconnect = 5,
  write_ack = 6,
};

// write_imm flags
inline constexpr std::uint8_t kFlagSignaled = 0x01;
// write_ack / atomic_reply flags
inline constexpr std::uint8_t kAckError = 0x01;
inline constexpr std::uint8_t kAckWasSignaled = 0x02;

struct FrameHeader {
  FrameType type = FrameType::send;
  std::uint8_t flags = 0;
  std::uint64_t dst_addr = 0;
  std::uint32_t rkey = 0;
  std::uint32_t imm = 0;
  std::uint32_t len = 0;
};

inline std::array<std::byte, kHeaderSize> encode(const FrameHeader& h) noexcept {
  std::array<std::byte, kHeaderSize> out{};
  store_le(out.data(), kMagic, 2);
  out[2] = static_cast<std::byte>(h.type);
  out[3] = static_cast<std::byte>(h.flags);
  store_le(out.data() + 4, h.dst_addr, 8);
  store_le(out.data() + 12, h.rkey, 4);
  store_le(out.data() + 16, h.imm, 4);
  store_le(out.data() + 20, h.len, 4);
  return out;
}

inline FrameHeader decode(const std::byte* in) {
  if (load_le(in, 2) != kMagic) fail(Errc::bad_magic, "tcp frame: bad magic");
  auto type = std::to_integer<std::uint8_t>(in[2]);
  if (type < 1 || type > 6) fail(Errc::unknown_type, "tcp frame: unknown type");
  FrameHeader h;
  h.type = static_cast<FrameType>(type);
  h.flags = std::to_integer<std::uint8_t>(in[3]);
  h.dst_addr = load_le(in + 4, 8);
  h.rkey = static_cast<std::uint32_t>(load_le(in + 12, 4));
  h.imm = static_cast<std::uint32_t>(load_le(in + 16, 4));
  h.len = static_cast<std::uint32_t>(load_le(in + 20, 4));
  return h;
}

}  // namespace spotfaas::transport::tcp
