#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace spotfaas::protocol {

inline constexpr std::size_t kInvocationHeaderSize = 12;

struct InvocationHeader {
  std::uint64_t result_address = 0;
  std::uint32_t result_key = 0;
  friend bool operator==(const InvocationHeader&, const InvocationHeader&) = default;
};

void write_header(std::span<std::byte, kInvocationHeaderSize> slot, const InvocationHeader& h) noexcept;
InvocationHeader read_header(std::span<const std::byte, kInvocationHeaderSize> slot) noexcept;

std::vector<std::byte> pack_request(const InvocationHeader& h, std::span<const std::byte> payload);

// Packs into caller memory; throws buffer_too_small when out cannot hold
// header and payload. Returns bytes used.
std::size_t pack_request(const InvocationHeader& h, std::span<const std::byte> payload, std::span<std::byte> out);

struct RequestView {
  InvocationHeader header;
  std::span<const std::byte> payload;  // aliases the input, no copy
};

RequestView unpack_request(std::span<const std::byte> message);

struct InvocationImmediate {
  std::uint16_t invocation_id = 0;
  std::uint16_t function_index = 0;
  friend bool operator==(const InvocationImmediate&, const InvocationImmediate&) = default;
};

enum class ResultStatus : std::uint16_t {
  ok = 0,
  rejected = 1,
  function_error = 2,
  unknown_function = 3,
  output_overflow = 4,
};

// status is kept raw so any 32-bit immediate round-trips.
struct ResultImmediate {
  std::uint16_t invocation_id = 0;
  std::uint16_t status = 0;
  ResultStatus result() const noexcept { return static_cast<ResultStatus>(status); }
  friend bool operator==(const ResultImmediate&, const ResultImmediate&) = default;
};

constexpr std::uint32_t pack_immediate(InvocationImmediate v) noexcept {
  return (std::uint32_t(v.invocation_id) << 16) | v.function_index;
}
constexpr InvocationImmediate unpack_invocation_immediate(std::uint32_t x) noexcept {
  return {static_cast<std::uint16_t>(x >> 16), static_cast<std::uint16_t>(x & 0xFFFF)};
}
constexpr std::uint32_t pack_immediate(ResultImmediate v) noexcept {
  return (std::uint32_t(v.invocation_id) << 16) | v.status;
}
constexpr ResultImmediate unpack_result_immediate(std::uint32_t x) noexcept {
  return {static_cast<std::uint16_t>(x >> 16), static_cast<std::uint16_t>(x & 0xFFFF)};
}
constexpr ResultImmediate make_result(std::uint16_t id, ResultStatus s) noexcept {
  return {id, static_cast<std::uint16_t>(s)};
}

const char* to_string(ResultStatus s) noexcept;

}  // namespace spotfaas::protocol
