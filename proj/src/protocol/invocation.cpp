#include "spotfaas/protocol/invocation.hpp"

#include <cstring>
#include <string>

#include "spotfaas/common/bytes.hpp"
#include "spotfaas/common/error.hpp"

namespace spotfaas::protocol {

void write_header(std::span<std::byte, kInvocationHeaderSize> slot, const InvocationHeader& h) noexcept {
  store_le(slot.data(), h.result_address, 8);
  store_le(slot.data() + 8, h.result_key, 4);
}

InvocationHeader read_header(std::span<const std::byte, kInvocationHeaderSize> slot) noexcept {
  return {load_le(slot.data(), 8), static_cast<std::uint32_t>(load_le(slot.data() + 8, 4))};
}

std::size_t pack_request(const InvocationHeader& h, std::span<const std::byte> payload, std::span<std::byte> out) {
  auto total = kInvocationHeaderSize + payload.size();
  if (out.size() < total) {
    fail(Errc::buffer_too_small, "request of " + std::to_string(total) + " bytes does not fit " +
                                     std::to_string(out.size()) + "-byte buffer");
  }
  write_header(out.first<kInvocationHeaderSize>(), h);
  if (!payload.empty()) std::memmove(out.data() + kInvocationHeaderSize, payload.data(), payload.size());
  return total;
}

std::vector<std::byte> pack_request(const InvocationHeader& h, std::span<const std::byte> payload) {
  std::vector<std::byte> out(kInvocationHeaderSize + payload.size());
  pack_request(h, payload, out);
  return out;
}

RequestView unpack_request(std::span<const std::byte> message) {
  if (message.size() < kInvocationHeaderSize) fail(Errc::truncated_frame, "request shorter than invocation header");
  return {read_header(message.first<kInvocationHeaderSize>()), message.subspan(kInvocationHeaderSize)};
}

const char* to_string(ResultStatus s) noexcept {
  switch (s) {
    case ResultStatus::ok: return "ok";
    case ResultStatus::rejected: return "rejected";
    case ResultStatus::function_error: return "function_error";
    case ResultStatus::unknown_function: return "unknown_function";
    case ResultStatus::output_overflow: return "output_overflow";
  }
  return "unknown";
}

}  // namespace spotfaas::protocol
