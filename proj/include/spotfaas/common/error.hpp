#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spotfaas {

// Error codes shared by every module. The numeric values travel inside
// ErrorReply control messages, so existing entries must keep their values.
enum class Errc : std::uint16_t {
  alignment = 1,
  invalid_argument = 2,
  not_connected = 3,
  connect_failed = 4,
  queue_closed = 5,
  timeout = 6,
  truncated_frame = 7,
  bad_magic = 8,
  unknown_type = 9,
  invariant_violation = 10,
  buffer_too_small = 11,
  duplicate = 12,
  not_found = 13,
  insufficient_resources = 14,
  auth_denied = 15,
  invalid_state = 16,
  lease_expired = 17,
  no_endpoints = 18,
  cancelled = 19,
  retries_exhausted = 20,
  spawn_failed = 21,
  insufficient_samples = 22,
  remote_error = 23,
  usage = 24,
  disconnected = 25,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace spotfaas
