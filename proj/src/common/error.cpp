#include "spotfaas/common/error.hpp"

namespace spotfaas {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::alignment: return "alignment";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::not_connected: return "not_connected";
    case Errc::connect_failed: return "connect_failed";
    case Errc::queue_closed: return "queue_closed";
    case Errc::timeout: return "timeout";
    case Errc::truncated_frame: return "truncated_frame";
    case Errc::bad_magic: return "bad_magic";
    case Errc::unknown_type: return "unknown_type";
    case Errc::invariant_violation: return "invariant_violation";
    case Errc::buffer_too_small: return "buffer_too_small";
    case Errc::duplicate: return "duplicate";
    case Errc::not_found: return "not_found";
    case Errc::insufficient_resources: return "insufficient_resources";
    case Errc::auth_denied: return "auth_denied";
    case Errc::invalid_state: return "invalid_state";
    case Errc::lease_expired: return "lease_expired";
    case Errc::no_endpoints: return "no_endpoints";
    case Errc::cancelled: return "cancelled";
    case Errc::retries_exhausted: return "retries_exhausted";
    case Errc::spawn_failed: return "spawn_failed";
    case Errc::insufficient_samples: return "insufficient_samples";
    case Errc::remote_error: return "remote_error";
    case Errc::usage: return "usage";
    case Errc::disconnected: return "disconnected";
  }
  return "unknown";
}

}  // namespace spotfaas
