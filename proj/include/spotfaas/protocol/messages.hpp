#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spotfaas/transport/memory.hpp"

namespace spotfaas::protocol {

using transport::RemoteBufferRef;

inline constexpr std::uint16_t kControlMagic = 0x7FAC;
inline constexpr std::size_t kControlHeaderSize = 12;

// Hot timeout value meaning "never fall back to warm".
inline constexpr std::uint32_t kAlwaysHot = 0xFFFFFFFF;
// Hot timeout value asking the executor to apply its configured default.
inline constexpr std::uint32_t kExecutorDefaultHot = 0xFFFFFFFE;

enum class MessageType : std::uint8_t {
  client_hello = 1,
  client_welcome = 2,
  allocation_request = 3,
  lease_grant = 4,
  lease_release = 5,
  ack = 6,
  error_reply = 7,
  lease_termination = 8,
  executor_register = 9,
  executor_registered = 10,
  heartbeat = 11,
  executor_deregister = 12,
  lease_notice = 13,
  lease_released = 14,
  allocation_submit = 15,
  allocation_reply = 16,
  billing_query = 17,
  billing_report = 18,
};

enum class TerminationReason : std::uint8_t {
  expired = 1,
  released = 2,
  evicted = 3,
  revoked = 4,
  idle = 5,
};

struct ExecutorDescriptor {
  std::uint64_t executor_id = 0;
  std::string address;
  std::uint32_t total_cores = 0;
  std::uint32_t total_memory_mb = 0;
  std::uint32_t free_cores = 0;
  std::uint32_t free_memory_mb = 0;
  friend bool operator==(const ExecutorDescriptor&, const ExecutorDescriptor&) = default;
};

enum class CodeKind : std::uint8_t { code_object = 1, builtin_registry = 2 };

struct FunctionSymbol {
  std::uint16_t index = 0;
  std::string name;
  friend bool operator==(const FunctionSymbol&, const FunctionSymbol&) = default;
};

struct CodeSubmission {
  std::uint64_t flib_id = 0;
  CodeKind kind = CodeKind::builtin_registry;
  std::vector<std::byte> object;  // code_object only
  std::string registry;           // builtin_registry only
  std::vector<FunctionSymbol> functions;
  friend bool operator==(const CodeSubmission&, const CodeSubmission&) = default;
};

struct WorkerEndpoint {
  std::string address;
  std::uint32_t worker_id = 0;
  friend bool operator==(const WorkerEndpoint&, const WorkerEndpoint&) = default;
};

struct WorkerInfo {
  std::string address;
  std::uint32_t worker_id = 0;
  RemoteBufferRef request;
  friend bool operator==(const WorkerInfo&, const WorkerInfo&) = default;
};

struct ClientHello {
  std::string name;
  friend bool operator==(const ClientHello&, const ClientHello&) = default;
};
struct ClientWelcome {
  std::uint64_t client_id = 0;
  friend bool operator==(const ClientWelcome&, const ClientWelcome&) = default;
};
struct AllocationRequest {
  std::uint32_t cores = 0;
  std::uint32_t memory_mb = 0;
  std::uint32_t timeout_s = 0;
  std::vector<std::byte> token;
  friend bool operator==(const AllocationRequest&, const AllocationRequest&) = default;
};
struct LeaseGrant {
  std::uint64_t lease_id = 0;
  std::uint64_t executor_id = 0;
  std::vector<WorkerEndpoint> endpoints;
  std::uint64_t expiry_unix_ms = 0;
  std::uint32_t cores = 0;
  std::uint32_t memory_mb = 0;
  friend bool operator==(const LeaseGrant&, const LeaseGrant&) = default;
};
struct LeaseRelease {
  std::uint64_t lease_id = 0;
  friend bool operator==(const LeaseRelease&, const LeaseRelease&) = default;
};
struct Ack {
  friend bool operator==(const Ack&, const Ack&) = default;
};
struct ErrorReply {
  std::uint16_t code = 0;
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};
struct LeaseTermination {
  std::uint64_t lease_id = 0;
  std::uint64_t client_id = 0;
  std::uint64_t executor_id = 0;
  TerminationReason reason = TerminationReason::expired;
  friend bool operator==(const LeaseTermination&, const LeaseTermination&) = default;
};
struct ExecutorRegister {
  ExecutorDescriptor descriptor;
  friend bool operator==(const ExecutorRegister&, const ExecutorRegister&) = default;
};
struct ExecutorRegistered {
  std::uint64_t executor_id = 0;
  std::uint32_t heartbeat_ms = 0;
  friend bool operator==(const ExecutorRegistered&, const ExecutorRegistered&) = default;
};
struct Heartbeat {
  std::uint64_t executor_id = 0;
  std::uint32_t free_cores = 0;
  std::uint32_t free_memory_mb = 0;
  friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};
struct ExecutorDeregister {
  std::uint64_t executor_id = 0;
  friend bool operator==(const ExecutorDeregister&, const ExecutorDeregister&) = default;
};
struct LeaseNotice {
  std::uint64_t lease_id = 0;
  std::uint64_t client_id = 0;
  std::uint32_t cores = 0;
  std::uint32_t memory_mb = 0;
  std::uint64_t expiry_unix_ms = 0;
  std::array<RemoteBufferRef, 3> billing{};  // t_a, t_c, t_h slots
  friend bool operator==(const LeaseNotice&, const LeaseNotice&) = default;
};
struct LeaseReleased {
  std::uint64_t lease_id = 0;
  TerminationReason reason = TerminationReason::released;
  friend bool operator==(const LeaseReleased&, const LeaseReleased&) = default;
};
struct AllocationSubmit {
  std::uint64_t lease_id = 0;
  std::uint64_t client_id = 0;
  std::uint32_t hot_timeout_ms = 0;
  std::uint32_t max_payload_bytes = 0;
  CodeSubmission code;
  friend bool operator==(const AllocationSubmit&, const AllocationSubmit&) = default;
};
struct AllocationReply {
  std::uint64_t lease_id = 0;
  std::vector<WorkerInfo> workers;
  std::uint64_t submit_code_ns = 0;
  std::uint64_t spawn_workers_ns = 0;
  friend bool operator==(const AllocationReply&, const AllocationReply&) = default;
};
struct BillingQuery {
  std::uint64_t client_id = 0;
  friend bool operator==(const BillingQuery&, const BillingQuery&) = default;
};
struct BillingReport {
  std::uint64_t client_id = 0;
  std::uint64_t t_a_milli = 0;  // GB-seconds x 1000
  std::uint64_t t_c_ms = 0;
  std::uint64_t t_h_ms = 0;
  friend bool operator==(const BillingReport&, const BillingReport&) = default;
};

// Alternative order matches MessageType numbering (index + 1).
using Message = std::variant<ClientHello, ClientWelcome, AllocationRequest, LeaseGrant, LeaseRelease, Ack, ErrorReply,
                             LeaseTermination, ExecutorRegister, ExecutorRegistered, Heartbeat, ExecutorDeregister,
                             LeaseNotice, LeaseReleased, AllocationSubmit, AllocationReply, BillingQuery,
                             BillingReport>;

struct Envelope {
  std::uint32_t correlation = 0;
  Message body;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

MessageType type_of(const Message& m) noexcept;

// Throws invariant_violation when a field breaks its type's rules.
void validate(const Message& m);
void validate(const CodeSubmission& code);

std::vector<std::byte> encode(const Envelope& e);
inline std::vector<std::byte> encode(Message m, std::uint32_t correlation = 0) {
  return encode(Envelope{correlation, std::move(m)});
}

// Errors: truncated_frame, bad_magic, unknown_type, invariant_violation.
Envelope decode(std::span<const std::byte> frame);

}  // namespace spotfaas::protocol
