#include "spotfaas/protocol/messages.hpp"

#include <algorithm>

#include "spotfaas/common/bytes.hpp"
#include "spotfaas/common/error.hpp"

namespace spotfaas::protocol {
namespace {

constexpr std::size_t kMaxListLength = 1 << 20;

void invariant(bool ok, const char* what) {
  if (!ok) fail(Errc::invariant_violation, what);
}

void put(ByteWriter& w, const RemoteBufferRef& r) {
  w.u64(r.address);
  w.u32(r.key);
  w.u32(r.length);
}
void get(ByteReader& r, RemoteBufferRef& out) {
  out.address = r.u64();
  out.key = r.u32();
  out.length = r.u32();
}

void put(ByteWriter& w, const ExecutorDescriptor& d) {
  w.u64(d.executor_id);
  w.str(d.address);
  w.u32(d.total_cores);
  w.u32(d.total_memory_mb);
  w.u32(d.free_cores);
  w.u32(d.free_memory_mb);
}
void get(ByteReader& r, ExecutorDescriptor& d) {
  d.executor_id = r.u64();
  d.address = r.str();
  d.total_cores = r.u32();
  d.total_memory_mb = r.u32();
  d.free_cores = r.u32();
  d.free_memory_mb = r.u32();
}

void put(ByteWriter& w, const CodeSubmission& c) {
  w.u64(c.flib_id);
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.blob(c.object);
  w.str(c.registry);
  w.u32(static_cast<std::uint32_t>(c.functions.size()));
  for (const auto& f : c.functions) {
    w.u16(f.index);
    w.str(f.name);
  }
}
void get(ByteReader& r, CodeSubmission& c) {
  c.flib_id = r.u64();
  c.kind = static_cast<CodeKind>(r.u8());
  c.object = r.blob();
  c.registry = r.str();
  auto n = r.u32();
  invariant(n <= kMaxListLength, "function table too long");
  c.functions.resize(n);
  for (auto& f : c.functions) {
    f.index = r.u16();
    f.name = r.str();
  }
}

void put(ByteWriter& w, const ClientHello& m) { w.str(m.name); }
void get(ByteReader& r, ClientHello& m) { m.name = r.str(); }

void put(ByteWriter& w, const ClientWelcome& m) { w.u64(m.client_id); }
void get(ByteReader& r, ClientWelcome& m) { m.client_id = r.u64(); }

void put(ByteWriter& w, const AllocationRequest& m) {
  w.u32(m.cores);
  w.u32(m.memory_mb);
  w.u32(m.timeout_s);
  w.blob(m.token);
}
void get(ByteReader& r, AllocationRequest& m) {
  m.cores = r.u32();
  m.memory_mb = r.u32();
  m.timeout_s = r.u32();
  m.token = r.blob();
}

void put(ByteWriter& w, const LeaseGrant& m) {
  w.u64(m.lease_id);
  w.u64(m.executor_id);
  w.u32(static_cast<std::uint32_t>(m.endpoints.size()));
  for (const auto& e : m.endpoints) {
    w.str(e.address);
    w.u32(e.worker_id);
  }
  w.u64(m.expiry_unix_ms);
  w.u32(m.cores);
  w.u32(m.memory_mb);
}
void get(ByteReader& r, LeaseGrant& m) {
  m.lease_id = r.u64();
  m.executor_id = r.u64();
  auto n = r.u32();
  invariant(n <= kMaxListLength, "endpoint list too long");
  m.endpoints.resize(n);
  for (auto& e : m.endpoints) {
    e.address = r.str();
    e.worker_id = r.u32();
  }
  m.expiry_unix_ms = r.u64();
  m.cores = r.u32();
  m.memory_mb = r.u32();
}

void put(ByteWriter& w, const LeaseRelease& m) { w.u64(m.lease_id); }
void get(ByteReader& r, LeaseRelease& m) { m.lease_id = r.u64(); }

void put(ByteWriter&, const Ack&) {}
void get(ByteReader&, Ack&) {}

void put(ByteWriter& w, const ErrorReply& m) {
  w.u16(m.code);
  w.str(m.message);
}
void get(ByteReader& r, ErrorReply& m) {
  m.code = r.u16();
  m.message = r.str();
}

void put(ByteWriter& w, const LeaseTermination& m) {
  w.u64(m.lease_id);
  w.u64(m.client_id);
  w.u64(m.executor_id);
  w.u8(static_cast<std::uint8_t>(m.reason));
}
void get(ByteReader& r, LeaseTermination& m) {
  m.lease_id = r.u64();
  m.client_id = r.u64();
  m.executor_id = r.u64();
  m.reason = static_cast<TerminationReason>(r.u8());
}

void put(ByteWriter& w, const ExecutorRegister& m) { put(w, m.descriptor); }
void get(ByteReader& r, ExecutorRegister& m) { get(r, m.descriptor); }

void put(ByteWriter& w, const ExecutorRegistered& m) {
  w.u64(m.executor_id);
  w.u32(m.heartbeat_ms);
}
void get(ByteReader& r, ExecutorRegistered& m) {
  m.executor_id = r.u64();
  m.heartbeat_ms = r.u32();
}

void put(ByteWriter& w, const Heartbeat& m) {
  w.u64(m.executor_id);
  w.u32(m.free_cores);
  w.u32(m.free_memory_mb);
}
void get(ByteReader& r, Heartbeat& m) {
  m.executor_id = r.u64();
  m.free_cores = r.u32();
  m.free_memory_mb = r.u32();
}

void put(ByteWriter& w, const ExecutorDeregister& m) { w.u64(m.executor_id); }
void get(ByteReader& r, ExecutorDeregister& m) { m.executor_id = r.u64(); }

void put(ByteWriter& w, const LeaseNotice& m) {
  w.u64(m.lease_id);
  w.u64(m.client_id);
  w.u32(m.cores);
  w.u32(m.memory_mb);
  w.u64(m.expiry_unix_ms);
  for (const auto& b : m.billing) put(w, b);
}
void get(ByteReader& r, LeaseNotice& m) {
  m.lease_id = r.u64();
  m.client_id = r.u64();
  m.cores = r.u32();
  m.memory_mb = r.u32();
  m.expiry_unix_ms = r.u64();
  for (auto& b : m.billing) get(r, b);
}

void put(ByteWriter& w, const LeaseReleased& m) {
  w.u64(m.lease_id);
  w.u8(static_cast<std::uint8_t>(m.reason));
}
void get(ByteReader& r, LeaseReleased& m) {
  m.lease_id = r.u64();
  m.reason = static_cast<TerminationReason>(r.u8());
}

void put(ByteWriter& w, const AllocationSubmit& m) {
  w.u64(m.lease_id);
  w.u64(m.client_id);
  w.u32(m.hot_timeout_ms);
  w.u32(m.max_payload_bytes);
  put(w, m.code);
}
void get(ByteReader& r, AllocationSubmit& m) {
  m.lease_id = r.u64();
  m.client_id = r.u64();
  m.hot_timeout_ms = r.u32();
  m.max_payload_bytes = r.u32();
  get(r, m.code);
}

void put(ByteWriter& w, const AllocationReply& m) {
  w.u64(m.lease_id);
  w.u32(static_cast<std::uint32_t>(m.workers.size()));
  for (const auto& wi : m.workers) {
    w.str(wi.address);
    w.u32(wi.worker_id);
    put(w, wi.request);
  }
  w.u64(m.submit_code_ns);
  w.u64(m.spawn_workers_ns);
}
void get(ByteReader& r, AllocationReply& m) {
  m.lease_id = r.u64();
  auto n = r.u32();
  invariant(n <= kMaxListLength, "worker list too long");
  m.workers.resize(n);
  for (auto& wi : m.workers) {
    wi.address = r.str();
    wi.worker_id = r.u32();
    get(r, wi.request);
  }
  m.submit_code_ns = r.u64();
  m.spawn_workers_ns = r.u64();
}

void put(ByteWriter& w, const BillingQuery& m) { w.u64(m.client_id); }
void get(ByteReader& r, BillingQuery& m) { m.client_id = r.u64(); }

void put(ByteWriter& w, const BillingReport& m) {
  w.u64(m.client_id);
  w.u64(m.t_a_milli);
  w.u64(m.t_c_ms);
  w.u64(m.t_h_ms);
}
void get(ByteReader& r, BillingReport& m) {
  m.client_id = r.u64();
  m.t_a_milli = r.u64();
  m.t_c_ms = r.u64();
  m.t_h_ms = r.u64();
}

bool valid_reason(TerminationReason r) {
  auto v = static_cast<std::uint8_t>(r);
  return v >= 1 && v <= 5;
}

template <std::size_t I = 0>
Message decode_body(std::size_t index, ByteReader& r) {
  if constexpr (I < std::variant_size_v<Message>) {
    if (index == I) {
      std::variant_alternative_t<I, Message> m;
      get(r, m);
      return m;
    }
    return decode_body<I + 1>(index, r);
  } else {
    fail(Errc::unknown_type, "control frame: unknown message type");
  }
}

}  // namespace

MessageType type_of(const Message& m) noexcept { return static_cast<MessageType>(m.index() + 1); }

void validate(const CodeSubmission& c) {
  invariant(c.kind == CodeKind::code_object || c.kind == CodeKind::builtin_registry, "unknown code kind");
  if (c.kind == CodeKind::code_object) {
    invariant(!c.object.empty(), "code object is empty");
  } else {
    invariant(!c.registry.empty(), "registry name is empty");
  }
  invariant(c.functions.size() <= 0x10000, "function table too large");
  std::vector<bool> seen(c.functions.size(), false);
  for (const auto& f : c.functions) {
    invariant(f.index < c.functions.size(), "function indices must be dense from 0");
    invariant(!seen[f.index], "duplicate function index");
    seen[f.index] = true;
    invariant(!f.name.empty(), "function symbol name is empty");
  }
}

void validate(const Message& m) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AllocationRequest>) {
          invariant(v.cores >= 1, "allocation request: cores must be >= 1");
          invariant(v.memory_mb >= 1, "allocation request: memory_mb must be >= 1");
          invariant(v.timeout_s >= 1, "allocation request: timeout_s must be >= 1");
        } else if constexpr (std::is_same_v<T, LeaseGrant>) {
          invariant(v.cores >= 1 && v.endpoints.size() == v.cores, "lease grant: endpoint count must equal cores");
        } else if constexpr (std::is_same_v<T, ExecutorRegister>) {
          const auto& d = v.descriptor;
          invariant(d.total_cores >= 1 && d.total_memory_mb >= 1, "executor capacity must be positive");
          invariant(d.free_cores <= d.total_cores && d.free_memory_mb <= d.total_memory_mb,
                    "executor free capacity exceeds total");
          invariant(!d.address.empty(), "executor address is empty");
        } else if constexpr (std::is_same_v<T, LeaseTermination> || std::is_same_v<T, LeaseReleased>) {
          invariant(valid_reason(v.reason), "unknown termination reason");
        } else if constexpr (std::is_same_v<T, AllocationSubmit>) {
          validate(v.code);
        }
      },
      m);
}

std::vector<std::byte> encode(const Envelope& e) {
  validate(e.body);
  std::vector<std::byte> out;
  out.reserve(64);
  ByteWriter w(out);
  w.u16(kControlMagic);
  w.u8(static_cast<std::uint8_t>(type_of(e.body)));
  w.u8(0);
  w.u32(e.correlation);
  w.u32(0);
  std::visit([&](const auto& v) { put(w, v); }, e.body);
  w.patch_u32(8, static_cast<std::uint32_t>(out.size() - kControlHeaderSize));
  return out;
}

Envelope decode(std::span<const std::byte> frame) {
  ByteReader header(frame);
  if (frame.size() < kControlHeaderSize) fail(Errc::truncated_frame, "control frame shorter than header");
  if (header.u16() != kControlMagic) fail(Errc::bad_magic, "control frame: bad magic");
  auto type = header.u8();
  header.u8();
  Envelope e;
  e.correlation = header.u32();
  auto body_len = header.u32();
  if (type < 1 || type > std::variant_size_v<Message>) fail(Errc::unknown_type, "control frame: unknown type");
  if (header.remaining() < body_len) fail(Errc::truncated_frame, "control frame body truncated");
  ByteReader body(frame.subspan(kControlHeaderSize, body_len));
  e.body = decode_body(type - 1, body);
  invariant(body.remaining() == 0, "control frame has trailing bytes");
  validate(e.body);
  return e;
}

}  // namespace spotfaas::protocol
