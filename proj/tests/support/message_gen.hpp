#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "spotfaas/protocol/messages.hpp"

namespace spotfaas::testing {

// Generates control messages that satisfy every schema invariant.
class MessageGenerator {
 public:
  explicit MessageGenerator(std::uint64_t seed) : rng_(seed) {}

  protocol::Envelope next() {
    protocol::Envelope e;
    e.correlation = u32();
    e.body = message(pick(std::variant_size_v<protocol::Message>));
    return e;
  }

  protocol::Message message(std::size_t index) {
    using namespace protocol;
    switch (index) {
      case 0: return ClientHello{text()};
      case 1: return ClientWelcome{u64()};
      case 2: return AllocationRequest{1 + pick(64), 1 + u32() % 65536, 1 + pick(3600), blob()};
      case 3: {
        LeaseGrant g{u64(), u64(), {}, u64(), 1 + pick(16), 1 + u32() % 65536};
        for (std::uint32_t i = 0; i < g.cores; ++i) g.endpoints.push_back({text(), u32()});
        return g;
      }
      case 4: return LeaseRelease{u64()};
      case 5: return Ack{};
      case 6: return ErrorReply{static_cast<std::uint16_t>(u32()), text()};
      case 7: return LeaseTermination{u64(), u64(), u64(), reason()};
      case 8: {
        ExecutorDescriptor d{u64(), "tcp:" + text() + ":1", 1 + pick(128), 1 + pick(1 << 20), 0, 0};
        d.free_cores = pick(d.total_cores + 1);
        d.free_memory_mb = pick(d.total_memory_mb + 1);
        return ExecutorRegister{d};
      }
      case 9: return ExecutorRegistered{u64(), u32()};
      case 10: return Heartbeat{u64(), u32(), u32()};
      case 11: return ExecutorDeregister{u64()};
      case 12: return LeaseNotice{u64(), u64(), u32(), u32(), u64(), {ref(), ref(), ref()}};
      case 13: return LeaseReleased{u64(), reason()};
      case 14: return AllocationSubmit{u64(), u64(), u32(), u32(), code()};
      case 15: {
        AllocationReply r{u64(), {}, u64(), u64()};
        auto n = pick(8);
        for (std::uint32_t i = 0; i < n; ++i) r.workers.push_back({text(), u32(), ref()});
        return r;
      }
      case 16: return BillingQuery{u64()};
      default: return BillingReport{u64(), u64(), u64(), u64()};
    }
  }

  protocol::CodeSubmission code() {
    protocol::CodeSubmission c;
    c.flib_id = u64();
    if (pick(2) == 0) {
      c.kind = protocol::CodeKind::code_object;
      c.object = blob();
      if (c.object.empty()) c.object.push_back(std::byte{0x7F});
    } else {
      c.kind = protocol::CodeKind::builtin_registry;
      c.registry = "r" + text();
    }
    auto n = pick(6);
    for (std::uint16_t i = 0; i < n; ++i) c.functions.push_back({i, "f" + text()});
    std::shuffle(c.functions.begin(), c.functions.end(), rng_);
    return c;
  }

  std::uint32_t u32() { return static_cast<std::uint32_t>(rng_()); }
  std::uint64_t u64() { return rng_(); }
  std::uint32_t pick(std::uint32_t n) { return static_cast<std::uint32_t>(rng_() % n); }

 private:
  std::string text() {
    std::string s(pick(24), ' ');
    for (auto& ch : s) ch = static_cast<char>(32 + pick(95));
    return s;
  }
  std::vector<std::byte> blob() {
    std::vector<std::byte> b(pick(48));
    for (auto& x : b) x = static_cast<std::byte>(rng_());
    return b;
  }
  protocol::RemoteBufferRef ref() { return {u64(), u32(), u32()}; }
  protocol::TerminationReason reason() { return static_cast<protocol::TerminationReason>(1 + pick(5)); }

  std::mt19937_64 rng_;
};

}  // namespace spotfaas::testing
