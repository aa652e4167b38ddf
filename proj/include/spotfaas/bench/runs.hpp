#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spotfaas/bench/records.hpp"
#include "spotfaas/bench/stats.hpp"
#include "spotfaas/client/invoker.hpp"
#include "spotfaas/executor/sandbox.hpp"
#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::bench {

// Latencies are in nanoseconds, throughputs in bytes per second.

enum class LatencyMode : std::uint8_t { raw_transport, hot, warm };
const char* to_string(LatencyMode m) noexcept;
const char* to_string(transport::Backend b) noexcept;
transport::Backend parse_backend(std::string_view s);

struct LatencyOptions {
  transport::Backend backend = transport::Backend::loopback;
  std::size_t size = 1024;
  std::size_t reps = 10000;
  std::size_t warmups = 100;
  double level = 0.99;
};

struct LatencySummary {
  LatencyMode mode = LatencyMode::hot;
  std::size_t size = 0;
  Stats stats;
  Record record(transport::Backend backend) const;
};

LatencySummary bench_latency(LatencyMode mode, const LatencyOptions& options);

// Raw, hot and warm back to back on the same stack and payload.
struct PairedLatency {
  LatencySummary raw, hot, warm;
  bool ordered() const noexcept { return raw.stats.median <= hot.stats.median && hot.stats.median <= warm.stats.median; }
  double dispatch_overhead_ns() const noexcept { return hot.stats.median - raw.stats.median; }
};

PairedLatency bench_latency_paired(const LatencyOptions& options);

// Times one echo invocation per rep after warmups; verifies every reply.
std::vector<double> time_invocations(client::Invoker& inv, client::InputBuffer& in, client::OutputBuffer& out,
                                     std::size_t size, std::size_t reps, std::size_t warmups);

struct ColdOptions {
  transport::Backend backend = transport::Backend::tcp;
  executor::SandboxKind sandbox = executor::SandboxKind::process;
  std::string sandbox_binary;  // empty: next to the running binary
  std::size_t trials = 100;
};

struct ColdBreakdown {
  double connect_manager = 0, lease_grant = 0, submit_code = 0, spawn_workers = 0, first_invocation = 0;
  double total() const noexcept {
    return connect_manager + lease_grant + submit_code + spawn_workers + first_invocation;
  }
};

struct ColdSummary {
  std::vector<ColdBreakdown> trials;
  Stats connect_manager, lease_grant, submit_code, spawn_workers, first_invocation, total;
  // Name of the step with the largest median.
  std::string largest_step() const;
};

ColdSummary bench_cold(const ColdOptions& options);

struct ParallelOptions {
  transport::Backend backend = transport::Backend::tcp;
  std::vector<std::uint32_t> workers = {1, 2, 4, 8, 16, 32};
  std::size_t size = 1024;
  std::size_t reps = 200;
  std::size_t warmups = 20;
  client::ModeHint hint = client::ModeHint::always_hot;
};

struct ParallelPoint {
  std::uint32_t workers = 0;
  std::size_t size = 0;
  Stats batch;           // time until all N concurrent invocations return
  Stats per_invocation;  // batch time / N
  double throughput = 0;
  double raw_throughput = 0;  // same pattern on bare transport connections
};

std::vector<ParallelPoint> bench_parallel(const ParallelOptions& options);

struct BandwidthOptions {
  transport::Backend backend = transport::Backend::tcp;
  std::vector<std::size_t> sizes = {1, 128, 1024, 16384, 131072, 1 << 20, 5 << 20};
  std::size_t reps = 200;
  std::size_t warmups = 10;
};

struct BandwidthPoint {
  std::size_t size = 0;
  Stats latency, raw_latency;
  double throughput = 0, raw_throughput = 0;  // size / median round trip
};

std::vector<BandwidthPoint> bench_bandwidth(const BandwidthOptions& options);

}  // namespace spotfaas::bench
