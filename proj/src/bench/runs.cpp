#include "spotfaas/bench/runs.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

#include "spotfaas/bench/cluster.hpp"
#include "spotfaas/bench/raw.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/functions/demo.hpp"
#include "spotfaas/functions/registry.hpp"

namespace spotfaas::bench {

using namespace std::chrono_literals;
using protocol::ResultStatus;
using SteadyClock = std::chrono::steady_clock;

namespace {

double ns_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double, std::nano>(SteadyClock::now() - t0).count();
}

std::string listen_for(transport::Backend b) { return b == transport::Backend::loopback ? "loop:" : "tcp:127.0.0.1:0"; }

void stamp(std::span<std::byte> buf, std::size_t size, std::uint64_t counter) {
  auto n = std::min<std::size_t>(size, 8);
  std::memcpy(buf.data(), &counter, n);
  std::memcpy(buf.data() + size - n, &counter, n);
}

void wait_for_teardown(LocalCluster& cluster) {
  auto until = SteadyClock::now() + 10s;
  for (std::size_t i = 0; i < cluster.executor_count(); ++i) {
    while (cluster.executor(i).running_sandboxes() > 0 && SteadyClock::now() < until) std::this_thread::sleep_for(2ms);
  }
}

void fill_pattern(std::span<std::byte> b, std::uint64_t seed) {
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ull + 1;
  for (auto& v : b) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    v = static_cast<std::byte>(x);
  }
}

std::vector<double> time_raw(RawEchoClient& c, std::size_t size, std::size_t reps, std::size_t warmups) {
  fill_pattern(c.input().first(size), size);
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t i = 0; i < warmups + reps; ++i) {
    stamp(c.input(), size, i);
    auto t0 = SteadyClock::now();
    c.echo(size);
    double t = ns_since(t0);
    if (std::memcmp(c.input().data(), c.output().data(), size) != 0) fail(Errc::invariant_violation, "raw echo corrupted");
    if (i >= warmups) samples.push_back(t);
  }
  return samples;
}

LatencySummary summary_of(LatencyMode mode, std::size_t size, std::vector<double> samples, double level) {
  LatencySummary s;
  s.mode = mode;
  s.size = size;
  s.stats = summarize(std::move(samples), level);
  return s;
}

client::ModeHint hint_for(LatencyMode m) {
  return m == LatencyMode::hot ? client::ModeHint::always_hot : client::ModeHint::always_warm;
}

LatencySummary run_invoker_latency(LocalCluster& cluster, LatencyMode mode, const LatencyOptions& o) {
  client::Invoker inv(cluster.invoker_options(false));
  auto payload = static_cast<std::uint32_t>(std::max<std::size_t>(o.size, 1));
  inv.allocate(functions::demo_submission(), {.workers = 1, .max_payload = payload, .hint = hint_for(mode)});
  auto in = inv.input(payload);
  auto out = inv.output(payload);
  auto samples = time_invocations(inv, in, out, o.size, o.reps, o.warmups);
  inv.deallocate();
  wait_for_teardown(cluster);
  return summary_of(mode, o.size, std::move(samples), o.level);
}

LatencySummary run_raw_latency(const LatencyOptions& o) {
  auto payload = std::max<std::size_t>(o.size, 1);
  RawEchoServer server(listen_for(o.backend), payload);
  RawEchoClient client(server.address(), payload);
  auto samples = time_raw(client, o.size, o.reps, o.warmups);
  return summary_of(LatencyMode::raw_transport, o.size, std::move(samples), o.level);
}

ClusterOptions stack_options(transport::Backend backend, std::uint32_t cores) {
  ClusterOptions c;
  c.backend = backend;
  c.executor_cores = {cores};
  c.executor_memory_mb = 64 * std::max<std::uint32_t>(cores, 1) * 2;
  return c;
}

}  // namespace

const char* to_string(LatencyMode m) noexcept {
  switch (m) {
    case LatencyMode::raw_transport: return "raw_transport";
    case LatencyMode::hot: return "hot";
    case LatencyMode::warm: return "warm";
  }
  return "?";
}

const char* to_string(transport::Backend b) noexcept { return b == transport::Backend::loopback ? "loopback" : "tcp"; }

transport::Backend parse_backend(std::string_view s) {
  if (s == "loopback") return transport::Backend::loopback;
  if (s == "tcp") return transport::Backend::tcp;
  fail(Errc::usage, "backend must be loopback or tcp");
}

Record LatencySummary::record(transport::Backend backend) const {
  Record r;
  r.set("bench", "latency")
      .set("backend", to_string(backend))
      .set("mode", to_string(mode))
      .set("size", static_cast<std::uint64_t>(size))
      .set("reps", static_cast<std::uint64_t>(stats.n))
      .set("median_ns", stats.median)
      .set("mean_ns", stats.mean)
      .set("p99_ns", stats.p99)
      .set("ci_low_ns", stats.ci_low)
      .set("ci_high_ns", stats.ci_high)
      .set("degenerate", stats.degenerate);
  return r;
}

std::vector<double> time_invocations(client::Invoker& inv, client::InputBuffer& in, client::OutputBuffer& out,
                                     std::size_t size, std::size_t reps, std::size_t warmups) {
  fill_pattern(in.bytes().first(size), size);
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t i = 0; i < warmups + reps; ++i) {
    stamp(in.bytes(), size, i);
    auto t0 = SteadyClock::now();
    auto r = inv.submit(functions::kEcho, in, size, out).get(client::WaitMode::busy);
    double t = ns_since(t0);
    if (r.status != ResultStatus::ok || r.byte_len != size)
      fail(Errc::invariant_violation, "echo returned " + std::string(protocol::to_string(r.status)));
    if (std::memcmp(in.bytes().data(), out.bytes().data(), size) != 0)
      fail(Errc::invariant_violation, "echo payload differs");
    if (i >= warmups) samples.push_back(t);
  }
  return samples;
}

LatencySummary bench_latency(LatencyMode mode, const LatencyOptions& o) {
  if (o.reps == 0) fail(Errc::usage, "reps must be positive");
  if (mode == LatencyMode::raw_transport) return run_raw_latency(o);
  LocalCluster cluster(stack_options(o.backend, 1));
  return run_invoker_latency(cluster, mode, o);
}

PairedLatency bench_latency_paired(const LatencyOptions& o) {
  if (o.reps == 0) fail(Errc::usage, "reps must be positive");
  LocalCluster cluster(stack_options(o.backend, 1));
  PairedLatency p;
  p.raw = run_raw_latency(o);
  p.hot = run_invoker_latency(cluster, LatencyMode::hot, o);
  p.warm = run_invoker_latency(cluster, LatencyMode::warm, o);
  return p;
}

std::string ColdSummary::largest_step() const {
  std::pair<double, const char*> steps[] = {{connect_manager.median, "connect_manager"},
                                            {lease_grant.median, "lease_grant"},
                                            {submit_code.median, "submit_code"},
                                            {spawn_workers.median, "spawn_workers"},
                                            {first_invocation.median, "first_invocation"}};
  return std::max_element(std::begin(steps), std::end(steps),
                          [](const auto& a, const auto& b) { return a.first < b.first; })
      ->second;
}

ColdSummary bench_cold(const ColdOptions& o) {
  if (o.trials == 0) fail(Errc::usage, "trials must be positive");
  auto copts = stack_options(o.backend, 2);
  copts.sandbox = o.sandbox;
  copts.sandbox_binary = o.sandbox_binary;
  LocalCluster cluster(copts);
  auto code = functions::demo_submission();

  ColdSummary s;
  for (std::size_t t = 0; t < o.trials; ++t) {
    client::Invoker inv(cluster.invoker_options(false));
    auto bd = inv.allocate(code, {.workers = 1, .max_payload = 4096, .hint = client::ModeHint::warm_ok});
    auto in = inv.input(64);
    auto out = inv.output(64);
    auto t0 = SteadyClock::now();
    auto r = inv.submit(functions::kEcho, in, 64, out).get(client::WaitMode::busy);
    double first = ns_since(t0);
    if (r.status != ResultStatus::ok) fail(Errc::invariant_violation, "first invocation failed");
    inv.deallocate();
    wait_for_teardown(cluster);
    s.trials.push_back({static_cast<double>(bd.connect.count()), static_cast<double>(bd.lease.count()),
                        static_cast<double>(bd.submit_code.count()), static_cast<double>(bd.spawn_workers.count()),
                        first});
  }
  auto column = [&](double ColdBreakdown::*f) {
    std::vector<double> v;
    for (auto& t : s.trials) v.push_back(t.*f);
    return summarize(std::move(v));
  };
  s.connect_manager = column(&ColdBreakdown::connect_manager);
  s.lease_grant = column(&ColdBreakdown::lease_grant);
  s.submit_code = column(&ColdBreakdown::submit_code);
  s.spawn_workers = column(&ColdBreakdown::spawn_workers);
  s.first_invocation = column(&ColdBreakdown::first_invocation);
  std::vector<double> totals;
  for (auto& t : s.trials) totals.push_back(t.total());
  s.total = summarize(std::move(totals));
  return s;
}

std::vector<ParallelPoint> bench_parallel(const ParallelOptions& o) {
  if (o.workers.empty() || o.reps == 0) fail(Errc::usage, "need worker counts and reps");
  for (auto n : o.workers)
    if (n == 0) fail(Errc::usage, "worker count must be positive");
  auto max_n = *std::max_element(o.workers.begin(), o.workers.end());
  auto payload = std::max<std::size_t>(o.size, 1);
  LocalCluster cluster(stack_options(o.backend, max_n));
  RawEchoServer raw_server(listen_for(o.backend), payload);

  std::vector<ParallelPoint> points;
  for (auto n : o.workers) {
    ParallelPoint p;
    p.workers = n;
    p.size = o.size;

    client::Invoker inv(cluster.invoker_options(false));
    inv.allocate(functions::demo_submission(),
                 {.workers = n, .max_payload = static_cast<std::uint32_t>(payload), .hint = o.hint});
    std::vector<client::InputBuffer> ins;
    std::vector<client::OutputBuffer> outs;
    for (std::uint32_t k = 0; k < n; ++k) {
      ins.push_back(inv.input(payload));
      outs.push_back(inv.output(payload));
      fill_pattern(ins.back().bytes().first(o.size), k + 1);
    }
    std::vector<double> batch, per;
    double busy = 0;
    std::vector<client::InvocationFuture> futures(n);
    for (std::size_t i = 0; i < o.warmups + o.reps; ++i) {
      auto t0 = SteadyClock::now();
      for (std::uint32_t k = 0; k < n; ++k) futures[k] = inv.submit(functions::kEcho, ins[k], o.size, outs[k]);
      for (auto& f : futures) {
        auto r = f.get(client::WaitMode::busy);
        if (r.status != ResultStatus::ok || r.byte_len != o.size) fail(Errc::invariant_violation, "parallel echo failed");
      }
      double t = ns_since(t0);
      if (i >= o.warmups) {
        batch.push_back(t);
        per.push_back(t / n);
        busy += t;
      }
    }
    for (std::uint32_t k = 0; k < n; ++k) {
      if (std::memcmp(ins[k].bytes().data(), outs[k].bytes().data(), o.size) != 0)
        fail(Errc::invariant_violation, "parallel echo payload differs");
    }
    inv.deallocate();
    wait_for_teardown(cluster);
    p.batch = summarize(std::move(batch));
    p.per_invocation = summarize(std::move(per));
    p.throughput = static_cast<double>(o.size) * n * static_cast<double>(o.reps) / (busy * 1e-9);

    std::vector<std::unique_ptr<RawEchoClient>> raws;
    for (std::uint32_t k = 0; k < n; ++k) raws.push_back(std::make_unique<RawEchoClient>(raw_server.address(), payload));
    double raw_busy = 0;
    for (std::size_t i = 0; i < o.warmups + o.reps; ++i) {
      auto t0 = SteadyClock::now();
      for (auto& c : raws) c->post(o.size);
      for (auto& c : raws) {
        while (!c->poll()) std::this_thread::yield();
      }
      if (i >= o.warmups) raw_busy += ns_since(t0);
    }
    p.raw_throughput = static_cast<double>(o.size) * n * static_cast<double>(o.reps) / (raw_busy * 1e-9);
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<BandwidthPoint> bench_bandwidth(const BandwidthOptions& o) {
  if (o.sizes.empty() || o.reps == 0) fail(Errc::usage, "need sizes and reps");
  auto max_size = std::max<std::size_t>(*std::max_element(o.sizes.begin(), o.sizes.end()), 1);
  LocalCluster cluster(stack_options(o.backend, 1));
  RawEchoServer raw_server(listen_for(o.backend), max_size);
  RawEchoClient raw(raw_server.address(), max_size);

  client::Invoker inv(cluster.invoker_options(false));
  inv.allocate(functions::demo_submission(),
               {.workers = 1, .max_payload = static_cast<std::uint32_t>(max_size), .hint = client::ModeHint::always_hot});
  auto in = inv.input(max_size);
  auto out = inv.output(max_size);

  std::vector<BandwidthPoint> points;
  for (auto size : o.sizes) {
    BandwidthPoint p;
    p.size = size;
    p.latency = summarize(time_invocations(inv, in, out, size, o.reps, o.warmups));
    p.raw_latency = summarize(time_raw(raw, size, o.reps, o.warmups));
    p.throughput = static_cast<double>(size) / (p.latency.median * 1e-9);
    p.raw_throughput = static_cast<double>(size) / (p.raw_latency.median * 1e-9);
    points.push_back(p);
  }
  inv.deallocate();
  return points;
}

}  // namespace spotfaas::bench
