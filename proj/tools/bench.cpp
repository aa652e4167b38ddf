#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/bench/cluster.hpp"
#include "spotfaas/bench/demos.hpp"
#include "spotfaas/bench/runs.hpp"
#include "spotfaas/functions/registry.hpp"

namespace {

using namespace spotfaas;
using namespace spotfaas::bench;

// Exit codes
constexpr int kViolation = 2;
constexpr int kRoundTrip = 3;

void add_stats(Record& r, const std::string& prefix, const Stats& s) {
  r.set(prefix + "median", s.median)
      .set(prefix + "mean", s.mean)
      .set(prefix + "p99", s.p99)
      .set(prefix + "ci_low", s.ci_low)
      .set(prefix + "ci_high", s.ci_high);
}

struct Common {
  std::string backend;
  std::string out;
};

BenchOutput run_latency(const Common& c, LatencyOptions o, bool& violated) {
  o.backend = parse_backend(c.backend.empty() ? "loopback" : c.backend);
  auto p = bench_latency_paired(o);
  BenchOutput out;
  for (auto* s : {&p.raw, &p.hot, &p.warm}) out.records.push_back(s->record(o.backend));
  violated = !p.ordered();
  out.summary.set("bench", "latency")
      .set("ordered", p.ordered())
      .set("dispatch_overhead_ns", p.dispatch_overhead_ns())
      .set("warm_minus_hot_ns", p.warm.stats.median - p.hot.stats.median);
  return out;
}

BenchOutput run_cold(const Common& c, ColdOptions o, const std::string& sandbox, bool& violated) {
  o.backend = parse_backend(c.backend.empty() ? "tcp" : c.backend);
  o.sandbox = executor::parse_sandbox_kind(sandbox);
  auto s = bench_cold(o);
  BenchOutput out;
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    const auto& t = s.trials[i];
    Record r;
    r.set("bench", "cold")
        .set("trial", static_cast<std::uint64_t>(i))
        .set("connect_manager_ns", t.connect_manager)
        .set("lease_grant_ns", t.lease_grant)
        .set("submit_code_ns", t.submit_code)
        .set("spawn_workers_ns", t.spawn_workers)
        .set("first_invocation_ns", t.first_invocation)
        .set("total_ns", t.total());
    out.records.push_back(std::move(r));
  }
  out.summary.set("bench", "cold").set("backend", c.backend.empty() ? "tcp" : c.backend).set("sandbox", sandbox);
  out.summary.set("trials", static_cast<std::uint64_t>(s.trials.size()));
  add_stats(out.summary, "connect_manager_", s.connect_manager);
  add_stats(out.summary, "lease_grant_", s.lease_grant);
  add_stats(out.summary, "submit_code_", s.submit_code);
  add_stats(out.summary, "spawn_workers_", s.spawn_workers);
  add_stats(out.summary, "first_invocation_", s.first_invocation);
  add_stats(out.summary, "total_", s.total);
  out.summary.set("largest_step", s.largest_step());
  violated = o.sandbox == executor::SandboxKind::process && s.largest_step() != "spawn_workers";
  return out;
}

BenchOutput run_parallel(const Common& c, ParallelOptions o) {
  o.backend = parse_backend(c.backend.empty() ? "tcp" : c.backend);
  auto points = bench_parallel(o);
  BenchOutput out;
  double lo = 0, hi = 0;
  for (const auto& p : points) {
    Record r;
    r.set("bench", "parallel").set("workers", p.workers).set("size", static_cast<std::uint64_t>(p.size));
    add_stats(r, "batch_ns_", p.batch);
    add_stats(r, "per_invocation_ns_", p.per_invocation);
    r.set("throughput_Bps", p.throughput).set("raw_throughput_Bps", p.raw_throughput);
    out.records.push_back(std::move(r));
    lo = lo == 0 ? p.per_invocation.median : std::min(lo, p.per_invocation.median);
    hi = std::max(hi, p.per_invocation.median);
  }
  const auto& last = points.back();
  out.summary.set("bench", "parallel")
      .set("per_invocation_spread", lo > 0 ? (hi - lo) / lo : 0.0)
      .set("throughput_ratio_at_max", last.raw_throughput > 0 ? last.throughput / last.raw_throughput : 0.0);
  return out;
}

BenchOutput run_bandwidth(const Common& c, BandwidthOptions o) {
  o.backend = parse_backend(c.backend.empty() ? "tcp" : c.backend);
  auto points = bench_bandwidth(o);
  BenchOutput out;
  double peak = 0, raw_peak = 0;
  for (const auto& p : points) {
    Record r;
    r.set("bench", "bandwidth").set("size", static_cast<std::uint64_t>(p.size));
    add_stats(r, "latency_ns_", p.latency);
    add_stats(r, "raw_latency_ns_", p.raw_latency);
    r.set("throughput_Bps", p.throughput).set("raw_throughput_Bps", p.raw_throughput);
    out.records.push_back(std::move(r));
    peak = std::max(peak, p.throughput);
    raw_peak = std::max(raw_peak, p.raw_throughput);
  }
  out.summary.set("bench", "bandwidth").set("peak_Bps", peak).set("raw_peak_Bps", raw_peak);
  return out;
}

BenchOutput run_offload(const Common& c, OffloadDemoOptions o, const std::string& demo, const std::string& object,
                        bool& violated) {
  o.demo = parse_demo(demo);
  ClusterOptions co;
  co.backend = parse_backend(c.backend.empty() ? "loopback" : c.backend);
  co.executor_cores = {std::max<std::uint32_t>(o.remote_workers ? o.remote_workers : o.local_threads, 1)};
  LocalCluster cluster(co);
  client::Invoker inv(cluster.invoker_options());
  auto code = object.empty() ? functions::demo_submission() : functions::demo_code_object_submission(object);
  auto r = run_offload_demo(inv, code, o);
  inv.deallocate();
  BenchOutput out;
  out.records.push_back(r.record());
  out.summary.set("bench", "offload")
      .set("demo", demo)
      .set("correct", r.correct)
      .set("speedup", r.hybrid_seconds > 0 ? r.local_seconds / r.hybrid_seconds : 0.0);
  violated = !r.correct;
  if (!r.correct) std::cerr << "bench offload: " << r.detail << "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spotfaas benchmarks"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--backend", common.backend, "loopback or tcp")->check(CLI::IsMember({"loopback", "tcp"}));
    sub->add_option("--out", common.out, "result file; stdout when absent");
  };

  LatencyOptions lat;
  auto* latency = app.add_subcommand("latency", "paired raw, hot and warm echo latency");
  add_common(latency);
  latency->add_option("--size", lat.size, "payload bytes")->capture_default_str();
  latency->add_option("--reps", lat.reps, "timed repetitions")->capture_default_str()->check(CLI::PositiveNumber);
  latency->add_option("--warmups", lat.warmups, "untimed repetitions")->capture_default_str();
  latency->add_option("--level", lat.level, "confidence level of the median interval")
      ->capture_default_str()
      ->check(CLI::Range(0.5, 0.9999));

  ColdOptions cold;
  std::string sandbox = "process";
  auto* cold_cmd = app.add_subcommand("cold", "cold start step breakdown");
  add_common(cold_cmd);
  cold_cmd->add_option("--trials", cold.trials, "fresh leases")->capture_default_str();
  cold_cmd->add_option("--sandbox", sandbox, "process or inline")
      ->capture_default_str()
      ->check(CLI::IsMember({"process", "inline"}));
  cold_cmd->add_option("--sandbox-binary", cold.sandbox_binary, "sandbox host program");

  ParallelOptions par;
  auto* parallel = app.add_subcommand("parallel", "concurrent invocations over N workers");
  add_common(parallel);
  parallel->add_option("--workers", par.workers, "worker counts")->capture_default_str()->delimiter(',');
  parallel->add_option("--size", par.size, "payload bytes")->capture_default_str();
  parallel->add_option("--reps", par.reps, "timed batches")->capture_default_str();
  parallel->add_option("--warmups", par.warmups, "untimed batches")->capture_default_str();

  BandwidthOptions bw;
  auto* bandwidth = app.add_subcommand("bandwidth", "round trip and throughput by payload size");
  add_common(bandwidth);
  bandwidth->add_option("--sizes", bw.sizes, "payload sizes")->capture_default_str()->delimiter(',');
  bandwidth->add_option("--reps", bw.reps, "timed repetitions")->capture_default_str();

  OffloadDemoOptions off;
  std::string demo = "blackscholes", object;
  auto* offload = app.add_subcommand("offload", "local-only versus hybrid demo run");
  add_common(offload);
  offload->add_option("--demo", demo, "blackscholes, mmm or jacobi")
      ->capture_default_str()
      ->check(CLI::IsMember({"blackscholes", "mmm", "jacobi"}));
  offload->add_option("--split", off.split, "fraction sent to functions")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  offload->add_option("--threads", off.local_threads, "local threads")->capture_default_str()->check(CLI::PositiveNumber);
  offload->add_option("--remote-workers", off.remote_workers, "function workers; 0 matches --threads")->capture_default_str();
  offload->add_option("--problem-size", off.problem_size, "options or matrix order; 0 picks a default")->capture_default_str();
  offload->add_option("--code-object", object, "load the demo functions from this shared object");

  CLI11_PARSE(app, argc, argv);

  BenchOutput out;
  bool violated = false;
  try {
    if (*latency) out = run_latency(common, lat, violated);
    if (*cold_cmd) out = run_cold(common, cold, sandbox, violated);
    if (*parallel) out = run_parallel(common, par);
    if (*bandwidth) out = run_bandwidth(common, bw);
    if (*offload) out = run_offload(common, off, demo, object, violated);
  } catch (const Error& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return e.code() == Errc::usage ? 64 : 1;
  }

  auto text = out.str();
  if (!(BenchOutput::parse(text) == out)) {
    std::cerr << "bench: output does not round-trip through its parser\n";
    return kRoundTrip;
  }
  if (common.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(common.out);
    f << text;
    if (!f) {
      std::cerr << "bench: cannot write " << common.out << "\n";
      return 1;
    }
  }
  if (violated) {
    std::cerr << "bench: property violated, see summary\n";
    return kViolation;
  }
  return 0;
}
