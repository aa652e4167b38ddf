#include "spotfaas/bench/demos.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <optional>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "spotfaas/common/error.hpp"
#include "spotfaas/functions/demo.hpp"

namespace spotfaas::bench {

using protocol::ResultStatus;
using SteadyClock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kTupleBytes = 6 * sizeof(double);
constexpr std::size_t kMatrixHeader = 16;

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

// Runs body(begin, end) over [begin, end) split across `threads` threads.
template <typename F>
void parallel_range(std::size_t begin, std::size_t end, std::uint32_t threads, F body) {
  if (end <= begin) return;
  threads = std::max<std::uint32_t>(1, std::min<std::uint32_t>(threads, static_cast<std::uint32_t>(end - begin)));
  if (threads == 1) {
    body(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  auto chunk = (end - begin + threads - 1) / threads;
  for (std::uint32_t t = 0; t < threads; ++t) {
    auto b = begin + t * chunk, e = std::min(end, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& th : pool) th.join();
}

struct Chunk {
  std::size_t begin = 0, end = 0;
};

std::vector<Chunk> split_even(std::size_t begin, std::size_t end, std::uint32_t parts) {
  std::vector<Chunk> out;
  if (end <= begin || parts == 0) return out;
  auto n = end - begin;
  parts = std::min<std::uint32_t>(parts, static_cast<std::uint32_t>(n));
  for (std::uint32_t i = 0; i < parts; ++i) out.push_back({begin + n * i / parts, begin + n * (i + 1) / parts});
  return out;
}

void expect_ok(const client::InvocationResult& r, std::size_t bytes, const char* what) {
  if (r.status != ResultStatus::ok)
    fail(Errc::remote_error, std::string(what) + " returned " + protocol::to_string(r.status));
  if (r.byte_len != bytes) fail(Errc::invariant_violation, std::string(what) + " returned an unexpected length");
}

void allocate_for(client::Invoker& inv, const protocol::CodeSubmission& code, std::uint32_t workers,
                  std::size_t max_payload) {
  inv.allocate(code, {.workers = workers,
                      .max_payload = static_cast<std::uint32_t>(std::max<std::size_t>(max_payload, 1)),
                      .hint = client::ModeHint::always_hot});
}

void blackscholes_demo(client::Invoker& inv, const protocol::CodeSubmission& code, const OffloadDemoOptions& o,
                       std::uint32_t workers, OffloadDemoResult& res) {
  const std::size_t n = o.problem_size ? o.problem_size : (1u << 16);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> price(50, 150), rate(0.01, 0.08), vol(0.1, 0.5), mat(0.1, 2.0);
  std::vector<functions::OptionParams> opts(n);
  for (auto& p : opts) p = {price(rng), price(rng), rate(rng), vol(rng), mat(rng), (rng() & 1) != 0};
  auto encoded = functions::encode_options(opts);

  auto price_range = [&](std::vector<double>& out, std::size_t b, std::size_t e) {
    functions::blackscholes(encoded.data() + b * kTupleBytes, static_cast<std::uint32_t>((e - b) * kTupleBytes),
                            out.data() + b);
  };

  std::vector<double> local(n);
  auto t0 = SteadyClock::now();
  parallel_range(0, n, o.local_threads, [&](std::size_t b, std::size_t e) { price_range(local, b, e); });
  res.local_seconds = seconds_since(t0);

  const auto remote = static_cast<std::size_t>(std::floor(o.split * static_cast<double>(n)));
  auto chunks = split_even(0, remote, workers);
  std::size_t largest = 0;
  for (auto& c : chunks) largest = std::max(largest, c.end - c.begin);
  std::vector<double> hybrid(n);
  if (!chunks.empty()) allocate_for(inv, code, static_cast<std::uint32_t>(chunks.size()), largest * kTupleBytes);
  std::vector<client::InputBuffer> ins;
  std::vector<client::OutputBuffer> outs;
  for (auto& c : chunks) {
    ins.push_back(inv.input(largest * kTupleBytes));
    outs.push_back(inv.output(largest * sizeof(double)));
    std::memcpy(ins.back().bytes().data(), encoded.data() + c.begin * kTupleBytes, (c.end - c.begin) * kTupleBytes);
  }

  t0 = SteadyClock::now();
  std::vector<client::InvocationFuture> futures;
  for (std::size_t i = 0; i < chunks.size(); ++i)
    futures.push_back(inv.submit(functions::kBlackScholes, ins[i], (chunks[i].end - chunks[i].begin) * kTupleBytes, outs[i]));
  parallel_range(remote, n, o.local_threads, [&](std::size_t b, std::size_t e) { price_range(hybrid, b, e); });
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    auto count = chunks[i].end - chunks[i].begin;
    expect_ok(futures[i].get(client::WaitMode::busy), count * sizeof(double), "blackscholes");
    std::memcpy(hybrid.data() + chunks[i].begin, outs[i].bytes().data(), count * sizeof(double));
  }
  res.hybrid_seconds = seconds_since(t0);
  res.remote_tasks = remote;
  res.correct = std::memcmp(local.data(), hybrid.data(), n * sizeof(double)) == 0;
  res.detail = res.correct ? "hybrid prices equal local prices bit for bit" : "hybrid prices differ";
}

// Rows [rb, re) of A*B with the function's i-k-j accumulation order.
void mmm_rows(std::size_t n, const std::vector<double>& a, const std::vector<double>& b, double* c, std::size_t rb,
              std::size_t re) {
  std::fill(c + rb * n, c + re * n, 0.0);
  for (std::size_t i = rb; i < re; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double aik = a[i * n + k];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
    }
  }
}

std::vector<double> random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> m(n * n);
  for (auto& v : m) v = d(rng);
  return m;
}

void mmm_demo(client::Invoker& inv, const protocol::CodeSubmission& code, const OffloadDemoOptions& o,
              std::uint32_t workers, OffloadDemoResult& res) {
  const std::size_t n = o.problem_size ? o.problem_size : 128;
  std::mt19937_64 rng(o.seed);
  auto a = random_matrix(n, rng);
  auto b = random_matrix(n, rng);

  std::vector<double> local(n * n);
  auto t0 = SteadyClock::now();
  parallel_range(0, n, o.local_threads, [&](std::size_t rb, std::size_t re) { mmm_rows(n, a, b, local.data(), rb, re); });
  res.local_seconds = seconds_since(t0);

  const auto remote = static_cast<std::size_t>(std::llround(o.split * static_cast<double>(n)));
  auto chunks = split_even(0, std::min(remote, n), workers);
  const std::size_t payload = kMatrixHeader + 2 * n * n * sizeof(double);
  std::size_t largest = 0;
  for (auto& c : chunks) largest = std::max(largest, c.end - c.begin);
  if (!chunks.empty()) allocate_for(inv, code, static_cast<std::uint32_t>(chunks.size()), payload);
  std::vector<client::InputBuffer> ins;
  std::vector<client::OutputBuffer> outs;
  for (auto& c : chunks) {
    auto enc = functions::encode_mmm(static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(c.begin),
                                     static_cast<std::uint32_t>(c.end), a, b);
    ins.push_back(inv.input(payload));
    outs.push_back(inv.output(largest * n * sizeof(double)));
    std::memcpy(ins.back().bytes().data(), enc.data(), enc.size());
  }

  std::vector<double> hybrid(n * n);
  const std::size_t local_begin = chunks.empty() ? 0 : chunks.back().end;
  t0 = SteadyClock::now();
  std::vector<client::InvocationFuture> futures;
  for (std::size_t i = 0; i < chunks.size(); ++i) futures.push_back(inv.submit(functions::kMmmHalf, ins[i], payload, outs[i]));
  parallel_range(local_begin, n, o.local_threads,
                 [&](std::size_t rb, std::size_t re) { mmm_rows(n, a, b, hybrid.data(), rb, re); });
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    auto bytes = (chunks[i].end - chunks[i].begin) * n * sizeof(double);
    expect_ok(futures[i].get(client::WaitMode::busy), bytes, "mmm_half");
    std::memcpy(hybrid.data() + chunks[i].begin * n, outs[i].bytes().data(), bytes);
  }
  res.hybrid_seconds = seconds_since(t0);
  res.remote_tasks = local_begin;

  auto reference = naive_matmul(n, a, b);
  bool local_ok = std::memcmp(local.data(), reference.data(), n * n * sizeof(double)) == 0;
  bool hybrid_ok = std::memcmp(hybrid.data(), reference.data(), n * n * sizeof(double)) == 0;
  res.correct = local_ok && hybrid_ok;
  res.detail = res.correct ? "hybrid product equals the naive product exactly"
                           : (hybrid_ok ? "local product differs from the naive product"
                                        : "hybrid product differs from the naive product");
}

// One sweep over rows [rb, re), same arithmetic as the function.
void jacobi_rows(std::size_t n, const std::vector<double>& a, const std::vector<double>& b, const double* x, double* out,
                 std::size_t rb, std::size_t re) {
  for (std::size_t i = rb; i < re; ++i) {
    const double* row = a.data() + i * n;
    double sigma = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sigma += row[j] * x[j];
    }
    out[i] = (b[i] - sigma) / row[i];
  }
}

void jacobi_demo(client::Invoker& inv, const protocol::CodeSubmission& code, const OffloadDemoOptions& o,
                 OffloadDemoResult& res) {
  const std::size_t n = o.problem_size ? o.problem_size : 64;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> d(-1, 1), extra(1, 2);
  std::vector<double> a(n * n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      a[i * n + j] = d(rng);
      off += std::abs(a[i * n + j]);
    }
    a[i * n + i] = off + extra(rng);
    b[i] = d(rng);
  }

  std::vector<double> x(n, 0.0), next(n);
  auto t0 = SteadyClock::now();
  std::size_t iterations = 0;
  while (iterations < o.max_iterations && jacobi_residual(n, a, b, x) >= o.tolerance) {
    jacobi_rows(n, a, b, x.data(), next.data(), 0, n);
    x.swap(next);
    ++iterations;
  }
  res.local_seconds = seconds_since(t0);
  res.iterations = iterations;
  res.residual_local = jacobi_residual(n, a, b, x);
  const auto local_x = x;

  // Rows [0, h) go to a single function that caches A and b after the first call.
  const auto h = std::min(n, static_cast<std::size_t>(std::llround(o.split * static_cast<double>(n))));
  const std::size_t full = kMatrixHeader + (n * n + 2 * n) * sizeof(double);
  std::optional<client::InputBuffer> in;
  std::optional<client::OutputBuffer> out;
  std::size_t worker = 0;
  if (h > 0) {
    allocate_for(inv, code, 1, full);
    worker = inv.workers().size() - 1;
    in.emplace(inv.input(full));
    out.emplace(inv.output(h * sizeof(double)));
  }

  std::fill(x.begin(), x.end(), 0.0);
  t0 = SteadyClock::now();
  for (std::size_t it = 0; it < iterations; ++it) {
    std::optional<client::InvocationFuture> future;
    std::uint64_t wire_before = 0;
    std::size_t len = 0;
    if (h > 0) {
      if (it == 0) {
        auto enc = functions::encode_jacobi_full(static_cast<std::uint32_t>(n), 0, static_cast<std::uint32_t>(h), a,
                                                 b, x);
        std::memcpy(in->bytes().data(), enc.data(), enc.size());
        len = enc.size();
      } else {
        std::memcpy(in->bytes().data(), x.data(), n * sizeof(double));
        len = n * sizeof(double);
      }
      wire_before = inv.worker_metrics(worker).bytes_tx;
      future.emplace(inv.submit(functions::kJacobiStep, *in, len, *out));
    }
    jacobi_rows(n, a, b, x.data(), next.data(), h, n);
    if (future) {
      expect_ok(future->get(client::WaitMode::busy), h * sizeof(double), "jacobi_step");
      std::memcpy(next.data(), out->bytes().data(), h * sizeof(double));
      if (it == 0) {
        res.first_request_bytes = len;
      } else {
        res.later_request_bytes.push_back(len);
        res.later_wire_bytes.push_back(inv.worker_metrics(worker).bytes_tx - wire_before);
      }
    }
    x.swap(next);
  }
  res.hybrid_seconds = seconds_since(t0);
  res.remote_tasks = h > 0 ? iterations : 0;
  res.residual_hybrid = jacobi_residual(n, a, b, x);

  bool same = std::memcmp(x.data(), local_x.data(), n * sizeof(double)) == 0;
  bool small_requests = std::all_of(res.later_request_bytes.begin(), res.later_request_bytes.end(),
                                    [&](std::uint64_t v) { return v == n * sizeof(double); });
  res.correct = same && small_requests && res.residual_hybrid < 1e-8;
  if (!same)
    res.detail = "hybrid iterate differs from the local iterate";
  else if (!small_requests)
    res.detail = "a later request carried more than the iterate";
  else if (res.residual_hybrid >= 1e-8)
    res.detail = fmt::format("residual {:.3e} did not reach 1e-8", res.residual_hybrid);
  else
    res.detail = fmt::format("converged in {} iterations, residual {:.3e}", iterations, res.residual_hybrid);
}

}  // namespace

const char* to_string(Demo d) noexcept {
  switch (d) {
    case Demo::blackscholes: return "blackscholes";
    case Demo::mmm: return "mmm";
    case Demo::jacobi: return "jacobi";
  }
  return "?";
}

Demo parse_demo(std::string_view s) {
  if (s == "blackscholes") return Demo::blackscholes;
  if (s == "mmm") return Demo::mmm;
  if (s == "jacobi") return Demo::jacobi;
  fail(Errc::usage, "unknown demo: " + std::string(s));
}

Record OffloadDemoResult::record() const {
  Record r;
  r.set("kind", "offload");
  r.set("demo", to_string(demo));
  r.set("local_s", local_seconds);
  r.set("hybrid_s", hybrid_seconds);
  r.set("correct", correct);
  r.set("remote_tasks", static_cast<std::uint64_t>(remote_tasks));
  if (demo == Demo::jacobi) {
    r.set("iterations", static_cast<std::uint64_t>(iterations));
    r.set("residual_local", residual_local);
    r.set("residual_hybrid", residual_hybrid);
    r.set("first_request_bytes", first_request_bytes);
    if (!later_request_bytes.empty()) {
      r.set("later_request_bytes", *std::max_element(later_request_bytes.begin(), later_request_bytes.end()));
      r.set("later_wire_bytes", *std::max_element(later_wire_bytes.begin(), later_wire_bytes.end()));
    }
  }
  return r;
}

OffloadDemoResult run_offload_demo(client::Invoker& inv, const protocol::CodeSubmission& code,
                                   const OffloadDemoOptions& options) {
  if (options.split < 0 || options.split > 1) fail(Errc::invalid_argument, "split must be in [0, 1]");
  if (options.local_threads == 0) fail(Errc::invalid_argument, "local_threads must be positive");
  OffloadDemoResult res;
  res.demo = options.demo;
  const auto workers = options.remote_workers ? options.remote_workers : options.local_threads;
  switch (options.demo) {
    case Demo::blackscholes: blackscholes_demo(inv, code, options, workers, res); break;
    case Demo::mmm: mmm_demo(inv, code, options, workers, res); break;
    case Demo::jacobi: jacobi_demo(inv, code, options, res); break;
  }
  return res;
}

std::vector<double> naive_matmul(std::size_t n, const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0;
      for (std::size_t k = 0; k < n; ++k) sum += a[i * n + k] * b[k * n + j];
      c[i * n + j] = sum;
    }
  }
  return c;
}

double jacobi_residual(std::size_t n, const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& x) {
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = -b[i];
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

}  // namespace spotfaas::bench
