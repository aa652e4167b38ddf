#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/binomial.hpp>

#include "doctest.h"
#include "spotfaas/bench/cluster.hpp"
#include "spotfaas/bench/demos.hpp"
#include "spotfaas/bench/records.hpp"
#include "spotfaas/bench/runs.hpp"
#include "spotfaas/bench/stats.hpp"
#include "spotfaas/functions/registry.hpp"

using namespace spotfaas;
using namespace spotfaas::bench;

namespace {

Errc error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc{};
}

// Lower index from the exact binomial tail: largest k with P(K <= k) <= alpha/2.
std::pair<std::size_t, std::size_t> oracle_ci(std::size_t n, double level) {
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
  double tail = (1 - level) / 2;
  std::ptrdiff_t best = -1;
  for (std::size_t k = 0; k < n; ++k) {
    if (boost::math::cdf(dist, static_cast<double>(k)) <= tail)
      best = static_cast<std::ptrdiff_t>(k);
    else
      break;
  }
  if (best < 0) return {0, n - 1};
  return {static_cast<std::size_t>(best), n - 1 - static_cast<std::size_t>(best)};
}

std::vector<double> iota_samples(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

}  // namespace

TEST_CASE("ci_median saturates for tiny samples") {
  auto v = iota_samples(3);
  auto [lo, hi] = ci_median(v, 0.99);
  CHECK(lo == 0);
  CHECK(hi == 2);
}

TEST_CASE("ci_median rejects unsorted and empty input") {
  std::vector<double> v = {1, 3, 2};
  CHECK(error_of([&] { ci_median(v); }) == Errc::invalid_argument);
  CHECK(error_of([] { ci_median(std::span<const double>{}); }) == Errc::insufficient_samples);
}

TEST_CASE("ci_median matches the exact binomial tail") {
  for (double level : {0.9, 0.95, 0.99}) {
    for (std::size_t n = 1; n <= 300; ++n) {
      auto v = iota_samples(n);
      CHECK_MESSAGE(ci_median(v, level) == oracle_ci(n, level), "n=" << n << " level=" << level);
    }
    for (std::size_t n : {1000u, 4321u, 10000u}) {
      auto v = iota_samples(n);
      CHECK(ci_median(v, level) == oracle_ci(n, level));
    }
  }
}

TEST_CASE("ci_median half-width scales as 1.29 sqrt(n)") {
  const std::size_t n = 10000;
  auto v = iota_samples(n);
  auto [lo, hi] = ci_median(v, 0.99);
  double half = (static_cast<double>(hi) - static_cast<double>(lo)) / 2;
  CHECK(half / std::sqrt(static_cast<double>(n)) == doctest::Approx(1.29).epsilon(0.02));
  CHECK(lo < n / 2);
  CHECK(hi >= n / 2);
}

TEST_CASE("binomial_half_cdf agrees with boost") {
  for (std::size_t n : {1u, 7u, 64u, 999u, 10000u}) {
    boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
    for (std::size_t k = 0; k < n; k += std::max<std::size_t>(1, n / 37)) {
      double want = boost::math::cdf(dist, static_cast<double>(k));
      CHECK(binomial_half_cdf(n, k) == doctest::Approx(want).epsilon(1e-9));
    }
  }
}

TEST_CASE("summary orders its fields and flags degenerate intervals") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> d(0, 1);
  std::vector<double> s(2000);
  for (auto& x : s) x = d(rng);
  auto st = summarize(s);
  CHECK(st.n == 2000);
  CHECK_FALSE(st.degenerate);
  CHECK(st.min <= st.ci_low);
  CHECK(st.ci_low <= st.median);
  CHECK(st.median <= st.ci_high);
  CHECK(st.ci_high <= st.max);
  CHECK(st.median <= st.p99);

  auto one = summarize({4.5});
  CHECK(one.degenerate);
  CHECK(one.median == 4.5);
  CHECK(one.ci_low == 4.5);
  CHECK(one.ci_high == 4.5);
}

TEST_CASE("records and outputs round-trip through their parser") {
  Record r;
  r.set("kind", "latency").set("size", 1024).set("median", 1.0 / 3.0).set("ok", true).set("neg", -7);
  CHECK(Record::parse(r.str()) == r);
  CHECK(Record::parse(r.str()).number("median") == 1.0 / 3.0);

  BenchOutput out;
  out.records.push_back(r);
  Record r2;
  r2.set("kind", "cold").set("spawn_workers", 0.00123);
  out.records.push_back(r2);
  out.summary.set("ordered", true).set("overhead_ns", 812.25);
  auto text = out.str();
  CHECK(BenchOutput::parse(text) == out);
  CHECK(BenchOutput::parse("# comment\n\n" + text) == out);

  CHECK(error_of([] { Record().set("a b", "c"); }) == Errc::invalid_argument);
  CHECK(error_of([] { Record().set("a", "c=d"); }) == Errc::invalid_argument);
}

TEST_CASE("latency summaries round-trip and paired runs report all modes") {
  LatencyOptions o;
  o.reps = 300;
  o.warmups = 20;
  o.size = 64;
  auto paired = bench_latency_paired(o);
  for (auto* s : {&paired.raw, &paired.hot, &paired.warm}) {
    CHECK(s->stats.n == 300);
    CHECK(s->stats.ci_low <= s->stats.median);
    CHECK(s->stats.median <= s->stats.ci_high);
    auto rec = s->record(o.backend);
    CHECK(Record::parse(rec.str()) == rec);
  }
}

TEST_CASE("benchmarks reject empty configurations") {
  ColdOptions cold;
  cold.trials = 0;
  CHECK(error_of([&] { bench_cold(cold); }) == Errc::usage);
  ParallelOptions par;
  par.workers = {0};
  CHECK(error_of([&] { bench_parallel(par); }) == Errc::usage);
  CHECK(error_of([] { parse_backend("rdma"); }) == Errc::usage);
  CHECK(error_of([] { parse_demo("fft"); }) == Errc::usage);
}

TEST_CASE("offload demos match their local references") {
  LocalCluster cluster;
  auto code = functions::demo_submission();

  SUBCASE("blackscholes, half remote") {
    client::Invoker inv(cluster.invoker_options());
    auto r = run_offload_demo(inv, code, {.demo = Demo::blackscholes, .split = 0.5, .local_threads = 2, .problem_size = 5000});
    CHECK_MESSAGE(r.correct, r.detail);
    CHECK(r.remote_tasks == 2500);
  }
  SUBCASE("blackscholes, nothing remote") {
    client::Invoker inv(cluster.invoker_options());
    auto r = run_offload_demo(inv, code, {.demo = Demo::blackscholes, .split = 0.0, .problem_size = 1000});
    CHECK(r.correct);
    CHECK(r.remote_tasks == 0);
    CHECK(inv.workers().empty());
  }
  SUBCASE("mmm halves") {
    client::Invoker inv(cluster.invoker_options());
    auto r = run_offload_demo(inv, code, {.demo = Demo::mmm, .split = 0.5, .problem_size = 48});
    CHECK_MESSAGE(r.correct, r.detail);
    CHECK(r.remote_tasks == 24);
  }
  SUBCASE("jacobi 4x4 over 25 iterations") {
    client::Invoker inv(cluster.invoker_options());
    auto r = run_offload_demo(inv, code,
                              {.demo = Demo::jacobi, .split = 0.5, .problem_size = 4, .max_iterations = 25, .tolerance = 0});
    CHECK(r.iterations == 25);
    CHECK_MESSAGE(r.correct, r.detail);
    CHECK(r.residual_hybrid < 1e-8);
    CHECK(r.first_request_bytes == 16 + (16 + 8) * 8);
    REQUIRE(r.later_request_bytes.size() == 24);
    for (auto v : r.later_request_bytes) CHECK(v == 32);
  }
  SUBCASE("jacobi 64x64 sends only the iterate after the first call") {
    client::Invoker inv(cluster.invoker_options());
    auto r = run_offload_demo(inv, code, {.demo = Demo::jacobi, .split = 0.5, .problem_size = 64});
    CHECK_MESSAGE(r.correct, r.detail);
    CHECK(r.residual_local < 1e-8);
    CHECK(r.residual_hybrid == r.residual_local);
    REQUIRE(r.iterations > 1);
    REQUIRE(r.later_request_bytes.size() == r.iterations - 1);
    for (std::size_t i = 0; i < r.later_request_bytes.size(); ++i) {
      CHECK(r.later_request_bytes[i] == 64 * 8);
      CHECK(r.later_wire_bytes[i] == 64 * 8 + 12);
    }
    auto rec = r.record();
    CHECK(Record::parse(rec.str()) == rec);
  }
}

TEST_CASE("offload demos run from the code object too") {
  LocalCluster cluster;
  client::Invoker inv(cluster.invoker_options());
  auto code = functions::demo_code_object_submission(SPOTFAAS_DEMO_OBJECT);
  auto r = run_offload_demo(inv, code, {.demo = Demo::mmm, .split = 0.5, .problem_size = 32});
  CHECK_MESSAGE(r.correct, r.detail);
}
