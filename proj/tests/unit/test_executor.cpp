#include <cstring>
#include <random>
#include <thread>

#include "doctest.h"
#include "spotfaas/bench/cluster.hpp"
#include "spotfaas/client/invoker.hpp"
#include "spotfaas/executor/accounting.hpp"
#include "spotfaas/executor/shared.hpp"
#include "spotfaas/functions/registry.hpp"

using namespace spotfaas;
using namespace spotfaas::executor;
using namespace std::chrono_literals;
using protocol::ResultStatus;

namespace {

enum Fn : std::uint16_t { echo = 0, trap = 1, throw_error = 2, sleep_ms = 3, spin_ms = 4, fill = 5 };

template <typename Pred>
bool eventually(Pred p, std::chrono::milliseconds limit = 5000ms) {
  auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (p()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return p();
}

Errc error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc{};
}

void put_u32(std::span<std::byte> b, std::uint32_t v) { std::memcpy(b.data(), &v, 4); }

WorkerStats stats_of(bench::LocalCluster& c, const client::Invoker& inv, std::size_t i) {
  auto w = inv.workers().at(i);
  for (std::size_t e = 0; e < c.executor_count(); ++e) {
    if (c.executor(e).executor_id() != w.executor_id) continue;
    auto view = c.executor(e).lease(w.lease_id);
    REQUIRE(view.has_value());
    for (auto& s : view->workers)
      if (s.worker_id == w.worker_id) return s;
  }
  FAIL("worker not found");
  return {};
}

}  // namespace

TEST_CASE("usage totals floor each quantity") {
  auto u = usage_totals(1024, 1500ms, 999'999ns, 2'000'001ns);
  CHECK(u.alloc_milli() == 1500);
  CHECK(u.compute_ms() == 0);
  CHECK(u.hot_ms() == 2);
  CHECK(usage_totals(512, 1s, 0ns, 0ns).alloc_milli() == 500);
  // 3 MiB for 1 ms is 3/1024 milli-GB-s, floored to zero.
  CHECK(usage_totals(3, 1ms, 0ns, 0ns).alloc_milli() == 0);
  CHECK(usage_totals(3000, 1000ms, 0ns, 0ns).alloc_milli() == 2929);
}

TEST_CASE("accountant conserves usage across failed flushes") {
  std::mt19937_64 rng(7);
  Accountant acc;
  UsageTotals truth;
  UsageTotals delivered;
  for (int step = 0; step < 5000; ++step) {
    for (auto& v : truth.v) v += rng() % 50;
    // Stale observations are ignored.
    if (rng() % 4 == 0) {
      UsageTotals stale = truth;
      for (auto& v : stale.v) v = v / 2;
      acc.observe(stale);
    }
    acc.observe(truth);
    bool fail_all = rng() % 3 == 0;
    acc.flush([&](std::size_t slot, std::uint64_t delta) {
      if (fail_all || rng() % 5 == 0) throw Error(Errc::timeout, "add failed");
      delivered.v[slot] += delta;
    });
    for (std::size_t s = 0; s < 3; ++s) {
      REQUIRE(acc.flushed().v[s] == delivered.v[s]);
      REQUIRE(acc.flushed().v[s] + acc.pending().v[s] == truth.v[s]);
    }
  }
  CHECK(acc.flush([&](std::size_t slot, std::uint64_t delta) { delivered.v[slot] += delta; }));
  CHECK(delivered == truth);
  CHECK(acc.idle());
}

TEST_CASE("core table admission never exceeds capacity") {
  SharedRegion region(sizeof(CoreTable));
  auto* t = new (region.data()) CoreTable;
  t->capacity = 3;
  std::atomic<int> peak{0};
  std::vector<std::thread> threads;
  for (int k = 0; k < 6; ++k) {
    threads.emplace_back([&] {
      for (int i = 0; i < 2000; ++i) {
        if (t->try_acquire()) {
          int now = t->in_use.load();
          int prev = peak.load();
          while (now > prev && !peak.compare_exchange_weak(prev, now)) {
          }
          std::this_thread::yield();
          t->release();
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(peak.load() <= 3);
  CHECK(t->in_use.load() == 0);
  CHECK(t->admission_checks.load() == 12000);

  t->force_acquire();
  t->force_acquire();
  t->force_acquire();
  CHECK_FALSE(t->try_acquire());
  t->force_acquire();
  CHECK(t->in_use.load() == 4);
}

TEST_CASE("workers run functions and report function outcomes") {
  bench::LocalCluster cluster({.executor_cores = {2}});
  client::Invoker inv(cluster.invoker_options());
  inv.allocate(functions::testing_submission(), {.workers = 2, .max_payload = 64 * 1024});
  REQUIRE(inv.live_workers() == 2);

  auto in = inv.input(64 * 1024);
  auto out = inv.output(64 * 1024);

  SUBCASE("echo") {
    std::mt19937 rng(3);
    for (std::size_t len : {1u, 100u, 4096u, 65536u}) {
      for (std::size_t i = 0; i < len; ++i) in.bytes()[i] = std::byte(rng());
      auto r = inv.submit(echo, in, len, out).get();
      CHECK(r.status == ResultStatus::ok);
      REQUIRE(r.byte_len == len);
      CHECK(std::memcmp(in.bytes().data(), out.bytes().data(), len) == 0);
    }
  }
  SUBCASE("failures keep the worker usable") {
    CHECK(inv.submit(trap, in, 0, out).get().status == ResultStatus::function_error);
    CHECK(inv.submit(throw_error, in, 0, out).get().status == ResultStatus::function_error);
    CHECK(inv.submit(99, in, 0, out).get().status == ResultStatus::unknown_function);
    in.bytes()[0] = std::byte{42};
    auto r = inv.submit(echo, in, 1, out).get();
    CHECK(r.status == ResultStatus::ok);
    CHECK(out.bytes()[0] == std::byte{42});
  }
  SUBCASE("result larger than the client's output buffer") {
    auto small = inv.output(16);
    put_u32(in.bytes(), 100);
    in.bytes()[4] = std::byte{7};
    for (int i = 0; i < 4; ++i) {
      auto r = inv.submit(fill, in, 5, small).get();
      CHECK(r.status == ResultStatus::output_overflow);
      CHECK(r.byte_len == 0);
    }
    put_u32(in.bytes(), 16);
    auto r = inv.submit(fill, in, 5, small).get();
    CHECK(r.status == ResultStatus::ok);
    CHECK(r.byte_len == 16);
    CHECK(small.bytes()[15] == std::byte{7});
  }
}

TEST_CASE("hot and warm modes") {
  bench::LocalCluster cluster({.executor_cores = {1}, .hot_timeout_ms = 50});
  client::Invoker inv(cluster.invoker_options());
  auto in = inv.input(64);
  auto out = inv.output(64);

  SUBCASE("always hot") {
    inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64, .hint = client::ModeHint::always_hot});
    for (int i = 0; i < 20; ++i) REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
    std::this_thread::sleep_for(100ms);
    auto s = stats_of(cluster, inv, 0);
    CHECK(s.mode == WorkerMode::hot);
    CHECK(s.to_warm == 0);
    CHECK(s.invocations == 20);
    CHECK(s.hot_served >= 19);
    CHECK(s.hot_idle > 50ms);
  }
  SUBCASE("always warm") {
    inv.allocate(functions::testing_submission(),
                 {.workers = 1, .max_payload = 64, .hint = client::ModeHint::always_warm});
    for (int i = 0; i < 20; ++i) REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
    auto s = stats_of(cluster, inv, 0);
    CHECK(s.mode == WorkerMode::warm);
    CHECK(s.warm_served == 20);
    CHECK(s.hot_served == 0);
    CHECK(s.hot_idle == 0ns);
    CHECK(eventually([&] { return cluster.executor(0).core_table().in_use.load() == 0; }));
  }
  SUBCASE("executor default falls back to warm after the timeout") {
    inv.allocate(functions::testing_submission(),
                 {.workers = 1, .max_payload = 64, .hint = client::ModeHint::executor_default});
    REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
    REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
    CHECK(eventually([&] { return stats_of(cluster, inv, 0).mode == WorkerMode::warm; }));
    auto s = stats_of(cluster, inv, 0);
    CHECK(s.to_warm >= 1);
    CHECK(s.hot_served >= 1);
    CHECK(cluster.executor(0).core_table().in_use.load() == 0);
    REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
    CHECK(stats_of(cluster, inv, 0).warm_served >= 2);
  }
}

TEST_CASE("warm invocations are rejected while every core is taken") {
  bench::LocalCluster cluster({.executor_cores = {1}});
  client::Invoker inv(cluster.invoker_options());
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64, .hint = client::ModeHint::always_warm});
  auto in = inv.input(64);
  auto out = inv.output(64);

  auto& cores = cluster.executor(0).core_table();
  cores.force_acquire();
  auto r = inv.submit(echo, in, 8, out).get();
  CHECK(r.status == ResultStatus::rejected);
  CHECK(r.byte_len == 0);
  CHECK(stats_of(cluster, inv, 0).rejections == 1);
  cores.release();
  CHECK(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
}

TEST_CASE("lease expiry tears down the sandbox and restores capacity") {
  bench::LocalCluster cluster({.executor_cores = {2}});
  auto opts = cluster.invoker_options();
  opts.lease_timeout_s = 1;
  client::Invoker inv(opts);
  auto b = inv.allocate(functions::testing_submission(), {.workers = 2, .max_payload = 64});
  auto in = inv.input(64);
  auto out = inv.output(64);
  REQUIRE(inv.submit(echo, in, 4, out).get().status == ResultStatus::ok);

  auto eid = cluster.executor(0).executor_id();
  CHECK(cluster.manager().executor(eid)->free_cores == 0);
  REQUIRE(eventually([&] { return cluster.executor(0).running_sandboxes() == 0; }, 3000ms));
  CHECK(eventually([&] { return cluster.manager().executor(eid)->free_cores == 2; }, 1000ms));
  CHECK(cluster.manager().lease(b.leases.at(0))->state == manager::LeaseState::expired);
  CHECK(error_of([&] { inv.submit(echo, in, 4, out).get(); }) == Errc::lease_expired);
}

TEST_CASE("idle sandboxes are reclaimed") {
  bench::LocalCluster cluster({.executor_cores = {1}, .idle_timeout = 1s});
  client::Invoker inv(cluster.invoker_options());
  auto b = inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64, .hint = client::ModeHint::always_warm});
  auto in = inv.input(64);
  auto out = inv.output(64);
  for (int i = 0; i < 5; ++i) {
    std::this_thread::sleep_for(300ms);
    REQUIRE(inv.submit(echo, in, 4, out).get().status == ResultStatus::ok);
  }
  CHECK(cluster.executor(0).running_sandboxes() == 1);
  CHECK(eventually([&] { return cluster.executor(0).running_sandboxes() == 0; }, 3000ms));
  CHECK(eventually([&] {
    auto l = cluster.manager().lease(b.leases.at(0));
    return l && l->state != manager::LeaseState::active;
  }));
}

TEST_CASE("usage reaches the manager ledger") {
  bench::LocalCluster cluster({.executor_cores = {1}, .executor_memory_mb = 4096, .flush_interval = 60s});
  client::Invoker inv(cluster.invoker_options());
  auto b = inv.allocate(functions::testing_submission(),
                        {.workers = 1, .max_payload = 64, .hint = client::ModeHint::always_warm, .memory_mb = 2048});
  auto in = inv.input(64);
  auto out = inv.output(64);
  put_u32(in.bytes(), 300);
  REQUIRE(inv.submit(sleep_ms, in, 4, out).get().status == ResultStatus::ok);
  REQUIRE(cluster.executor(0).flush_now());

  auto view = cluster.executor(0).lease(b.leases.at(0));
  REQUIRE(view);
  CHECK(view->flushed == view->observed);
  auto u = cluster.manager().usage(inv.client_id());
  CHECK(u.t_a_milli == view->flushed.alloc_milli());
  CHECK(u.t_c_ms == view->flushed.compute_ms());
  CHECK(u.t_h_ms == 0);
  CHECK(u.t_c_ms >= 300);
  CHECK(u.t_c_ms < 400);
  // 2 GiB for at least the 300 ms of compute.
  CHECK(u.t_a_milli >= 600);
  CHECK(cluster.manager().conserved());
}

TEST_CASE("process sandbox over tcp") {
  bench::LocalCluster cluster({.backend = transport::Backend::tcp,
                               .executor_cores = {3},
                               .sandbox = SandboxKind::process,
                               .sandbox_binary = SPOTFAAS_SANDBOX_BINARY});
  client::Invoker inv(cluster.invoker_options());
  auto b = inv.allocate(functions::testing_submission(), {.workers = 2, .max_payload = 4096});
  CHECK(b.spawn_workers > 0ns);
  auto view = cluster.executor(0).lease(b.leases.at(0));
  REQUIRE(view);
  CHECK(view->pid > 0);
  CHECK(view->pid != ::getpid());

  auto in = inv.input(4096);
  auto out = inv.output(4096);
  for (std::size_t i = 0; i < 4096; ++i) in.bytes()[i] = std::byte(i * 13);
  for (int k = 0; k < 10; ++k) {
    auto r = inv.submit(echo, in, 4096, out).get();
    REQUIRE(r.status == ResultStatus::ok);
    CHECK(std::memcmp(in.bytes().data(), out.bytes().data(), 4096) == 0);
  }
  CHECK(inv.submit(throw_error, in, 0, out).get().status == ResultStatus::function_error);

  auto code = functions::demo_code_object_submission(SPOTFAAS_DEMO_OBJECT, 9);
  client::Invoker inv2(cluster.invoker_options());
  inv2.allocate(code, {.workers = 1, .max_payload = 4096});
  auto in2 = inv2.input(64);
  auto out2 = inv2.output(64);
  in2.bytes()[0] = std::byte{5};
  auto r = inv2.submit(0, in2, 1, out2).get();
  CHECK(r.status == ResultStatus::ok);
  CHECK(out2.bytes()[0] == std::byte{5});

  inv.deallocate();
  CHECK(eventually([&] { return cluster.executor(0).running_sandboxes() == 1; }));
}
