#include <cstring>
#include <thread>

#include "doctest.h"
#include "spotfaas/bench/cluster.hpp"
#include "spotfaas/client/invoker.hpp"
#include "spotfaas/functions/registry.hpp"

using namespace spotfaas;
using namespace spotfaas::client;
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

std::size_t executor_index(bench::LocalCluster& c, std::uint64_t executor_id) {
  for (std::size_t i = 0; i < c.executor_count(); ++i)
    if (c.executor(i).executor_id() == executor_id) return i;
  FAIL("unknown executor");
  return 0;
}

}  // namespace

TEST_CASE("mode hints map to hot timeouts") {
  CHECK(hot_timeout_for(ModeHint::always_hot) == protocol::kAlwaysHot);
  CHECK(hot_timeout_for(ModeHint::always_warm) == 0);
  CHECK(hot_timeout_for(ModeHint::executor_default) == protocol::kExecutorDefaultHot);
  auto warm_ok = hot_timeout_for(ModeHint::warm_ok);
  CHECK(warm_ok > 0);
  CHECK(warm_ok < protocol::kExecutorDefaultHot);
}

TEST_CASE("input buffers carry a header slot in front of the data") {
  auto domain = std::make_shared<transport::MemoryDomain>();
  InputBuffer in(domain, 2048);
  CHECK(in.capacity() == 2048);
  CHECK(in.region_size() == 12 + 2048);
  CHECK(in.header_slot().data() + 12 == in.bytes().data());
  CHECK(reinterpret_cast<std::uintptr_t>(in.bytes().data()) % 16 == 0);
  auto m = in.message(100);
  CHECK(m.data() == in.header_slot().data());
  CHECK(m.size() == 112);
  CHECK(in.message(2048).size() == 2060);
  CHECK(error_of([&] { (void)in.message(2049); }) == Errc::buffer_too_small);
  CHECK(in.as<double>().size() == 256);

  OutputBuffer out(domain, 100);
  CHECK(out.remote().length == 100);
  CHECK(error_of([&] { OutputBuffer bad(domain, 0); }) == Errc::invalid_argument);

  InputBuffer moved = std::move(in);
  CHECK(moved.capacity() == 2048);
}

TEST_CASE("future state is single assignment") {
  FutureState s;
  CHECK(s.complete({ResultStatus::ok, 5}));
  CHECK_FALSE(s.fail(Errc::cancelled, "late"));
  CHECK_FALSE(s.complete({ResultStatus::rejected, 0}));
  CHECK(s.phase() == FutureState::Phase::done);
  InvocationFuture f(std::make_shared<FutureState>(), nullptr);
  CHECK_FALSE(f.ready());
}

TEST_CASE("allocation splits across executors and is all or nothing") {
  bench::LocalCluster cluster({.executor_cores = {2, 2}});
  Invoker inv(cluster.invoker_options());

  SUBCASE("four workers over two executors") {
    auto b = inv.allocate(functions::testing_submission(), {.workers = 4, .max_payload = 1024});
    CHECK(b.leases.size() == 2);
    CHECK(inv.live_workers() == 4);
    auto ws = inv.workers();
    CHECK(ws[0].executor_id != ws[2].executor_id);
    CHECK(b.connect > 0ns);
    CHECK(b.lease > 0ns);

    auto in = inv.input(64);
    auto out = inv.output(64);
    for (int i = 0; i < 8; ++i) REQUIRE(inv.submit(echo, in, 4, out).get().status == ResultStatus::ok);
    // round robin over idle workers
    for (auto& w : ws) {
      auto view = cluster.executor(executor_index(cluster, w.executor_id)).lease(w.lease_id);
      for (auto& s : view->workers)
        if (s.worker_id == w.worker_id) CHECK(s.invocations == 2);
    }
  }
  SUBCASE("too many workers leaves nothing behind") {
    CHECK(error_of([&] { inv.allocate(functions::testing_submission(), {.workers = 5}); }) ==
          Errc::insufficient_resources);
    CHECK(inv.live_workers() == 0);
    CHECK(eventually([&] {
      for (auto& e : cluster.manager().executors())
        if (e.free_cores != 2 || e.active_leases != 0) return false;
      return true;
    }));
    CHECK(eventually([&] { return cluster.executor(0).running_sandboxes() + cluster.executor(1).running_sandboxes() == 0; }));
  }
}

TEST_CASE("denied tokens are refused") {
  bench::LocalCluster cluster({.executor_cores = {1}, .verifier = manager::deny_all()});
  Invoker inv(cluster.invoker_options());
  CHECK(error_of([&] { inv.allocate(functions::testing_submission(), {.workers = 1}); }) == Errc::auth_denied);
}

TEST_CASE("manual progress and timed waits") {
  bench::LocalCluster cluster({.executor_cores = {1}});
  Invoker inv(cluster.invoker_options(false));
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64, .hint = ModeHint::always_warm});
  auto in = inv.input(64);
  auto out = inv.output(64);
  put_u32(in.bytes(), 200);
  auto f = inv.submit(sleep_ms, in, 4, out);
  CHECK(inv.pending() == 1);
  CHECK_FALSE(f.wait_for(20ms).has_value());
  CHECK_FALSE(f.ready());
  auto r = f.wait_for(5s, WaitMode::busy);
  REQUIRE(r.has_value());
  CHECK(r->status == ResultStatus::ok);
  CHECK(inv.pending() == 0);

  in.bytes()[0] = std::byte{9};
  auto g = inv.submit(echo, in, 1, out);
  CHECK(eventually([&] {
    inv.progress();
    return g.ready();
  }));
  CHECK(g.get().byte_len == 1);
}

TEST_CASE("requests leave from user memory without staging") {
  bench::LocalCluster cluster({.executor_cores = {1}});
  Invoker inv(cluster.invoker_options());
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 4096});
  auto in = inv.input(4096);
  auto out = inv.output(4096);
  REQUIRE(inv.submit(echo, in, 116, out).get().status == ResultStatus::ok);
  auto m = inv.worker_metrics(0);
  CHECK(m.last_write_source == reinterpret_cast<std::uint64_t>(in.header_slot().data()));
  CHECK(m.writes == 1);
  CHECK(m.inlined_sends == 1);
  REQUIRE(inv.submit(echo, in, 117, out).get().status == ResultStatus::ok);
  CHECK(inv.worker_metrics(0).inlined_sends == 1);
}

TEST_CASE("manager stays off the invocation path") {
  bench::LocalCluster cluster({.executor_cores = {2}});
  Invoker inv(cluster.invoker_options());
  inv.allocate(functions::testing_submission(), {.workers = 2, .max_payload = 64});
  auto in = inv.input(64);
  auto out = inv.output(64);
  auto before = cluster.manager().counters();
  for (int i = 0; i < 1000; ++i) REQUIRE(inv.submit(echo, in, 8, out).get().status == ResultStatus::ok);
  auto after = cluster.manager().counters();
  CHECK(after.client_rx == before.client_rx);
  CHECK(after.executor_rx == before.executor_rx);
  CHECK(after.tx == before.tx);
}

TEST_CASE("deallocate cancels pending work and releases leases") {
  bench::LocalCluster cluster({.executor_cores = {1}});
  Invoker inv(cluster.invoker_options());
  auto b = inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64});
  auto in = inv.input(64);
  auto out = inv.output(64);
  put_u32(in.bytes(), 300);
  auto f = inv.submit(sleep_ms, in, 4, out);
  inv.deallocate();
  CHECK(error_of([&] { f.get(); }) == Errc::cancelled);
  CHECK(inv.live_workers() == 0);
  CHECK(eventually([&] { return cluster.manager().lease(b.leases[0])->state == manager::LeaseState::released; }));
  CHECK(eventually([&] { return cluster.executor(0).running_sandboxes() == 0; }));
  inv.deallocate();
  CHECK(error_of([&] { inv.submit(echo, in, 4, out); }) == Errc::no_endpoints);

  // the same invoker can lease again
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64});
  CHECK(inv.submit(echo, in, 4, out).get().status == ResultStatus::ok);
}

TEST_CASE("failover") {
  bench::LocalCluster cluster({.executor_cores = {1, 1}});
  auto opts = cluster.invoker_options();
  opts.retry_limit = 3;
  Invoker inv(opts);
  inv.allocate(functions::testing_submission(), {.workers = 2, .max_payload = 64, .hint = ModeHint::always_warm});
  REQUIRE(inv.live_workers() == 2);
  auto in = inv.input(64);
  auto out = inv.output(64);

  SUBCASE("one rejection then success") {
    auto first = executor_index(cluster, inv.workers()[0].executor_id);
    auto& cores = cluster.executor(first).core_table();
    cores.force_acquire();
    in.bytes()[0] = std::byte{3};
    auto r = inv.invoke_with_failover(echo, in, 1, out);
    cores.release();
    CHECK(r.attempts == 2);
    CHECK(r.result.status == ResultStatus::ok);
    CHECK(out.bytes()[0] == std::byte{3});
  }
  SUBCASE("broken function exhausts retries") {
    std::string what;
    try {
      inv.invoke_with_failover(trap, in, 0, out);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::retries_exhausted);
      what = e.what();
    }
    CHECK(what.find("after 3 attempts") != std::string::npos);
    std::uint64_t total = 0;
    for (auto& w : inv.workers()) {
      auto view = cluster.executor(executor_index(cluster, w.executor_id)).lease(w.lease_id);
      for (auto& s : view->workers) total += s.invocations;
    }
    CHECK(total == 3);
  }
}

TEST_CASE("failover leases again once every worker is gone") {
  bench::LocalCluster cluster({.executor_cores = {1, 1}});
  Invoker inv(cluster.invoker_options());
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 64});
  auto in = inv.input(64);
  auto out = inv.output(64);
  auto first = executor_index(cluster, inv.workers()[0].executor_id);
  cluster.stop_executor(first);
  CHECK(eventually([&] { return inv.live_workers() == 0; }));
  auto r = inv.invoke_with_failover(echo, in, 4, out);
  CHECK(r.result.status == ResultStatus::ok);
  CHECK(inv.live_workers() == 1);
  CHECK(inv.workers().back().executor_id == cluster.executor(1 - first).executor_id());
}
