#include <cstdio>
#include <cstring>
#include <sstream>
#include <thread>

#include "child_process.hpp"
#include "doctest.h"
#include "spotfaas/bench/records.hpp"
#include "spotfaas/client/invoker.hpp"
#include "spotfaas/functions/registry.hpp"
#include "spotfaas/manager/server.hpp"

using namespace spotfaas;
using namespace std::chrono_literals;
using spotfaas::testing::ChildProcess;

namespace {

enum Fn : std::uint16_t { echo = 0, sleep_ms = 3 };

Errc error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc{};
}

template <typename Pred>
bool eventually(Pred p, std::chrono::milliseconds limit = 5000ms) {
  auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (p()) return true;
    std::this_thread::sleep_for(2ms);
  }
  return p();
}

struct ExecutorProcess {
  std::unique_ptr<ChildProcess> proc;
  std::uint64_t id = 0;
};

ExecutorProcess start_executor(const std::string& manager, std::uint32_t cores, const char* sandbox = "inline") {
  ExecutorProcess e;
  e.proc = std::make_unique<ChildProcess>(std::vector<std::string>{
      SPOTFAAS_EXECUTOR_BINARY, "serve", "--manager", manager, "--cores", std::to_string(cores), "--memory-mb", "2048",
      "--sandbox", sandbox});
  auto line = e.proc->read_line();
  REQUIRE(line.has_value());
  REQUIRE(line->starts_with("executor "));
  e.id = std::stoull(line->substr(9));
  return e;
}

client::InvokerOptions invoker_options(const std::string& manager) {
  client::InvokerOptions o;
  o.manager_address = manager;
  return o;
}

void put_u32(std::span<std::byte> b, std::uint32_t v) { std::memcpy(b.data(), &v, 4); }

}  // namespace

TEST_CASE("a killed executor process fails in-flight work and is marked dead within three heartbeats") {
  manager::ManagerOptions mo;
  mo.listen_address = "tcp:127.0.0.1:0";
  manager::ManagerServer mgr(mo);
  mgr.start();
  auto exec = start_executor(mgr.address(), 2);

  client::Invoker inv(invoker_options(mgr.address()));
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 1024, .hint = client::ModeHint::warm_ok});
  auto in = inv.input(64);
  auto out = inv.output(64);
  std::memset(in.bytes().data(), 0x5A, 64);
  REQUIRE(inv.submit(echo, in, 64, out).get().status == protocol::ResultStatus::ok);

  put_u32(in.bytes(), 5000);
  auto slow = inv.submit(sleep_ms, in, 4, out);
  std::this_thread::sleep_for(20ms);
  auto killed_at = std::chrono::steady_clock::now();
  exec.proc->signal(SIGKILL);
  REQUIRE(exec.proc->wait(5s).has_value());

  auto err = error_of([&] { slow.get(client::WaitMode::blocking); });
  CHECK(err == Errc::disconnected);
  CHECK(std::chrono::steady_clock::now() - killed_at < 1s);

  REQUIRE(eventually([&] { return mgr.executor(exec.id)->status == manager::ExecutorStatus::dead; }, 3s));
  auto dead_at = *mgr.executor(exec.id)->dead_at;
  auto detection = std::chrono::duration<double>(dead_at - killed_at).count();
  MESSAGE("dead-marking " << detection << " s after the kill");
  CHECK(detection <= 1.5);
  mgr.stop();
}

TEST_CASE("failover re-leases on a surviving executor process") {
  manager::ManagerOptions mo;
  mo.listen_address = "tcp:127.0.0.1:0";
  manager::ManagerServer mgr(mo);
  mgr.start();
  auto a = start_executor(mgr.address(), 1);
  auto b = start_executor(mgr.address(), 1);

  client::Invoker inv(invoker_options(mgr.address()));
  inv.allocate(functions::testing_submission(), {.workers = 1, .max_payload = 1024, .hint = client::ModeHint::warm_ok});
  auto first = inv.workers().at(0).executor_id;
  auto& victim = first == a.id ? a : b;
  victim.proc->signal(SIGKILL);
  victim.proc->wait(5s);
  REQUIRE(eventually([&] { return inv.live_workers() == 0; }));

  auto in = inv.input(32);
  auto out = inv.output(32);
  std::memset(in.bytes().data(), 0x33, 32);
  auto r = inv.invoke_with_failover(echo, in, 32, out);
  CHECK(r.result.status == protocol::ResultStatus::ok);
  CHECK(std::memcmp(in.bytes().data(), out.bytes().data(), 32) == 0);
  std::uint64_t serving = 0;
  for (const auto& w : inv.workers())
    if (w.alive) serving = w.executor_id;
  CHECK(serving != first);
  mgr.stop();
}

TEST_CASE("manager and executor tools serve invocations and exit cleanly") {
  ChildProcess mgr({SPOTFAAS_MANAGER_BINARY, "serve", "--listen", "tcp:127.0.0.1:0", "--heartbeat-ms", "200"});
  auto addr = mgr.await_address("listening");
  auto exec = start_executor(addr, 2, "process");
  {
    client::Invoker inv(invoker_options(addr));
    inv.allocate(functions::demo_code_object_submission(SPOTFAAS_DEMO_OBJECT),
                 {.workers = 2, .max_payload = 4096, .hint = client::ModeHint::always_hot});
    auto in = inv.input(4096);
    auto out = inv.output(4096);
    for (std::size_t i = 0; i < 4096; ++i) in.bytes()[i] = static_cast<std::byte>(i * 7);
    for (int i = 0; i < 50; ++i) {
      auto r = inv.submit(echo, in, 4096, out).get();
      REQUIRE(r.status == protocol::ResultStatus::ok);
      REQUIRE(std::memcmp(in.bytes().data(), out.bytes().data(), 4096) == 0);
    }
    inv.deallocate();
  }
  exec.proc->signal(SIGTERM);
  CHECK(exec.proc->wait(10s) == std::optional<int>(0));
  mgr.signal(SIGTERM);
  CHECK(mgr.wait(10s) == std::optional<int>(0));
}

TEST_CASE("manager tool reads a key=value config file") {
  auto path = std::string("/tmp/spotfaas_manager_") + std::to_string(::getpid()) + ".conf";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("listen=tcp:127.0.0.1:0\nheartbeat-ms=250\noversub=1.5\nrates=1e-5,1e-4,5e-5\n", f);
    std::fclose(f);
  }
  ChildProcess mgr({SPOTFAAS_MANAGER_BINARY, "serve", "--config", path});
  auto addr = mgr.await_address("listening");
  CHECK(addr.starts_with("tcp:127.0.0.1:"));
  mgr.signal(SIGTERM);
  CHECK(mgr.wait(10s) == std::optional<int>(0));
  std::remove(path.c_str());
}

TEST_CASE("offload tool prints a plan as key=value lines") {
  auto path = std::string("/tmp/spotfaas_samples_") + std::to_string(::getpid()) + ".txt";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    for (int i = 0; i < 40; ++i) {
      std::fprintf(f, "64 %.9f\n", 20e-6 + (i % 3) * 1e-7);
      std::fprintf(f, "1048576 %.9f\n", 1.1e-3 + (i % 3) * 1e-6);
    }
    std::fclose(f);
  }
  ChildProcess tool({SPOTFAAS_OFFLOAD_BINARY, "plan", "--t-local", "1", "--t-inv", "0.5", "--samples", path,
                     "--data-bytes", "4096", "--workers", "4", "--tasks", "100"});
  auto text = tool.drain();
  CHECK(tool.wait(5s) == std::optional<int>(0));
  bench::Record r;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    r.set(line.substr(0, eq), line.substr(eq + 1));
  }
  CHECK(r.number("n_local") + r.number("n_remote") == 100);
  CHECK(r.number("L") == doctest::Approx(20.1e-6).epsilon(0.01));
  CHECK(r.number("predicted_makespan") < 0.1);
  std::remove(path.c_str());
}

TEST_CASE("bench tool emits parseable output and reports usage errors") {
  ChildProcess ok({SPOTFAAS_BENCH_BINARY, "offload", "--demo", "mmm", "--problem-size", "32"});
  auto text = ok.drain();
  CHECK(ok.wait(30s) == std::optional<int>(0));
  auto parsed = bench::BenchOutput::parse(text);
  REQUIRE(parsed.records.size() == 1);
  CHECK(parsed.summary.get("correct") == std::optional<std::string>("true"));

  ChildProcess bad({SPOTFAAS_BENCH_BINARY, "parallel", "--workers", "0"});
  bad.drain();
  auto code = bad.wait(30s);
  REQUIRE(code.has_value());
  CHECK(*code != 0);
}
