#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/executor/daemon.hpp"

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int) { stop_requested.store(true); }

}  // namespace

int main(int argc, char** argv) {
  using namespace spotfaas;
  CLI::App app{"spotfaas spot executor"};
  app.require_subcommand(1);
  auto* serve = app.add_subcommand("serve", "offer cores to the manager and host sandboxes");

  executor::ExecutorOptions o;
  o.listen_address = "tcp:127.0.0.1:0";
  std::uint32_t idle_s = 30;
  std::uint32_t flush_ms = 1000;
  std::string sandbox = "process";
  serve->add_option("--manager", o.manager_address, "manager address")->required();
  serve->add_option("--listen", o.listen_address, "address for client allocations")->capture_default_str();
  serve->add_option("--cores", o.cores, "cores offered")->capture_default_str()->check(CLI::PositiveNumber);
  serve->add_option("--memory-mb", o.memory_mb, "memory offered")->capture_default_str()->check(CLI::PositiveNumber);
  serve->add_option("--hot-timeout-ms", o.default_hot_timeout_ms, "default hot polling window")->capture_default_str();
  serve->add_option("--idle-timeout-s", idle_s, "idle sandbox reclaim")->capture_default_str();
  serve->add_option("--flush-ms", flush_ms, "billing flush interval")->capture_default_str()->check(CLI::PositiveNumber);
  serve->add_option("--sandbox", sandbox, "process or inline")
      ->capture_default_str()
      ->check(CLI::IsMember({"process", "inline"}));
  serve->add_option("--sandbox-binary", o.sandbox_binary, "sandbox host program");
  CLI11_PARSE(app, argc, argv);

  try {
    o.idle_timeout = std::chrono::seconds(idle_s);
    o.flush_interval = std::chrono::milliseconds(flush_ms);
    o.sandbox = executor::parse_sandbox_kind(sandbox);
    executor::ExecutorDaemon daemon(o);
    daemon.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "executor " << daemon.executor_id() << " listening " << daemon.address() << std::endl;
    while (!stop_requested.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    daemon.stop();
  } catch (const Error& e) {
    std::cerr << "executor: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
