#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/manager/server.hpp"

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int) { stop_requested.store(true); }

}  // namespace

int main(int argc, char** argv) {
  using namespace spotfaas;
  CLI::App app{"spotfaas resource manager"};
  app.require_subcommand(1);
  auto* serve = app.add_subcommand("serve", "accept clients and executors");
  serve->set_config("--config", "", "key=value file mirroring the flags");

  std::string listen = "tcp:127.0.0.1:7000";
  std::uint32_t heartbeat_ms = 500;
  std::uint32_t dead_after = 3;
  double oversub = 1.0;
  std::string rates;
  serve->add_option("--listen", listen, "transport address, tcp:HOST:PORT or loop:NAME")->capture_default_str();
  serve->add_option("--heartbeat-ms", heartbeat_ms, "executor heartbeat interval")->capture_default_str()->check(
      CLI::PositiveNumber);
  serve->add_option("--dead-after", dead_after, "missed heartbeats before an executor is dead")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  serve->add_option("--oversub", oversub, "oversubscription factor, >= 1")->capture_default_str()->check(
      CLI::Range(1.0, 1e6));
  serve->add_option("--rates", rates, "Ca,Cc,Ch in dollars per GB-s, s, s");
  CLI11_PARSE(app, argc, argv);

  try {
    manager::ManagerOptions o;
    o.listen_address = listen;
    o.config.heartbeat = std::chrono::milliseconds(heartbeat_ms);
    o.config.dead_after_missed = dead_after;
    o.config.oversubscription = oversub;
    if (!rates.empty()) o.rates = manager::Rates::parse(rates);
    manager::ManagerServer server(o);
    server.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening " << server.address() << std::endl;
    while (!stop_requested.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  } catch (const Error& e) {
    std::cerr << "manager: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
