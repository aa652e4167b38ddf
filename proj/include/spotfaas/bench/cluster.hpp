#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spotfaas/client/invoker.hpp"
#include "spotfaas/executor/daemon.hpp"
#include "spotfaas/manager/server.hpp"

namespace spotfaas::bench {

struct ClusterOptions {
  transport::Backend backend = transport::Backend::loopback;
  std::vector<std::uint32_t> executor_cores = {4};
  std::uint32_t executor_memory_mb = 8192;
  executor::SandboxKind sandbox = executor::SandboxKind::inline_threads;
  std::string sandbox_binary{};
  std::uint32_t hot_timeout_ms = 100;
  std::chrono::seconds idle_timeout{30};
  std::chrono::milliseconds flush_interval{1000};
  manager::ManagerConfig manager{};
  manager::Rates rates{};
  std::shared_ptr<manager::TokenVerifier> verifier{};
};

// Manager and executors in this process, wired over the chosen backend.
class LocalCluster {
 public:
  explicit LocalCluster(ClusterOptions options = {});
  ~LocalCluster();

  manager::ManagerServer& manager() noexcept { return *manager_; }
  executor::ExecutorDaemon& executor(std::size_t i) { return *executors_.at(i); }
  std::size_t executor_count() const noexcept { return executors_.size(); }
  void stop_executor(std::size_t i);

  const ClusterOptions& options() const noexcept { return options_; }
  std::string listen_address() const;
  client::InvokerOptions invoker_options(bool background_progress = true) const;

 private:
  ClusterOptions options_;
  std::unique_ptr<manager::ManagerServer> manager_;
  std::vector<std::unique_ptr<executor::ExecutorDaemon>> executors_;
};

}  // namespace spotfaas::bench
